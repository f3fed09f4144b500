"""Fast-marching inpainting.

Unknown (hole) pixels are filled in increasing distance from the hole
boundary: a priority queue ordered by arrival time T (discrete eikonal
solution over the 4-neighborhood, unit speed) drives the front, and each
pixel is filled with a normalized weighted average of the already-known
pixels inside a Euclidean ``radius``. Weights are
``1/distance * 1/(1 + |dT|)``, optionally multiplied by a direction term
aligning samples with the front normal.

The march is inherently sequential per image, so the hot loop is compiled
with numba; everything stays deterministic (heap ties break on row-major
pixel index).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DimensionMismatchError, HoleCoversImageError, ValidationError
from .mask_core import as_binary_mask, as_gray_image

_KNOWN, _BAND, _INSIDE = 0, 1, 2


@dataclass(frozen=True)
class InpaintConfig:
    """Parameters of the weighted fill.

    radius: neighborhood radius in pixels for the averaging window.
    use_gradient_term: weigh samples by alignment with the front normal;
        off by default, which makes every filled value a plain convex
        combination of known samples.
    """

    radius: int = 3
    use_gradient_term: bool = False

    def __post_init__(self):
        if self.radius < 1:
            raise ValidationError(f"inpaint radius must be >= 1, got {self.radius}")


@njit(cache=True)
def _heap_push(heap_t, heap_i, n, t, i):
    heap_t[n] = t
    heap_i[n] = i
    j = n
    while j > 0:
        p = (j - 1) >> 1
        if heap_t[j] < heap_t[p] or (heap_t[j] == heap_t[p] and heap_i[j] < heap_i[p]):
            heap_t[j], heap_t[p] = heap_t[p], heap_t[j]
            heap_i[j], heap_i[p] = heap_i[p], heap_i[j]
            j = p
        else:
            break
    return n + 1


@njit(cache=True)
def _heap_pop(heap_t, heap_i, n):
    t = heap_t[0]
    i = heap_i[0]
    n -= 1
    heap_t[0] = heap_t[n]
    heap_i[0] = heap_i[n]
    j = 0
    while True:
        l = 2 * j + 1
        r = l + 1
        s = j
        if l < n and (heap_t[l] < heap_t[s] or (heap_t[l] == heap_t[s] and heap_i[l] < heap_i[s])):
            s = l
        if r < n and (heap_t[r] < heap_t[s] or (heap_t[r] == heap_t[s] and heap_i[r] < heap_i[s])):
            s = r
        if s == j:
            break
        heap_t[j], heap_t[s] = heap_t[s], heap_t[j]
        heap_i[j], heap_i[s] = heap_i[s], heap_i[j]
        j = s
    return t, i, n


@njit(cache=True)
def _solve_arrival(y, x, T, state, h, w):
    """Two-neighbor quadratic eikonal update from finalized 4-neighbors."""
    a = np.inf
    if x > 0 and state[y, x - 1] == 0 and T[y, x - 1] < a:
        a = T[y, x - 1]
    if x < w - 1 and state[y, x + 1] == 0 and T[y, x + 1] < a:
        a = T[y, x + 1]
    b = np.inf
    if y > 0 and state[y - 1, x] == 0 and T[y - 1, x] < b:
        b = T[y - 1, x]
    if y < h - 1 and state[y + 1, x] == 0 and T[y + 1, x] < b:
        b = T[y + 1, x]
    if a < np.inf and b < np.inf:
        d = a - b
        if d < 1.0 and d > -1.0:
            return 0.5 * (a + b + np.sqrt(2.0 - d * d))
        if a < b:
            return a + 1.0
        return b + 1.0
    if a < np.inf:
        return a + 1.0
    if b < np.inf:
        return b + 1.0
    return np.inf


@njit(cache=True)
def _march(values, hole, radius, use_gradient, fill):
    h, w = hole.shape
    T = np.zeros((h, w), np.float64)
    state = np.zeros((h, w), np.uint8)
    out = values.copy()

    n_hole = 0
    for y in range(h):
        for x in range(w):
            if hole[y, x]:
                state[y, x] = _INSIDE
                T[y, x] = np.inf
                n_hole += 1
    if n_hole == 0:
        return out, T, 0

    # sampling offsets inside the Euclidean radius, center excluded
    r = radius
    count = 0
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if (dy != 0 or dx != 0) and dy * dy + dx * dx <= r * r:
                count += 1
    offs_y = np.empty(count, np.int64)
    offs_x = np.empty(count, np.int64)
    offs_invd = np.empty(count, np.float64)
    k = 0
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if (dy != 0 or dx != 0) and dy * dy + dx * dx <= r * r:
                offs_y[k] = dy
                offs_x[k] = dx
                offs_invd[k] = 1.0 / np.sqrt(dy * dy + dx * dx)
                k += 1

    cap = 5 * n_hole + 8
    heap_t = np.empty(cap, np.float64)
    heap_i = np.empty(cap, np.int64)
    heap_n = 0

    # initial band: hole pixels touching the known region
    for y in range(h):
        for x in range(w):
            if state[y, x] != _INSIDE:
                continue
            touches = (
                (x > 0 and state[y, x - 1] == _KNOWN)
                or (x < w - 1 and state[y, x + 1] == _KNOWN)
                or (y > 0 and state[y - 1, x] == _KNOWN)
                or (y < h - 1 and state[y + 1, x] == _KNOWN)
            )
            if touches:
                t = _solve_arrival(y, x, T, state, h, w)
                T[y, x] = t
                state[y, x] = _BAND
                heap_n = _heap_push(heap_t, heap_i, heap_n, t, y * w + x)

    violations = 0
    last_t = 0.0
    while heap_n > 0:
        t, idx, heap_n = _heap_pop(heap_t, heap_i, heap_n)
        y = idx // w
        x = idx % w
        if state[y, x] == _KNOWN or t > T[y, x]:
            continue  # stale entry superseded by a better arrival time
        if t < last_t:
            violations += 1
        last_t = t

        if fill:
            gty = 0.0
            gtx = 0.0
            if use_gradient:
                left_known = x > 0 and state[y, x - 1] == _KNOWN
                right_known = x < w - 1 and state[y, x + 1] == _KNOWN
                if left_known and right_known:
                    gtx = 0.5 * (T[y, x + 1] - T[y, x - 1])
                elif right_known:
                    gtx = T[y, x + 1] - t
                elif left_known:
                    gtx = t - T[y, x - 1]
                up_known = y > 0 and state[y - 1, x] == _KNOWN
                down_known = y < h - 1 and state[y + 1, x] == _KNOWN
                if up_known and down_known:
                    gty = 0.5 * (T[y + 1, x] - T[y - 1, x])
                elif down_known:
                    gty = T[y + 1, x] - t
                elif up_known:
                    gty = t - T[y - 1, x]
            num = 0.0
            den = 0.0
            for k in range(count):
                ny = y + offs_y[k]
                nx = x + offs_x[k]
                if ny < 0 or ny >= h or nx < 0 or nx >= w:
                    continue
                if state[ny, nx] != _KNOWN:
                    continue
                wgt = offs_invd[k] / (1.0 + (t - T[ny, nx] if t >= T[ny, nx] else T[ny, nx] - t))
                if use_gradient:
                    d = offs_y[k] * gty + offs_x[k] * gtx
                    if d < 0.0:
                        d = -d
                    d *= offs_invd[k]
                    if d < 1e-6:
                        d = 1e-6
                    wgt *= d
                num += wgt * out[ny, nx]
                den += wgt
            if den > 0.0:
                out[y, x] = num / den

        state[y, x] = _KNOWN
        T[y, x] = t

        for step in range(4):
            if step == 0:
                ny, nx = y, x - 1
            elif step == 1:
                ny, nx = y, x + 1
            elif step == 2:
                ny, nx = y - 1, x
            else:
                ny, nx = y + 1, x
            if ny < 0 or ny >= h or nx < 0 or nx >= w or state[ny, nx] == _KNOWN:
                continue
            tq = _solve_arrival(ny, nx, T, state, h, w)
            if tq < T[ny, nx]:
                T[ny, nx] = tq
                state[ny, nx] = _BAND
                heap_n = _heap_push(heap_t, heap_i, heap_n, tq, ny * w + nx)

    return out, T, violations


def fast_marching_inpaint(
    img: np.ndarray, hole: np.ndarray, cfg: InpaintConfig = InpaintConfig()
) -> np.ndarray:
    """Fill ``hole`` pixels of ``img`` by marching inward from the boundary.

    Pixels outside the hole are returned unchanged, bit-exact. Identical
    inputs give identical outputs. The hole may not cover the whole image.
    """
    img = as_gray_image(img)
    hole = as_binary_mask(hole)
    if img.shape != hole.shape:
        raise DimensionMismatchError("fast_marching_inpaint", img.shape, hole.shape)
    if not hole.any():
        return img.copy()
    if hole.all():
        raise HoleCoversImageError("hole covers the entire image; nothing to propagate from")
    filled, _, violations = _march(
        img.astype(np.float64), hole, cfg.radius, cfg.use_gradient_term, True
    )
    assert violations == 0, "fast-marching front advanced with decreasing arrival time"
    out = img.copy()
    out[hole] = np.clip(np.floor(filled[hole] + 0.5), 0, 255).astype(np.uint8)
    return out


def eikonal_distance(hole: np.ndarray) -> np.ndarray:
    """Arrival-time field of the fast-marching front.

    0 on known pixels; inside the hole, the unit-speed discrete eikonal
    solution over the 4-neighborhood.
    """
    hole = as_binary_mask(hole)
    if not hole.any():
        return np.zeros(hole.shape, np.float64)
    if hole.all():
        raise HoleCoversImageError("hole covers the entire image; no boundary to march from")
    _, T, violations = _march(np.zeros(hole.shape, np.float64), hole, 1, False, False)
    assert violations == 0, "fast-marching front advanced with decreasing arrival time"
    return T
