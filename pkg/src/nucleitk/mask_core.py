"""Core raster types and operations.

Rasters are plain 2-D numpy arrays with fixed dtype conventions:

* gray image  -- uint8, intensities 0..255
* binary mask -- bool
* label map   -- int32, 0 is background, positive ids are instances
                 (ids stay inside the 16-bit range so maps round-trip
                 through 16-bit PNGs)

All operations are pure functions; nothing here mutates its inputs.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    BitDepthError,
    DimensionMismatchError,
    MalformedImageError,
    MissingFileError,
    TooManyInstancesError,
    ValidationError,
)

MAX_INSTANCE_ID = 65535


def as_gray_image(arr) -> np.ndarray:
    a = np.asarray(arr)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValidationError(f"gray image must be 2-D and non-empty, got shape {a.shape}")
    if a.dtype != np.uint8:
        if not np.issubdtype(a.dtype, np.integer):
            raise ValidationError(f"gray image must be integer-typed, got {a.dtype}")
        if a.min() < 0 or a.max() > 255:
            raise ValidationError("gray image values must lie in [0, 255]")
        a = a.astype(np.uint8)
    return a


def as_binary_mask(arr) -> np.ndarray:
    a = np.asarray(arr)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValidationError(f"binary mask must be 2-D and non-empty, got shape {a.shape}")
    if a.dtype != np.bool_:
        a = a.astype(bool)
    return a


def as_label_map(arr) -> np.ndarray:
    a = np.asarray(arr)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValidationError(f"label map must be 2-D and non-empty, got shape {a.shape}")
    if not np.issubdtype(a.dtype, np.integer):
        raise ValidationError(f"label map must be integer-typed, got {a.dtype}")
    if a.size and a.min() < 0:
        raise ValidationError("label map ids must be non-negative")
    if a.size and a.max() > MAX_INSTANCE_ID:
        raise ValidationError(f"label map ids must be <= {MAX_INSTANCE_ID}")
    return a.astype(np.int32)


def rgb_to_gray(rgb: np.ndarray) -> np.ndarray:
    """Integer luminance (BT.601 weights 299/587/114, rounded half up)."""
    a = np.asarray(rgb)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValidationError(f"expected an HxWx3 color array, got shape {a.shape}")
    r = a[:, :, 0].astype(np.int64)
    g = a[:, :, 1].astype(np.int64)
    b = a[:, :, 2].astype(np.int64)
    return ((299 * r + 587 * g + 114 * b + 500) // 1000).astype(np.uint8)


def connected_components(mask: np.ndarray, connectivity: int = 8) -> np.ndarray:
    """Label connected components of a boolean mask.

    Single raster scan with union-find; output ids are 1..K in row-major
    first-encounter order, so the labeling is deterministic. Background
    stays 0.
    """
    mask = as_binary_mask(mask)
    if connectivity not in (4, 8):
        raise ValidationError(f"connectivity must be 4 or 8, got {connectivity}")
    h, w = mask.shape
    flat = mask.ravel().tolist()
    fg = np.flatnonzero(mask.ravel()).tolist()
    provisional = [0] * (h * w)
    parent: list[int] = [0]  # parent[0] unused; provisional labels start at 1

    def find(i: int) -> int:
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:  # path compression
            parent[i], i = root, parent[i]
        return root

    next_label = 1
    for idx in fg:
        y, x = divmod(idx, w)
        # already-scanned neighbors: W and N, plus NW/NE for 8-connectivity
        candidates = []
        if x > 0:
            candidates.append(idx - 1)
        if y > 0:
            candidates.append(idx - w)
            if connectivity == 8:
                if x > 0:
                    candidates.append(idx - w - 1)
                if x < w - 1:
                    candidates.append(idx - w + 1)
        label = 0
        for n_idx in candidates:
            if not flat[n_idx]:
                continue
            lb = provisional[n_idx]
            if label == 0:
                label = lb
            elif lb != label:
                ra, rb = find(label), find(lb)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
                if lb < label:
                    label = lb
        if label == 0:
            parent.append(next_label)
            label = next_label
            next_label += 1
        provisional[idx] = label

    # second pass: collapse equivalences and renumber in first-encounter order
    out = np.zeros(h * w, dtype=np.int32)
    remap: dict[int, int] = {}
    for idx in fg:
        root = find(provisional[idx])
        fid = remap.get(root)
        if fid is None:
            fid = len(remap) + 1
            if fid > MAX_INSTANCE_ID:
                raise TooManyInstancesError(
                    f"more than {MAX_INSTANCE_ID} connected components"
                )
            remap[root] = fid
        out[idx] = fid
    return out.reshape(h, w)


def mask_union(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = as_binary_mask(a)
    b = as_binary_mask(b)
    if a.shape != b.shape:
        raise DimensionMismatchError("mask_union", a.shape, b.shape)
    return a | b


def mask_difference(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = as_binary_mask(a)
    b = as_binary_mask(b)
    if a.shape != b.shape:
        raise DimensionMismatchError("mask_difference", a.shape, b.shape)
    return a & ~b


def labelmap_to_binary(lm: np.ndarray) -> np.ndarray:
    return as_label_map(lm) > 0


def count_objects(lm: np.ndarray) -> int:
    lm = as_label_map(lm)
    return int(np.count_nonzero(np.unique(lm) > 0))


def relabel_sequential(lm: np.ndarray) -> np.ndarray:
    """Re-compact positive ids to 1..K in row-major first-encounter order."""
    lm = as_label_map(lm)
    flat = lm.ravel()
    ids, first_pos = np.unique(flat, return_index=True)
    keep = ids > 0
    ids, first_pos = ids[keep], first_pos[keep]
    order = np.argsort(first_pos, kind="stable")
    lut = np.zeros(int(ids.max()) + 1 if ids.size else 1, dtype=np.int32)
    lut[ids[order]] = np.arange(1, ids.size + 1, dtype=np.int32)
    return lut[flat].reshape(lm.shape)


def _open_image(path) -> Image.Image:
    if not os.path.exists(path):
        raise MissingFileError(f"no such file: {path}")
    try:
        img = Image.open(path)
        img.load()
    except UnidentifiedImageError as exc:
        raise MalformedImageError(f"not a decodable image: {path}") from exc
    except OSError as exc:
        raise MalformedImageError(f"failed to decode image: {path}") from exc
    return img


_16BIT_MODES = ("I", "I;16", "I;16B", "I;16L", "I;16N")


def load_gray(path) -> np.ndarray:
    """Load an 8-bit grayscale PNG; color inputs are folded to luminance."""
    img = _open_image(path)
    if img.mode in _16BIT_MODES or img.mode == "F":
        raise BitDepthError(f"{path}: expected 8-bit image, got mode {img.mode}")
    if img.mode == "L":
        return np.asarray(img, dtype=np.uint8)
    if img.mode == "P":
        img = img.convert("RGB")
    if img.mode == "RGBA":
        img = img.convert("RGB")
    if img.mode == "RGB":
        return rgb_to_gray(np.asarray(img, dtype=np.uint8))
    raise MalformedImageError(f"{path}: unsupported image mode {img.mode}")


def load_image(path) -> np.ndarray:
    """Like load_gray but keeps color: returns HxW (gray) or HxWx3 (RGB)."""
    img = _open_image(path)
    if img.mode in _16BIT_MODES or img.mode == "F":
        raise BitDepthError(f"{path}: expected 8-bit image, got mode {img.mode}")
    if img.mode == "L":
        return np.asarray(img, dtype=np.uint8)
    if img.mode in ("P", "RGBA"):
        img = img.convert("RGB")
    if img.mode == "RGB":
        return np.asarray(img, dtype=np.uint8)
    raise MalformedImageError(f"{path}: unsupported image mode {img.mode}")


def load_raw(path) -> np.ndarray:
    """Load a single-channel image at native bit depth (8- or 16-bit); color
    inputs are folded to luminance. Meant for pre-normalization sources."""
    img = _open_image(path)
    if img.mode == "L":
        return np.asarray(img, dtype=np.uint8)
    if img.mode in _16BIT_MODES:
        return np.asarray(img).astype(np.uint16)
    if img.mode in ("P", "RGBA"):
        img = img.convert("RGB")
    if img.mode == "RGB":
        return rgb_to_gray(np.asarray(img, dtype=np.uint8))
    raise MalformedImageError(f"{path}: unsupported image mode {img.mode}")


def save_gray(img: np.ndarray, path) -> None:
    img = as_gray_image(img)
    Image.fromarray(img, mode="L").save(path, format="PNG")


def save_image(img: np.ndarray, path) -> None:
    a = np.asarray(img)
    if a.ndim == 2:
        save_gray(a, path)
        return
    if a.ndim == 3 and a.shape[2] == 3 and a.dtype == np.uint8:
        Image.fromarray(a, mode="RGB").save(path, format="PNG")
        return
    raise ValidationError(f"cannot save array of shape {a.shape} dtype {a.dtype} as image")


def load_labelmap(path) -> np.ndarray:
    """Load a 16-bit single-channel PNG as an instance label map."""
    img = _open_image(path)
    if img.mode not in _16BIT_MODES:
        raise BitDepthError(f"{path}: expected 16-bit label map, got mode {img.mode}")
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise MalformedImageError(f"{path}: label map must be single-channel")
    return as_label_map(arr.astype(np.int64))


def save_labelmap(lm: np.ndarray, path) -> None:
    lm = as_label_map(lm)
    Image.fromarray(lm.astype(np.uint16)).save(path, format="PNG")


def load_mask(path) -> np.ndarray:
    """Load an 8-bit {0, 255} PNG as a boolean mask."""
    img = _open_image(path)
    if img.mode in _16BIT_MODES or img.mode == "F":
        raise BitDepthError(f"{path}: expected 8-bit mask, got mode {img.mode}")
    if img.mode != "L":
        raise MalformedImageError(f"{path}: mask must be single-channel 8-bit, got mode {img.mode}")
    arr = np.asarray(img, dtype=np.uint8)
    bad = np.setdiff1d(np.unique(arr), [0, 255])
    if bad.size:
        raise MalformedImageError(f"{path}: mask values must be 0 or 255, found {bad[:8].tolist()}")
    return arr == 255


def save_mask(mask: np.ndarray, path) -> None:
    mask = as_binary_mask(mask)
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(path, format="PNG")
