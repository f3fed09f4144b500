"""End-to-end mask cleanup and patch preprocessing.

Two jobs live here:

* the auxiliary-object removal chain: threshold the synthesized image,
  subtract the annotated mask, and inpaint whatever remains so unannotated
  objects dissolve into background;
* the training-patch pipeline: intensity normalization, seeded random
  cropping with rotation/scaling/flipping, sparse-patch filtering, and
  foreground inversion.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import cv2
import numpy as np

from . import binarize
from .errors import DimensionMismatchError, ValidationError
from .inpaint import InpaintConfig, fast_marching_inpaint
from .mask_core import (
    as_binary_mask,
    as_label_map,
    count_objects,
    mask_difference,
    mask_union,
    relabel_sequential,
    rgb_to_gray,
)

ROTATIONS = (0, 90, 180, 270)
FLIPS = ("none", "horizontal", "vertical")


@dataclass(frozen=True)
class AugmentationSpec:
    """Per-patch augmentation choices, drawn independently for each patch
    from a splittable seeded stream (patch i is reproducible on its own)."""

    rotations: tuple[int, ...] = (0,)
    flips: tuple[str, ...] = ("none",)
    scale_range: tuple[float, float] = (1.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        if not self.rotations or any(r not in ROTATIONS for r in self.rotations):
            raise ValidationError(f"rotations must be a non-empty subset of {ROTATIONS}")
        if not self.flips or any(f not in FLIPS for f in self.flips):
            raise ValidationError(f"flips must be a non-empty subset of {FLIPS}")
        lo, hi = self.scale_range
        if not (0 < lo <= hi):
            raise ValidationError(f"scale_range must satisfy 0 < lo <= hi, got {self.scale_range}")


@dataclass(frozen=True)
class Provenance:
    source: str
    index: int
    offset_y: int
    offset_x: int
    scale: float
    rotation: int
    flip: str

    def describe(self) -> str:
        return f"scale={self.scale:.6f};rot={self.rotation};flip={self.flip}"


@dataclass
class PatchRecord:
    image: np.ndarray
    labels: np.ndarray
    provenance: Provenance
    object_count: int


def _luminance(img: np.ndarray) -> np.ndarray:
    a = np.asarray(img)
    if a.ndim == 3:
        return rgb_to_gray(a)
    return a


def compute_aux_mask(
    s_raw: np.ndarray, m: np.ndarray, polarity: str = binarize.DARK_FOREGROUND
) -> np.ndarray:
    """Mask of thresholded objects that carry no annotation:
    (otsu(s_raw) | m) & ~m. Never intersects m by construction."""
    gray = _luminance(s_raw)
    m = as_binary_mask(m)
    if gray.shape != m.shape:
        raise DimensionMismatchError("compute_aux_mask", gray.shape, m.shape)
    segmented = binarize.otsu_segment(gray, polarity)
    return mask_difference(mask_union(segmented, m), m)


def nuclei_inpaint(
    s_raw: np.ndarray,
    m: np.ndarray,
    cfg: InpaintConfig = InpaintConfig(),
    polarity: str = binarize.DARK_FOREGROUND,
) -> tuple[np.ndarray, np.ndarray]:
    """Erase unannotated objects from a synthesized image.

    Thresholds the image, keeps only components outside the annotation mask
    ``m``, and fills those pixels from the surrounding background. Color
    images are thresholded on luminance and filled per channel with the
    shared mask. Returns the cleaned image and the auxiliary mask actually
    filled, for auditing.
    """
    aux = compute_aux_mask(s_raw, m, polarity)
    a = np.asarray(s_raw)
    if a.ndim == 3:
        channels = [fast_marching_inpaint(a[:, :, c], aux, cfg) for c in range(a.shape[2])]
        return np.stack(channels, axis=2), aux
    return fast_marching_inpaint(a, aux, cfg), aux


def normalize_image(raw: np.ndarray) -> np.ndarray:
    """Affine min-max rescale of any numeric 2-D array to [0, 255] with
    half-up rounding. Constant input maps to all-zero."""
    a = np.asarray(raw, dtype=np.float64)
    if a.ndim != 2 or a.size == 0:
        raise ValidationError(f"expected a non-empty 2-D array, got shape {a.shape}")
    lo = a.min()
    hi = a.max()
    if hi == lo:
        return np.zeros(a.shape, np.uint8)
    scaled = (a - lo) * (255.0 / (hi - lo))
    return np.floor(scaled + 0.5).astype(np.uint8)


def invert_foreground(img: np.ndarray) -> np.ndarray:
    """255 - p for every pixel (involution)."""
    a = np.asarray(img)
    if a.dtype != np.uint8:
        a = _luminance(a) if a.ndim == 3 else np.asarray(a, dtype=np.uint8)
    return (255 - a.astype(np.int16)).astype(np.uint8)


def _rng_for_patch(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def _resize_pair(img: np.ndarray, labels: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray]:
    img_out = cv2.resize(img, (size, size), interpolation=cv2.INTER_LINEAR)
    lab_out = cv2.resize(
        labels.astype(np.uint16), (size, size), interpolation=cv2.INTER_NEAREST
    ).astype(np.int32)
    return img_out, lab_out


def extract_patches(
    img: np.ndarray,
    labels: np.ndarray,
    size: int,
    count: int,
    aug: AugmentationSpec = AugmentationSpec(),
    source: str = "",
) -> Iterator[PatchRecord]:
    """Stream ``count`` seeded random crops of ``size`` x ``size``.

    Each patch picks its own scale/offset/rotation/flip from an independent
    substream of ``aug.seed``, so the sequence is reproducible and any patch
    can be regenerated in isolation. Images are resampled bilinearly under
    scaling, label maps with nearest neighbor; crop label ids are
    re-compacted to 1..K.
    """
    img = np.asarray(img)
    labels = as_label_map(labels)
    if img.shape[:2] != labels.shape:
        raise DimensionMismatchError("extract_patches", img.shape[:2], labels.shape)
    if size < 1:
        raise ValidationError(f"patch size must be >= 1, got {size}")
    if count < 1:
        raise ValidationError(f"patch count must be >= 1, got {count}")
    h, w = labels.shape
    lo = aug.scale_range[0]
    worst_window = int(round(size / lo))
    if worst_window > min(h, w):
        raise ValidationError(
            f"patch size {size} at minimum scale {lo} needs a {worst_window}px window, "
            f"but the source is only {h}x{w}"
        )

    def gen() -> Iterator[PatchRecord]:
        for i in range(count):
            rng = _rng_for_patch(aug.seed, i)
            s_lo, s_hi = aug.scale_range
            scale = s_lo if s_lo == s_hi else float(rng.uniform(s_lo, s_hi))
            window = size if scale == 1.0 else max(1, int(round(size / scale)))
            y0 = int(rng.integers(0, h - window + 1))
            x0 = int(rng.integers(0, w - window + 1))
            img_crop = img[y0 : y0 + window, x0 : x0 + window].copy()
            lab_crop = labels[y0 : y0 + window, x0 : x0 + window].copy()
            if window != size:
                img_crop, lab_crop = _resize_pair(img_crop, lab_crop, size)
            rotation = aug.rotations[int(rng.integers(len(aug.rotations)))]
            flip = aug.flips[int(rng.integers(len(aug.flips)))]
            if rotation:
                img_crop = np.rot90(img_crop, k=rotation // 90)
                lab_crop = np.rot90(lab_crop, k=rotation // 90)
            if flip == "horizontal":
                img_crop = np.fliplr(img_crop)
                lab_crop = np.fliplr(lab_crop)
            elif flip == "vertical":
                img_crop = np.flipud(img_crop)
                lab_crop = np.flipud(lab_crop)
            lab_crop = relabel_sequential(np.ascontiguousarray(lab_crop))
            yield PatchRecord(
                image=np.ascontiguousarray(img_crop),
                labels=lab_crop,
                provenance=Provenance(source, i, y0, x0, scale, rotation, flip),
                object_count=count_objects(lab_crop),
            )

    return gen()


def filter_patches(patches: Iterable[PatchRecord], min_objects: int = 3) -> Iterator[PatchRecord]:
    """Drop patches with fewer than ``min_objects`` instances, keeping order."""
    for rec in patches:
        if rec.object_count >= min_objects:
            yield rec
