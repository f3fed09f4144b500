"""Otsu thresholding over the 256-bin intensity histogram."""

from __future__ import annotations

import numpy as np

from .errors import DegenerateHistogramError, ValidationError
from .mask_core import as_gray_image

BRIGHT_FOREGROUND = "bright_foreground"
DARK_FOREGROUND = "dark_foreground"
POLARITIES = (BRIGHT_FOREGROUND, DARK_FOREGROUND)


def otsu_threshold(img: np.ndarray) -> int:
    """Threshold t in [0, 255] maximizing between-class variance of the
    {<= t, > t} split; the smallest t wins ties.

    Raises DegenerateHistogramError for a constant image (single occupied
    bin), where no threshold separates anything.
    """
    img = as_gray_image(img)
    hist = np.bincount(img.ravel(), minlength=256).astype(np.float64)
    if np.count_nonzero(hist) < 2:
        raise DegenerateHistogramError(
            "image histogram has a single occupied bin; no threshold exists"
        )
    n = hist.sum()
    levels = np.arange(256, dtype=np.float64)
    n0 = np.cumsum(hist)
    s0 = np.cumsum(hist * levels)
    n1 = n - n0
    s1 = s0[-1] - s0
    valid = (n0 > 0) & (n1 > 0)
    var_between = np.full(256, -1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = s0 / n0
        mu1 = s1 / n1
        var_between[valid] = (n0 * n1 / (n * n))[valid] * (mu0 - mu1)[valid] ** 2
    # np.argmax returns the first maximizer, i.e. the smallest tied t
    return int(np.argmax(var_between))


def apply_threshold(img: np.ndarray, t: int, polarity: str = BRIGHT_FOREGROUND) -> np.ndarray:
    """Binarize at threshold t: bright_foreground marks pixels > t,
    dark_foreground marks pixels <= t."""
    img = as_gray_image(img)
    if not 0 <= int(t) <= 255:
        raise ValidationError(f"threshold must lie in [0, 255], got {t}")
    if polarity not in POLARITIES:
        raise ValidationError(f"polarity must be one of {POLARITIES}, got {polarity!r}")
    if polarity == BRIGHT_FOREGROUND:
        return img > t
    return img <= t


def otsu_segment(img: np.ndarray, polarity: str = BRIGHT_FOREGROUND) -> np.ndarray:
    return apply_threshold(img, otsu_threshold(img), polarity)
