"""Instance-segmentation evaluation: aggregated Jaccard index, pixel-level
F1, object-level F1, per-pixel prediction entropy, and batch reports."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, ValidationError
from .mask_core import as_binary_mask, as_label_map, load_labelmap


def _instance_sizes(lm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ids, sizes = np.unique(lm[lm > 0], return_counts=True)
    return ids.astype(np.int64), sizes.astype(np.int64)


def _pairwise_intersections(gt: np.ndarray, pred: np.ndarray) -> dict[tuple[int, int], int]:
    """Pixel counts of every overlapping (gt id, pred id) pair via a joint
    histogram over the pixels where both maps are foreground."""
    both = (gt > 0) & (pred > 0)
    if not both.any():
        return {}
    g = gt[both].astype(np.int64)
    p = pred[both].astype(np.int64)
    key = g * (int(pred.max()) + 1) + p
    uniq, counts = np.unique(key, return_counts=True)
    stride = int(pred.max()) + 1
    return {
        (int(k // stride), int(k % stride)): int(c) for k, c in zip(uniq.tolist(), counts.tolist())
    }


def aggregated_jaccard_index(pred: np.ndarray, gt: np.ndarray) -> float:
    """Object-level Jaccard aggregation.

    Ground-truth instances are visited in ascending id order; each one
    greedily claims the not-yet-used overlapping prediction with the highest
    IoU (smaller pred id wins exact ties) and contributes the pair's
    intersection and union pixel counts to the running totals. Ground truths
    with no available overlap and predictions never claimed contribute their
    own size to the union only. Two empty maps score 1.0, exactly one empty
    scores 0.0.
    """
    pred = as_label_map(pred)
    gt = as_label_map(gt)
    if pred.shape != gt.shape:
        raise DimensionMismatchError("aggregated_jaccard_index", pred.shape, gt.shape)
    gt_ids, gt_sizes = _instance_sizes(gt)
    pred_ids, pred_sizes = _instance_sizes(pred)
    if gt_ids.size == 0 and pred_ids.size == 0:
        return 1.0
    if gt_ids.size == 0 or pred_ids.size == 0:
        return 0.0
    size_of_pred = dict(zip(pred_ids.tolist(), pred_sizes.tolist()))
    overlaps: dict[int, list[tuple[int, int]]] = {}
    for (gid, pid), i in _pairwise_intersections(gt, pred).items():
        overlaps.setdefault(gid, []).append((pid, i))
    c_total = 0
    u_total = 0
    used: set[int] = set()
    for gid, gsize in zip(gt_ids.tolist(), gt_sizes.tolist()):
        best_pid = -1
        best_i = 0
        best_u = 1
        for pid, i in sorted(overlaps.get(gid, [])):
            if pid in used:
                continue
            u = gsize + size_of_pred[pid] - i
            # exact fraction comparison: i/u > best_i/best_u
            if i * best_u > best_i * u:
                best_pid = pid
                best_i = i
                best_u = u
        if best_pid < 0:
            u_total += gsize
        else:
            used.add(best_pid)
            c_total += best_i
            u_total += best_u
    for pid, psize in zip(pred_ids.tolist(), pred_sizes.tolist()):
        if pid not in used:
            u_total += psize
    return c_total / u_total


def pixel_f1(pred: np.ndarray, gt: np.ndarray) -> float:
    """2|P & G| / (|P| + |G|); two empty masks score 1.0."""
    pred = as_binary_mask(pred)
    gt = as_binary_mask(gt)
    if pred.shape != gt.shape:
        raise DimensionMismatchError("pixel_f1", pred.shape, gt.shape)
    p = int(pred.sum())
    g = int(gt.sum())
    if p == 0 and g == 0:
        return 1.0
    inter = int((pred & gt).sum())
    return 2 * inter / (p + g)


def object_f1(pred: np.ndarray, gt: np.ndarray, iou_threshold: float = 0.5) -> float:
    """Detection-style F1 over instances.

    Pairs at or above the IoU threshold are matched greedily one-to-one in
    descending IoU (ties resolved by gt id then pred id); matches are true
    positives, leftovers false positives/negatives.
    """
    if not 0 < iou_threshold <= 1:
        raise ValidationError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    pred = as_label_map(pred)
    gt = as_label_map(gt)
    if pred.shape != gt.shape:
        raise DimensionMismatchError("object_f1", pred.shape, gt.shape)
    gt_ids, gt_sizes = _instance_sizes(gt)
    pred_ids, pred_sizes = _instance_sizes(pred)
    if gt_ids.size == 0 and pred_ids.size == 0:
        return 1.0
    gt_size = dict(zip(gt_ids.tolist(), gt_sizes.tolist()))
    pred_size = dict(zip(pred_ids.tolist(), pred_sizes.tolist()))
    candidates = []
    for (gid, pid), i in _pairwise_intersections(gt, pred).items():
        iou = i / (gt_size[gid] + pred_size[pid] - i)
        if iou >= iou_threshold:
            candidates.append((iou, gid, pid))
    candidates.sort(key=lambda e: (-e[0], e[1], e[2]))
    used_g: set[int] = set()
    used_p: set[int] = set()
    tp = 0
    for _, gid, pid in candidates:
        if gid in used_g or pid in used_p:
            continue
        used_g.add(gid)
        used_p.add(pid)
        tp += 1
    fp = int(pred_ids.size) - tp
    fn = int(gt_ids.size) - tp
    return 2 * tp / (2 * tp + fp + fn)


def entropy_map(p: np.ndarray) -> np.ndarray:
    """Per-pixel Shannon entropy (natural log) of an HxWxC probability map.

    Channels must be probabilities in [0, 1] summing to 1 within 1e-6 at
    every pixel; 0 * ln 0 counts as 0.
    """
    a = np.asarray(p, dtype=np.float64)
    if a.ndim != 3 or a.shape[2] < 2:
        raise ValidationError(f"expected HxWxC probabilities with C >= 2, got shape {a.shape}")
    if a.min() < 0.0 or a.max() > 1.0:
        raise ValidationError("probabilities must lie in [0, 1]")
    sums = a.sum(axis=2)
    worst = float(np.abs(sums - 1.0).max())
    if worst > 1e-6:
        raise ValidationError(f"channel probabilities must sum to 1 (max deviation {worst:.3g})")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(a > 0.0, a * np.log(a), 0.0)
    return -terms.sum(axis=2)


@dataclass(frozen=True)
class MetricRow:
    filename: str
    aji: float
    pixel_f1: float
    object_f1: float


@dataclass
class MetricReport:
    rows: list[MetricRow] = field(default_factory=list)
    mean: dict[str, float] = field(default_factory=dict)
    std: dict[str, float] = field(default_factory=dict)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("filename,aji,pixel_f1,object_f1\n")
            for r in self.rows:
                fh.write(f"{r.filename},{r.aji:.6f},{r.pixel_f1:.6f},{r.object_f1:.6f}\n")
            fh.write(
                f"MEAN,{self.mean['aji']:.6f},{self.mean['pixel_f1']:.6f},"
                f"{self.mean['object_f1']:.6f}\n"
            )
            fh.write(
                f"STD,{self.std['aji']:.6f},{self.std['pixel_f1']:.6f},"
                f"{self.std['object_f1']:.6f}\n"
            )


def _mean_std(values: list[float]) -> tuple[float, float]:
    n = len(values)
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


def _score_pair(args: tuple[str, str, str, float]) -> MetricRow:
    name, pred_path, gt_path, iou_threshold = args
    pred = load_labelmap(pred_path)
    gt = load_labelmap(gt_path)
    if pred.shape != gt.shape:
        raise DimensionMismatchError(f"evaluate_set: {name}", pred.shape, gt.shape)
    return MetricRow(
        filename=name,
        aji=aggregated_jaccard_index(pred, gt),
        pixel_f1=pixel_f1(pred > 0, gt > 0),
        object_f1=object_f1(pred, gt),
    )


def evaluate_set(
    pred_dir,
    gt_dir,
    iou_threshold: float = 0.5,
    jobs: int = 1,
    pairs: list[tuple[str, str, str]] | None = None,
) -> MetricReport:
    """Score every prediction/ground-truth pair and aggregate.

    Pairing is by exact filename unless explicit (name, pred_path, gt_path)
    triples are given. Unpaired files abort the run. Rows are ordered by
    filename; means use compensated summation and std is the sample standard
    deviation (0 for a single image).
    """
    if pairs is None:
        pred_files = sorted(f for f in os.listdir(pred_dir) if f.lower().endswith(".png"))
        gt_files = sorted(f for f in os.listdir(gt_dir) if f.lower().endswith(".png"))
        orphans_pred = sorted(set(pred_files) - set(gt_files))
        orphans_gt = sorted(set(gt_files) - set(pred_files))
        if orphans_pred or orphans_gt:
            raise ValidationError(
                "unpaired files: "
                + ", ".join(
                    [f"{f} (prediction only)" for f in orphans_pred]
                    + [f"{f} (ground truth only)" for f in orphans_gt]
                )
            )
        if not pred_files:
            raise ValidationError(f"no .png files to evaluate in {pred_dir} and {gt_dir}")
        pairs = [
            (name, os.path.join(pred_dir, name), os.path.join(gt_dir, name))
            for name in pred_files
        ]
    else:
        if not pairs:
            raise ValidationError("empty evaluation pairing")
        pairs = sorted(pairs, key=lambda e: e[0])

    work = [(name, p, g, iou_threshold) for name, p, g in pairs]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_score_pair, work))
    else:
        rows = [_score_pair(w) for w in work]

    report = MetricReport(rows=rows)
    for key in ("aji", "pixel_f1", "object_f1"):
        mean, std = _mean_std([getattr(r, key) for r in rows])
        report.mean[key] = mean
        report.std[key] = std
    return report
