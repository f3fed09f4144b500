"""Scalar training-schedule math: per-task trade-off weights driven by
domain-discriminator confidence, the sigmoid ramp on the adversarial loss
weight, the combined loss, and the stepwise learning-rate policy.

Everything is a stateless pure function a trainer can query per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError

DEFAULT_BETA = 2.0
DEFAULT_BASE_LR = 0.002
DEFAULT_FINAL_LR = 0.0002
DEFAULT_WARMUP_STEPS = 500


@dataclass(frozen=True)
class DiscriminatorReadout:
    """Per-level probabilities that the current feature map belongs to the
    source domain. A saturated discriminator (exactly 0 or 1) is rejected:
    that is a training pathology the caller should see, not clamp away."""

    p_s_img: float = 0.5
    p_s_sem: float = 0.5
    p_s_ins: float = 0.5

    def __post_init__(self):
        for name in ("p_s_img", "p_s_sem", "p_s_ins"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValidationError(f"{name} must lie strictly in (0, 1), got {v}")


@dataclass(frozen=True)
class TaskLosses:
    l_rpn: float = 0.0
    l_det: float = 0.0
    l_sem_seg: float = 0.0
    l_img_da: float = 0.0
    l_sem_da: float = 0.0
    l_ins_da: float = 0.0

    def __post_init__(self):
        for name in ("l_rpn", "l_det", "l_sem_seg", "l_img_da", "l_sem_da", "l_ins_da"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValidationError(f"{name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class LossWeights:
    alpha_img: float
    alpha_ins: float
    alpha_sem: float
    alpha_da: float
    beta: float


def task_weight(p_s: float, beta: float = DEFAULT_BETA) -> float:
    """min((1 - p_s) / p_s, beta): down-weight a task when its features are
    confidently source-like, capped so a collapsing discriminator cannot
    blow the weight up."""
    if not 0.0 < p_s < 1.0:
        raise ValidationError(f"p_s must lie strictly in (0, 1), got {p_s}")
    if beta <= 0:
        raise ValidationError(f"beta must be > 0, got {beta}")
    return min((1.0 - p_s) / p_s, beta)


def adversarial_weight(t: float) -> float:
    """Sigmoid ramp 2 / (1 + exp(-10 t)) - 1 over training progress t in
    [0, 1]; starts at exactly 0 and rises toward (but never reaches) 1."""
    if not 0.0 <= t <= 1.0:
        raise ValidationError(f"training progress t must lie in [0, 1], got {t}")
    return 2.0 / (1.0 + math.exp(-10.0 * t)) - 1.0


def combine_losses(
    losses: TaskLosses,
    readout: DiscriminatorReadout,
    t: float,
    beta: float = DEFAULT_BETA,
) -> tuple[float, LossWeights]:
    """Weighted total loss and the weights used.

    Each task loss is scaled by the trade-off weight of its discriminator
    level; the three domain-classification losses share the ramped
    adversarial weight.
    """
    weights = LossWeights(
        alpha_img=task_weight(readout.p_s_img, beta),
        alpha_ins=task_weight(readout.p_s_ins, beta),
        alpha_sem=task_weight(readout.p_s_sem, beta),
        alpha_da=adversarial_weight(t),
        beta=beta,
    )
    total = (
        weights.alpha_img * losses.l_rpn
        + weights.alpha_ins * losses.l_det
        + weights.alpha_sem * losses.l_sem_seg
        + weights.alpha_da * (losses.l_img_da + losses.l_sem_da + losses.l_ins_da)
    )
    return total, weights


def learning_rate(
    step: int,
    total_steps: int,
    base: float = DEFAULT_BASE_LR,
    final: float = DEFAULT_FINAL_LR,
    warmup_steps: int = DEFAULT_WARMUP_STEPS,
) -> float:
    """Piecewise rate: linear warmup from base/warmup_steps up to base, flat
    base until 3/4 of training, then flat ``final``."""
    if total_steps < 1:
        raise ValidationError(f"total_steps must be >= 1, got {total_steps}")
    if not 0 <= step < total_steps:
        raise ValidationError(f"step must lie in [0, {total_steps}), got {step}")
    if warmup_steps < 0 or 4 * warmup_steps >= 3 * total_steps:
        raise ValidationError(
            f"warmup_steps must satisfy 0 <= warmup < 0.75 * total, got "
            f"{warmup_steps} of {total_steps}"
        )
    if 4 * step >= 3 * total_steps:
        return final
    if step >= warmup_steps:
        return base
    start = base / warmup_steps
    return start + (base - start) * (step / warmup_steps)


def parse_readout_trace(lines) -> list[DiscriminatorReadout]:
    """Parse CSV lines of per-step readouts: p_s_img,p_s_sem,p_s_ins.

    A header row is allowed. Malformed or out-of-range rows raise with their
    1-based line number.
    """
    rows: list[DiscriminatorReadout] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if lineno == 1 and line.lower().replace(" ", "") in (
            "p_s_img,p_s_sem,p_s_ins",
            "p_s_img,p_s_sem,p_s_ins,",
        ):
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ValidationError(f"trace line {lineno}: expected 3 comma-separated values")
        try:
            vals = [float(x) for x in parts]
        except ValueError as exc:
            raise ValidationError(f"trace line {lineno}: non-numeric value") from exc
        try:
            rows.append(DiscriminatorReadout(*vals))
        except ValidationError as exc:
            raise ValidationError(f"trace line {lineno}: {exc}") from exc
    return rows


def emit_schedule(
    total_steps: int,
    beta: float = DEFAULT_BETA,
    trace: list[DiscriminatorReadout] | None = None,
    base: float = DEFAULT_BASE_LR,
    final: float = DEFAULT_FINAL_LR,
    warmup_steps: int = DEFAULT_WARMUP_STEPS,
) -> list[tuple[int, float, float, float, float, float]]:
    """One (step, alpha_img, alpha_ins, alpha_sem, alpha_da, lr) row per
    step. Without a trace, every level reads p_s = 0.5 (unit weights).

    For short schedules the warmup is clamped to the longest length the
    learning-rate policy allows, so small audit runs still emit.
    """
    if total_steps < 1:
        raise ValidationError(f"total_steps must be >= 1, got {total_steps}")
    if trace is not None and len(trace) != total_steps:
        raise ValidationError(
            f"trace has {len(trace)} rows but total_steps is {total_steps}"
        )
    effective_warmup = min(warmup_steps, max(0, (3 * total_steps - 1) // 4))
    rows = []
    for step in range(total_steps):
        readout = trace[step] if trace is not None else DiscriminatorReadout()
        rows.append(
            (
                step,
                task_weight(readout.p_s_img, beta),
                task_weight(readout.p_s_ins, beta),
                task_weight(readout.p_s_sem, beta),
                adversarial_weight(step / total_steps),
                learning_rate(step, total_steps, base, final, effective_warmup),
            )
        )
    return rows
