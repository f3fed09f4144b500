"""Integer shape algebra for the adaptation-branch architectures.

The discriminator stacks and the pooling/flatten bookkeeping of the
adaptation branches are embedded here as data, so a downstream trainer can
verify its wiring against executable expected shapes instead of a table in
a document. No numerics, only C x H x W arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ValidationError

CONV = "conv"
RESIDUAL_PAIR = "residual_pair"
ADAPTIVE_AVG_POOL = "adaptive_avg_pool"
FLATTEN = "flatten"
LAYER_KINDS = (CONV, RESIDUAL_PAIR, ADAPTIVE_AVG_POOL, FLATTEN)


@dataclass(frozen=True)
class TensorShape:
    channels: int
    height: int
    width: int

    def __post_init__(self):
        if self.channels < 1 or self.height < 1 or self.width < 1:
            raise ValidationError(f"tensor dims must be >= 1, got {self}")

    def __str__(self):
        return f"{self.channels}x{self.height}x{self.width}"


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    k: int = 1
    s: int = 1
    p: int = 0
    out_channels: int = 0
    target: tuple[int, int] | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValidationError(f"unknown layer kind {self.kind!r}")
        if self.kind in (CONV, RESIDUAL_PAIR):
            if self.k < 1 or self.s < 1 or self.p < 0:
                raise ValidationError(
                    f"conv hyperparameters must satisfy k>=1, s>=1, p>=0, got "
                    f"k={self.k}, s={self.s}, p={self.p}"
                )
        if self.kind == ADAPTIVE_AVG_POOL and (
            self.target is None or self.target[0] < 1 or self.target[1] < 1
        ):
            raise ValidationError("adaptive_avg_pool needs a positive target HxW")


def conv_output_shape(shape: TensorShape, layer: LayerSpec) -> TensorShape:
    """floor((dim + 2p - k) / s) + 1 on both spatial dims; channels become
    the layer's out_channels."""
    if layer.kind != CONV:
        raise ValidationError(f"conv_output_shape needs a conv layer, got {layer.kind!r}")
    if layer.out_channels < 1:
        raise ValidationError("conv layer must set out_channels >= 1")
    oh = (shape.height + 2 * layer.p - layer.k) // layer.s + 1
    ow = (shape.width + 2 * layer.p - layer.k) // layer.s + 1
    if oh < 1 or ow < 1:
        raise ValidationError(
            f"conv k={layer.k} s={layer.s} p={layer.p} collapses {shape} to "
            f"{oh}x{ow}; output dims must be >= 1"
        )
    return TensorShape(layer.out_channels, oh, ow)


def _step(shape: TensorShape, layer: LayerSpec) -> TensorShape:
    if layer.kind == CONV:
        return conv_output_shape(shape, layer)
    if layer.kind == RESIDUAL_PAIR:
        # a residual pair must be shape-preserving; verify its internal convs are
        inner = LayerSpec(CONV, k=layer.k, s=layer.s, p=layer.p, out_channels=shape.channels)
        once = conv_output_shape(shape, inner)
        if once != shape:
            raise ValidationError(
                f"residual pair k={layer.k} s={layer.s} p={layer.p} does not "
                f"preserve {shape} (conv gives {once})"
            )
        return shape
    if layer.kind == ADAPTIVE_AVG_POOL:
        th, tw = layer.target
        return TensorShape(shape.channels, th, tw)
    # flatten: one long channel vector
    return TensorShape(shape.channels * shape.height * shape.width, 1, 1)


def chain_shapes(shape: TensorShape, layers: list[LayerSpec]) -> list[TensorShape]:
    """Cumulative output shapes of a layer chain; the first invalid step is
    reported with its index."""
    out = []
    cur = shape
    for i, layer in enumerate(layers):
        try:
            cur = _step(cur, layer)
        except ValidationError as exc:
            raise ValidationError(f"step {i} ({layer.kind}): {exc}") from exc
        out.append(cur)
    return out


@dataclass(frozen=True)
class ChainRow:
    name: str
    layer: LayerSpec
    expected: TensorShape


@dataclass(frozen=True)
class RowCheck:
    name: str
    expected: TensorShape
    computed: TensorShape | None
    ok: bool


@dataclass
class ChainReport:
    chain: str
    rows: list[RowCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.rows)


def validate_chain(name: str, input_shape: TensorShape, rows: list[ChainRow]) -> ChainReport:
    """Recompute a chain and compare each row against its expected shape.

    A failing row does not stop the walk; later rows are checked against the
    shapes that actually come out, so one wrong stride surfaces as a run of
    mismatches instead of an exception.
    """
    report = ChainReport(chain=name)
    cur = input_shape
    for row in rows:
        try:
            cur = _step(cur, row.layer)
            computed = cur
        except ValidationError:
            computed = None
        report.rows.append(
            RowCheck(row.name, row.expected, computed, computed == row.expected)
        )
        if computed is None:
            break
    return report


def _ts(c, h, w):
    return TensorShape(c, h, w)


_DIMG_INPUT = _ts(256, 8, 8)
_DIMG_ROWS = [
    ChainRow("Conv1", LayerSpec(CONV, k=3, s=1, p=1, out_channels=256), _ts(256, 8, 8)),
    ChainRow("Conv2", LayerSpec(CONV, k=3, s=1, p=1, out_channels=512), _ts(512, 8, 8)),
    ChainRow("Conv3", LayerSpec(CONV, k=3, s=1, p=1, out_channels=512), _ts(512, 8, 8)),
    ChainRow("Conv4", LayerSpec(CONV, k=1, s=1, p=0, out_channels=2), _ts(2, 8, 8)),
]

_DSEM_INPUT = _ts(2, 256, 256)
_DSEM_ROWS = [
    ChainRow("C1", LayerSpec(CONV, k=7, s=2, p=3, out_channels=64), _ts(64, 128, 128)),
    ChainRow("R11-R12", LayerSpec(RESIDUAL_PAIR, k=3, s=1, p=1), _ts(64, 128, 128)),
    ChainRow("C2", LayerSpec(CONV, k=5, s=2, p=2, out_channels=128), _ts(128, 64, 64)),
    ChainRow("R21-R22", LayerSpec(RESIDUAL_PAIR, k=3, s=1, p=1), _ts(128, 64, 64)),
    ChainRow("C3", LayerSpec(CONV, k=5, s=2, p=2, out_channels=256), _ts(256, 32, 32)),
    ChainRow("R31-R32", LayerSpec(RESIDUAL_PAIR, k=3, s=1, p=1), _ts(256, 32, 32)),
    ChainRow("C4", LayerSpec(CONV, k=5, s=2, p=2, out_channels=512), _ts(512, 16, 16)),
    ChainRow("R41-R42", LayerSpec(RESIDUAL_PAIR, k=3, s=1, p=1), _ts(512, 16, 16)),
    ChainRow("C5", LayerSpec(CONV, k=1, s=1, p=0, out_channels=2), _ts(2, 16, 16)),
]

# image-level branch: FPN feature maps are average-pooled to 8x8 before the
# discriminator; representative 64x64 level shown
_IMG_POOL_INPUT = _ts(256, 64, 64)
_IMG_POOL_ROWS = [
    ChainRow("AvgPool-8x8", LayerSpec(ADAPTIVE_AVG_POOL, target=(8, 8)), _ts(256, 8, 8)),
]

# instance branch: 256x14x14 mask feature pooled to 2x2 then flattened to a
# 1024-long vector that sums with the box-branch feature
_INS_FLATTEN_INPUT = _ts(256, 14, 14)
_INS_FLATTEN_ROWS = [
    ChainRow("AvgPool-2x2", LayerSpec(ADAPTIVE_AVG_POOL, target=(2, 2)), _ts(256, 2, 2)),
    ChainRow("Flatten", LayerSpec(FLATTEN), _ts(1024, 1, 1)),
]

BUILTIN_CHAINS: dict[str, tuple[TensorShape, list[ChainRow]]] = {
    "DIMG": (_DIMG_INPUT, _DIMG_ROWS),
    "DSEM": (_DSEM_INPUT, _DSEM_ROWS),
    "IMG_POOL": (_IMG_POOL_INPUT, _IMG_POOL_ROWS),
    "INS_FLATTEN": (_INS_FLATTEN_INPUT, _INS_FLATTEN_ROWS),
}


def validate_builtin(name: str) -> ChainReport:
    """Recompute one of the embedded architecture chains row by row."""
    key = name.upper()
    if key not in BUILTIN_CHAINS:
        raise ValidationError(
            f"unknown builtin chain {name!r}; choose from {sorted(BUILTIN_CHAINS)}"
        )
    input_shape, rows = BUILTIN_CHAINS[key]
    return validate_chain(key, input_shape, rows)
