"""Configurable conv/dense feature capture network.

The default network is 3 conv-ReLU-meanpool blocks, a flatten, and one dense
layer to the embedding dimension. Every operation is per-sample (no batch
statistics), so embedding row i depends only on input row i.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from ..errors import ConfigError, NonFiniteError, ShapeMismatchError
from .tensor import Tensor, as_tensor, avgpool2, conv2d, matmul, relu, reshape, tmean

GOLDEN = 0x9E3779B97F4A7C15


def _mix64(x: int) -> int:
    """splitmix64 finalizer; avalanche-mixes a 64-bit word."""
    x = (x + GOLDEN) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


def make_rng(*words: int) -> np.random.Generator:
    """Philox counter-based generator keyed by a stream of integer words.

    The words are avalanche-folded into the 128-bit Philox key, so distinct
    streams get well-separated keys and identical words give identical
    streams on every platform.
    """
    k0, k1 = 0, len(words)
    for w in words:
        k0 = _mix64(k0 ^ (int(w) & 0xFFFFFFFFFFFFFFFF))
        k1 = _mix64(k1 ^ k0)
    key = np.array([k0, k1], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class ConvBlockSpec:
    out_channels: int
    kernel: int = 3
    stride: int = 1
    pool: bool = True

    @property
    def pad(self) -> int:
        return self.kernel // 2


@dataclass(frozen=True)
class BackboneSpec:
    """Layer plan of the feature capture network."""

    in_channels: int = 3
    image_hw: tuple[int, int] = (32, 32)
    blocks: tuple[ConvBlockSpec, ...] = (
        ConvBlockSpec(8),
        ConvBlockSpec(16),
        ConvBlockSpec(32),
    )
    head: str = "flatten"  # "flatten" | "gap"
    dense: tuple[int, ...] = (64,)
    # added to every input value before the first conv; unit-range rasters
    # arrive centered, which keeps first-layer units alive at init
    input_offset: float = 0.0

    def __post_init__(self):
        if self.head not in ("flatten", "gap"):
            raise ConfigError(f"unknown head {self.head!r}")
        if not self.blocks and self.head == "gap":
            raise ConfigError("gap head requires at least one conv block")
        self.feature_plan()  # validate pooling parity eagerly

    def feature_plan(self) -> list[tuple[int, int, int]]:
        """(channels, h, w) after each block."""
        c, (h, w) = self.in_channels, self.image_hw
        plan = []
        for blk in self.blocks:
            h = (h + 2 * blk.pad - blk.kernel) // blk.stride + 1
            w = (w + 2 * blk.pad - blk.kernel) // blk.stride + 1
            if h < 1 or w < 1:
                raise ConfigError(f"conv block {blk} shrinks the image to nothing")
            if blk.pool:
                if h % 2 or w % 2:
                    raise ConfigError(f"pooling needs even dims, got {h}x{w} before pool")
                h //= 2
                w //= 2
            c = blk.out_channels
            plan.append((c, h, w))
        return plan

    @property
    def embedding_dim(self) -> int:
        if self.dense:
            return self.dense[-1]
        plan = self.feature_plan()
        c, h, w = plan[-1]
        return c if self.head == "gap" else c * h * w

    def head_width(self) -> int:
        c, (h, w) = self.in_channels, self.image_hw
        if self.blocks:
            c, h, w = self.feature_plan()[-1]
        return c if self.head == "gap" else c * h * w

    def param_shapes(self) -> list[tuple[int, ...]]:
        shapes: list[tuple[int, ...]] = []
        c = self.in_channels
        for blk in self.blocks:
            shapes.append((blk.out_channels, c, blk.kernel, blk.kernel))
            shapes.append((blk.out_channels,))
            c = blk.out_channels
        width = self.head_width()
        for out in self.dense:
            shapes.append((width, out))
            shapes.append((out,))
            width = out
        return shapes

    def param_count(self) -> int:
        return sum(int(np.prod(s)) for s in self.param_shapes())

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["image_hw"] = list(self.image_hw)
        d["blocks"] = [asdict(b) for b in self.blocks]
        d["dense"] = list(self.dense)
        return d

    @staticmethod
    def from_json_dict(d: dict) -> "BackboneSpec":
        return BackboneSpec(
            in_channels=int(d["in_channels"]),
            image_hw=tuple(d["image_hw"]),
            blocks=tuple(ConvBlockSpec(**b) for b in d["blocks"]),
            head=d["head"],
            dense=tuple(d["dense"]),
            input_offset=float(d.get("input_offset", 0.0)),
        )


@dataclass
class BackboneParams:
    """Spec plus the parameter tensors, in canonical (W, b) layer order."""

    spec: BackboneSpec
    params: list[Tensor] = field(default_factory=list)

    @property
    def embedding_dim(self) -> int:
        return self.spec.embedding_dim

    def set_requires_grad(self, flag: bool) -> None:
        for p in self.params:
            p.requires_grad = flag

    def copy(self) -> "BackboneParams":
        clones = [Tensor(p.values.copy(), requires_grad=p.requires_grad) for p in self.params]
        return BackboneParams(self.spec, clones)


def init_backbone(spec: BackboneSpec, seed: int = 0) -> BackboneParams:
    """Glorot-uniform weights in [-s, s], s = sqrt(6/(fan_in+fan_out)); zero biases."""
    rng = make_rng(seed, 0xB0DE)
    params: list[Tensor] = []
    for shape in spec.param_shapes():
        if len(shape) == 1:
            params.append(Tensor(np.zeros(shape), requires_grad=True))
            continue
        if len(shape) == 4:
            oc, ic, k, _ = shape
            fan_in, fan_out = ic * k * k, oc * k * k
        else:
            fan_in, fan_out = shape
        s = np.sqrt(6.0 / (fan_in + fan_out))
        params.append(Tensor(rng.uniform(-s, s, size=shape), requires_grad=True))
    return BackboneParams(spec, params)


def forward_backbone(params: BackboneParams, batch) -> Tensor:
    """Embed a (n, c, h, w) batch into (n, d) feature rows.

    Pure in (params, batch); records the reverse graph whenever the batch or
    any parameter has requires_grad set.
    """
    x = as_tensor(batch)
    spec = params.spec
    if x.ndim != 4:
        raise ShapeMismatchError(f"batch must be (n, c, h, w), got shape {x.shape}")
    n, c, h, w = x.shape
    if n < 1:
        raise ShapeMismatchError("empty batch")
    if c != spec.in_channels or (h, w) != tuple(spec.image_hw):
        raise ShapeMismatchError(
            f"batch is ({c},{h},{w}) per sample but the backbone expects "
            f"({spec.in_channels},{spec.image_hw[0]},{spec.image_hw[1]})"
        )

    idx = 0
    out = x if spec.input_offset == 0.0 else x + spec.input_offset
    for blk in spec.blocks:
        w_t, b_t = params.params[idx], params.params[idx + 1]
        idx += 2
        out = relu(conv2d(out, w_t, b_t, stride=blk.stride, pad=blk.pad))
        if blk.pool:
            out = avgpool2(out)

    if spec.head == "gap":
        out = tmean(out, axis=(2, 3))
    else:
        out = reshape(out, (n, -1))

    for li in range(len(spec.dense)):
        w_t, b_t = params.params[idx], params.params[idx + 1]
        idx += 2
        out = matmul(out, w_t) + b_t
        if li < len(spec.dense) - 1:
            out = relu(out)

    if not np.all(np.isfinite(out.values)):
        raise NonFiniteError("backbone forward produced non-finite embeddings")
    return out


def default_backbone_spec(image_hw: tuple[int, int] = (32, 32), embedding_dim: int = 64,
                          channels: tuple[int, int, int] = (8, 16, 32)) -> BackboneSpec:
    return BackboneSpec(
        in_channels=3,
        image_hw=image_hw,
        blocks=tuple(ConvBlockSpec(c) for c in channels),
        head="flatten",
        dense=(embedding_dim,),
        input_offset=-0.5,
    )
