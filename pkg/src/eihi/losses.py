"""Training objective: contrastive term over minimal learning elements plus
off-diagonal covariance penalties.

All functions accept diffcore Tensors or plain arrays and return Tensors, so
they compose into the recorded graph during training and double as plain
calculators in tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore.tensor import (
    Tensor,
    as_tensor,
    concat,
    l2_normalize,
    log,
    matmul,
    mul,
    select_columns,
    softmax,
    sub,
    tmean,
    transpose2d,
    tsum,
)
from .errors import ContractError, ShapeMismatchError


@dataclass(frozen=True)
class LossConfig:
    temperature: float = 0.01
    info_nce_weight: float = 1.0
    neg_cov_mode: str = "concat"  # "concat" | "mean"
    include_covariance: bool = True

    def __post_init__(self):
        if self.temperature <= 0:
            raise ContractError(f"temperature must be positive, got {self.temperature}")
        if self.info_nce_weight < 0:
            raise ContractError("info_nce_weight must be non-negative")
        if self.neg_cov_mode not in ("concat", "mean"):
            raise ContractError(f"unknown neg_cov_mode {self.neg_cov_mode!r}")


def _check_batch_pair(a: Tensor, b: Tensor, what: str) -> None:
    if a.ndim != 2 or b.ndim != 2 or a.shape != b.shape:
        raise ShapeMismatchError(f"{what}: shapes {a.shape} and {b.shape} must match as (n, d)")


def cosine_similarities(z_a, z_b) -> Tensor:
    """Row-wise cosine similarity of two (n, d) batches -> (n,) values."""
    z_a, z_b = as_tensor(z_a), as_tensor(z_b)
    _check_batch_pair(z_a, z_b, "cosine_similarities")
    na = l2_normalize(z_a, axis=-1)
    nb = l2_normalize(z_b, axis=-1)
    return tsum(mul(na, nb), axis=1)


def info_nce(z_ori, z_pos, z_negs, temperature: float) -> Tensor:
    """Average negative log-probability of the positive slot under a softmax
    over the positive and the M per-element negative similarities."""
    if temperature <= 0:
        raise ContractError(f"temperature must be positive, got {temperature}")
    z_ori, z_pos = as_tensor(z_ori), as_tensor(z_pos)
    z_negs = [as_tensor(z) for z in z_negs]
    if not z_negs:
        raise ContractError("info_nce needs at least one negative batch (M >= 1)")
    _check_batch_pair(z_ori, z_pos, "info_nce(ori, pos)")
    for m, z in enumerate(z_negs):
        _check_batch_pair(z_ori, z, f"info_nce(ori, neg^{m + 1})")

    n = z_ori.shape[0]
    ori_n = l2_normalize(z_ori, axis=-1)
    cols = [tsum(mul(ori_n, l2_normalize(z_pos, axis=-1)), axis=1, keepdims=True)]
    cols.extend(
        tsum(mul(ori_n, l2_normalize(z, axis=-1)), axis=1, keepdims=True) for z in z_negs
    )
    sims = mul(concat(cols, axis=1), 1.0 / temperature)  # (n, M+1), positive first
    probs = softmax(sims, axis=-1)
    pos_prob = select_columns(probs, [0])
    return mul(tsum(log(pos_prob)), -1.0 / n)


def cov_penalty(z) -> Tensor:
    """Mean squared off-diagonal entry (times d-normalization) of the sample
    covariance of the rows: sum of squared off-diagonals divided by d."""
    z = as_tensor(z)
    if z.ndim != 2:
        raise ShapeMismatchError(f"cov_penalty expects (n, d), got {z.shape}")
    n, d = z.shape
    if n < 2:
        raise ContractError(f"cov_penalty needs n >= 2 rows for the n-1 divisor, got {n}")
    centered = sub(z, tmean(z, axis=0, keepdims=True))
    cov = mul(matmul(transpose2d(centered), centered), 1.0 / (n - 1))
    off_mask = 1.0 - np.eye(d)
    return mul(tsum(mul(mul(cov, cov), off_mask)), 1.0 / d)


def total_loss(z_ori, z_pos, z_negs, config: LossConfig) -> Tensor:
    """Weighted contrastive term plus covariance penalties on the original
    batch, the positive batch, and the pooled negative rows."""
    z_negs = [as_tensor(z) for z in z_negs]
    loss = mul(info_nce(z_ori, z_pos, z_negs, config.temperature), config.info_nce_weight)
    if not config.include_covariance:
        return loss
    loss = loss + cov_penalty(z_ori) + cov_penalty(z_pos)
    if config.neg_cov_mode == "concat":
        loss = loss + cov_penalty(concat(z_negs, axis=0))
    else:
        per_m = [cov_penalty(z) for z in z_negs]
        acc = per_m[0]
        for t in per_m[1:]:
            acc = acc + t
        loss = loss + mul(acc, 1.0 / len(per_m))
    return loss
