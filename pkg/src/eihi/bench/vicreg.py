"""Implicit-negative ablation baseline.

Variance-invariance-covariance training over plain batches without any
sample pairing: the second view is the batch itself, so the invariance term
is identically zero and only the variance hinge and covariance penalty
shape the features. Kept here, out of the production objective, as a
falsifiable foil for the ablation grid.
"""

from __future__ import annotations

import time
from typing import Sequence

import numpy as np

from ..diffcore.backbone import BackboneParams, BackboneSpec, forward_backbone, init_backbone, make_rng
from ..diffcore.tensor import Tensor, gradients, mul, relu, sqrt, sub, tmean, tsum
from ..losses import cov_penalty
from ..synthdata import Sample
from ..trainer import (
    TrainConfig,
    TrainTrace,
    _Optimizer,
    _labels,
    _num_classes,
    _probe_accuracy,
    _stack_images,
    derive_seed,
    embed_samples,
)

VAR_WEIGHT = 25.0
INV_WEIGHT = 25.0
COV_WEIGHT = 1.0
VAR_EPS = 1e-4
VAR_TARGET = 1.0


def variance_hinge(z) -> Tensor:
    """mean_j max(0, 1 - sqrt(var_j + eps)) over embedding dimensions."""
    centered = sub(z, tmean(z, axis=0, keepdims=True))
    var = tmean(mul(centered, centered), axis=0)
    std = sqrt(var + VAR_EPS)
    return tmean(relu(mul(sub(std, VAR_TARGET), -1.0)))


def vicreg_batch_loss(z) -> Tensor:
    """Full criterion with the second view equal to the first: the
    invariance (mean squared difference) term is exactly zero."""
    diff = sub(z, z)
    invariance = tmean(mul(diff, diff))
    return (mul(invariance, INV_WEIGHT)
            + mul(variance_hinge(z), 2.0 * VAR_WEIGHT)
            + mul(cov_penalty(z), 2.0 * COV_WEIGHT))


def train_vicreg(
    train: Sequence[Sample],
    validation: Sequence[Sample],
    config: TrainConfig,
    backbone_spec: BackboneSpec | None = None,
) -> tuple[BackboneParams, TrainTrace]:
    spec = backbone_spec or BackboneSpec()
    params = init_backbone(spec, seed=config.seed)
    params.set_requires_grad(True)
    opt = _Optimizer(config.optimizer, config.learning_rate, config.momentum, params.params)
    trace = TrainTrace()
    num_classes = _num_classes(train, validation)
    y_train, y_val = _labels(train), _labels(validation)

    best = None
    n = len(train)
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        perm = make_rng(derive_seed(config.seed, 0x51C, epoch)).permutation(n)
        epoch_losses = []
        for lo in range(0, n, config.batch_size):
            rows = [train[i] for i in perm[lo : lo + config.batch_size]]
            if len(rows) < 2:
                continue
            z = forward_backbone(params, _stack_images(rows))
            loss = vicreg_batch_loss(z)
            value = loss.item()
            if not np.isfinite(value):
                trace.aborted = True
                trace.best_epoch = best[1] if best else 0
                return (best[2] if best else params.copy()), trace
            gradients(loss, params.params)
            opt.step(params.params)
            trace.steps += 1
            epoch_losses.append(value)
        trace.losses.append(float(np.mean(epoch_losses)))

        probed = (epoch % config.probe_every == config.probe_every - 1
                  or epoch == config.epochs - 1)
        if probed and len(validation) > 0:
            z_t = embed_samples(params, train)
            z_v = embed_samples(params, validation)
            acc = _probe_accuracy(z_t, y_train, z_v, y_val, num_classes)
            trace.val_accuracy.append(acc)
            if best is None or acc > best[0]:
                best = (acc, epoch, params.copy())
        else:
            trace.val_accuracy.append(None)
        trace.epoch_seconds.append(time.perf_counter() - t0)

    if best is None:
        best = (0.0, config.epochs - 1, params.copy())
    trace.best_epoch = best[1]
    return best[2], trace
