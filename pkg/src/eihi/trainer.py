"""Two-stage training: the feature capture network learns from minimal
learning elements, then a dense discriminator is trained on frozen
embeddings. Also the joint cross-entropy baseline and evaluation.
"""

from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .diffcore.backbone import (
    BackboneParams,
    BackboneSpec,
    _mix64,
    forward_backbone,
    init_backbone,
    make_rng,
)
from .diffcore.checkpoint import params_checksum
from .diffcore.tensor import (
    Tensor,
    gradients,
    log_softmax,
    matmul,
    mul,
    relu,
    tsum,
)
from .errors import ConfigError, ContractError
from .losses import LossConfig, total_loss
from .sampler import epoch_iterator
from .synthdata import Sample


def derive_seed(*words: int) -> int:
    acc = 0
    for w in words:
        acc = _mix64(acc ^ _mix64(int(w) & 0xFFFFFFFFFFFFFFFF))
    return acc


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    num_negatives: int = 9
    learning_rate: float = 0.01
    optimizer: str = "sgd"  # "sgd" | "momentum" | "adam"
    momentum: float = 0.9
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0
    probe_every: int = 5
    disc_hidden: tuple[int, ...] = (128,)

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (covariance needs 2 rows)")
        if self.num_negatives < 1:
            raise ConfigError("num_negatives must be >= 1")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.optimizer not in ("sgd", "momentum", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.probe_every < 1:
            raise ConfigError("probe_every must be >= 1")


@dataclass
class TrainTrace:
    losses: list[float] = field(default_factory=list)
    val_accuracy: list[float | None] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    best_epoch: int = 0
    steps: int = 0
    aborted: bool = False

    def to_json_dict(self) -> dict:
        return {
            "losses": self.losses,
            "val_accuracy": self.val_accuracy,
            "epoch_seconds": self.epoch_seconds,
            "best_epoch": self.best_epoch,
            "steps": self.steps,
            "aborted": self.aborted,
        }


@dataclass
class Discriminator:
    widths: tuple[int, ...]
    params: list[Tensor]
    input_dim: int
    num_classes: int

    def copy(self) -> "Discriminator":
        clones = [Tensor(p.values.copy(), requires_grad=True) for p in self.params]
        return Discriminator(self.widths, clones, self.input_dim, self.num_classes)


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray  # (C, C), rows = true class
    total: int


class _Optimizer:
    """Plain SGD by default; momentum and adam are config options."""

    def __init__(self, kind: str, lr: float, momentum: float, params: list[Tensor]):
        self.kind = kind
        self.lr = lr
        self.momentum = momentum
        self.t = 0
        if kind == "momentum":
            self.buf = [np.zeros_like(p.values) for p in params]
        elif kind == "adam":
            self.m = [np.zeros_like(p.values) for p in params]
            self.v = [np.zeros_like(p.values) for p in params]

    def step(self, params: list[Tensor]) -> None:
        self.t += 1
        for i, p in enumerate(params):
            g = p.grad
            if g is None:
                continue
            if self.kind == "sgd":
                p.values -= self.lr * g
            elif self.kind == "momentum":
                self.buf[i] = self.momentum * self.buf[i] + g
                p.values -= self.lr * self.buf[i]
            else:  # adam
                b1, b2, eps = 0.9, 0.999, 1e-8
                self.m[i] = b1 * self.m[i] + (1 - b1) * g
                self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
                mhat = self.m[i] / (1 - b1 ** self.t)
                vhat = self.v[i] / (1 - b2 ** self.t)
                p.values -= self.lr * mhat / (np.sqrt(vhat) + eps)
            p.zero_grad()


@contextmanager
def frozen(params: BackboneParams):
    """Temporarily drop gradient tracking so forward passes stay graph-free."""
    flags = [p.requires_grad for p in params.params]
    params.set_requires_grad(False)
    try:
        yield params
    finally:
        for p, f in zip(params.params, flags):
            p.requires_grad = f


def _stack_images(samples: Sequence[Sample]) -> np.ndarray:
    return np.stack([s.image for s in samples])


def embed_samples(params: BackboneParams, samples: Sequence[Sample],
                  chunk: int = 128) -> np.ndarray:
    """Frozen-forward embeddings for a sample list, chunked for memory."""
    rows = []
    with frozen(params):
        for lo in range(0, len(samples), chunk):
            batch = _stack_images(samples[lo : lo + chunk])
            rows.append(forward_backbone(params, batch).values)
    return np.concatenate(rows, axis=0)


class EmbeddingCache:
    """Embeddings keyed by (parameter checksum, sample id); stage two makes
    many passes over a frozen map, so rows are computed once."""

    def __init__(self):
        self._store: dict[tuple[str, str], np.ndarray] = {}

    def get(self, params: BackboneParams, samples: Sequence[Sample]) -> np.ndarray:
        key = params_checksum(params)
        missing = [s for s in samples if (key, s.sample_id) not in self._store]
        if missing:
            rows = embed_samples(params, missing)
            for s, row in zip(missing, rows):
                self._store[(key, s.sample_id)] = row
        return np.stack([self._store[(key, s.sample_id)] for s in samples])


# --------------------------------------------------------------------------
# linear probe: scores checkpoint quality during contrastive training

def _probe_accuracy(z_train: np.ndarray, y_train: np.ndarray,
                    z_val: np.ndarray, y_val: np.ndarray,
                    num_classes: int, steps: int = 200, lr: float = 1.0) -> float:
    def norm(z):
        n = np.linalg.norm(z, axis=1, keepdims=True)
        return z / np.maximum(n, 1e-12)

    zt, zv = norm(z_train), norm(z_val)
    n, d = zt.shape
    w = np.zeros((d, num_classes))
    b = np.zeros(num_classes)
    onehot = np.eye(num_classes)[y_train]
    for _ in range(steps):
        logits = zt @ w + b
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / n
        w -= lr * (zt.T @ g)
        b -= lr * g.sum(axis=0)
    pred = np.argmax(zv @ w + b, axis=1)
    return float(np.mean(pred == y_val))


def _labels(samples: Sequence[Sample]) -> np.ndarray:
    return np.array([s.class_label for s in samples], dtype=np.int64)


def _num_classes(*sample_sets: Sequence[Sample]) -> int:
    return max(s.class_label for ss in sample_sets for s in ss) + 1


# --------------------------------------------------------------------------
# stage one

def train_stage_one(
    train: Sequence[Sample],
    validation: Sequence[Sample],
    config: TrainConfig,
    backbone_spec: BackboneSpec | None = None,
    init_params: BackboneParams | None = None,
) -> tuple[BackboneParams, TrainTrace]:
    """Contrastive training of the feature capture network over minimal
    learning elements. Returns the checkpoint from the best probed epoch
    (a linear probe on frozen embeddings scores validation accuracy every
    `probe_every` epochs) and the full trace.
    """
    if init_params is not None:
        params = init_params.copy()
    else:
        spec = backbone_spec or BackboneSpec()
        params = init_backbone(spec, seed=config.seed)
    params.set_requires_grad(True)

    opt = _Optimizer(config.optimizer, config.learning_rate, config.momentum, params.params)
    trace = TrainTrace()
    num_classes = _num_classes(train, validation)
    y_train, y_val = _labels(train), _labels(validation)

    best: tuple[float, int, BackboneParams] | None = None
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        epoch_losses = []
        epoch_seed = derive_seed(config.seed, 0x0E9, epoch)
        for batch in epoch_iterator(train, config.batch_size, config.num_negatives, epoch_seed):
            x_ori = _stack_images([el.original for el in batch.elements])
            x_pos = _stack_images([el.positive for el in batch.elements])
            z_ori = forward_backbone(params, x_ori)
            z_pos = forward_backbone(params, x_pos)
            z_negs = []
            for m in range(batch.num_negatives):
                x_neg = _stack_images([el.negatives[m] for el in batch.elements])
                z_negs.append(forward_backbone(params, x_neg))
            loss = total_loss(z_ori, z_pos, z_negs, config.loss)
            value = loss.item()
            if not np.isfinite(value):
                trace.aborted = True
                trace.losses.append(value)
                chosen = best[2] if best else params.copy()
                trace.best_epoch = best[1] if best else 0
                return chosen, trace
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

    if best is None:  # no validation probes ran; keep the final parameters
        best = (0.0, config.epochs - 1, params.copy())
    trace.best_epoch = best[1]
    return best[2], trace


# --------------------------------------------------------------------------
# discriminator on frozen embeddings

def _init_discriminator(input_dim: int, hidden: tuple[int, ...], num_classes: int,
                        seed: int) -> Discriminator:
    rng = make_rng(seed, 0xD15C)
    widths = (input_dim,) + tuple(hidden) + (num_classes,)
    params: list[Tensor] = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        params.append(Tensor(rng.uniform(-s, s, size=(fan_in, fan_out)), requires_grad=True))
        params.append(Tensor(np.zeros(fan_out), requires_grad=True))
    return Discriminator(widths, params, input_dim, num_classes)


def forward_discriminator(disc: Discriminator, z) -> Tensor:
    out = z if isinstance(z, Tensor) else Tensor(z)
    layers = len(disc.widths) - 1
    for li in range(layers):
        w, b = disc.params[2 * li], disc.params[2 * li + 1]
        out = matmul(out, w) + b
        if li < layers - 1:
            out = relu(out)
    return out


def _disc_logits_np(disc: Discriminator, z: np.ndarray) -> np.ndarray:
    out = z
    layers = len(disc.widths) - 1
    for li in range(layers):
        w, b = disc.params[2 * li].values, disc.params[2 * li + 1].values
        out = out @ w + b
        if li < layers - 1:
            out = np.maximum(out, 0.0)
    return out


def _cross_entropy(logits: Tensor, labels: np.ndarray, num_classes: int) -> Tensor:
    onehot = np.eye(num_classes)[labels]
    picked = mul(log_softmax(logits, axis=-1), onehot)
    return mul(tsum(picked), -1.0 / len(labels))


def keep_indices(keep_dims: np.ndarray | None, d: int) -> np.ndarray:
    if keep_dims is None:
        return np.arange(d)
    keep_dims = np.asarray(keep_dims)
    if keep_dims.shape != (d,):
        raise ContractError(f"keep_dims must have length {d}, got shape {keep_dims.shape}")
    idx = np.flatnonzero(keep_dims != 0)
    if idx.size == 0:
        raise ContractError("keep_dims eliminates every dimension")
    return idx


def train_discriminator(
    backbone: BackboneParams,
    train: Sequence[Sample],
    validation: Sequence[Sample],
    config: TrainConfig,
    keep_dims: np.ndarray | None = None,
    cache: EmbeddingCache | None = None,
) -> tuple[Discriminator, TrainTrace]:
    """Cross-entropy training on frozen, cached embeddings. Dimensions with
    a zero keep indicator are removed from the input, not zeroed: the
    discriminator's first layer never owns a weight for them."""
    cache = cache or EmbeddingCache()
    z_train_full = cache.get(backbone, train)
    z_val_full = cache.get(backbone, validation) if validation else np.zeros((0, backbone.embedding_dim))
    idx = keep_indices(keep_dims, backbone.embedding_dim)
    z_train, z_val = z_train_full[:, idx], z_val_full[:, idx]

    num_classes = _num_classes(train, validation) if validation else _num_classes(train)
    y_train, y_val = _labels(train), _labels(validation)
    disc = _init_discriminator(len(idx), config.disc_hidden, num_classes, config.seed)
    opt = _Optimizer(config.optimizer, config.learning_rate, config.momentum, disc.params)
    trace = TrainTrace()

    best: tuple[float, int, Discriminator] | None = None
    n = len(train)
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        perm = make_rng(derive_seed(config.seed, 0xD15C, epoch)).permutation(n)
        epoch_losses = []
        for lo in range(0, n, config.batch_size):
            rows = perm[lo : lo + config.batch_size]
            logits = forward_discriminator(disc, z_train[rows])
            loss = _cross_entropy(logits, y_train[rows], num_classes)
            value = loss.item()
            if not np.isfinite(value):
                trace.aborted = True
                trace.best_epoch = best[1] if best else 0
                return (best[2] if best else disc.copy()), trace
            gradients(loss, disc.params)
            opt.step(disc.params)
            trace.steps += 1
            epoch_losses.append(value)
        trace.losses.append(float(np.mean(epoch_losses)))

        if len(validation) > 0:
            acc = float(np.mean(np.argmax(_disc_logits_np(disc, z_val), axis=1) == y_val))
        else:
            acc = float(np.mean(np.argmax(_disc_logits_np(disc, z_train), axis=1) == y_train))
        trace.val_accuracy.append(acc)
        if best is None or acc > best[0]:
            best = (acc, epoch, disc.copy())
        trace.epoch_seconds.append(time.perf_counter() - t0)

    trace.best_epoch = best[1]
    return best[2], trace


def evaluate(
    backbone: BackboneParams,
    disc: Discriminator,
    keep_dims: np.ndarray | None,
    samples: Sequence[Sample],
    cache: EmbeddingCache | None = None,
) -> EvalResult:
    if not samples:
        raise ContractError("evaluate called with an empty sample set")
    cache = cache or EmbeddingCache()
    z = cache.get(backbone, samples)[:, keep_indices(keep_dims, backbone.embedding_dim)]
    pred = np.argmax(_disc_logits_np(disc, z), axis=1)
    y = _labels(samples)
    num_classes = disc.num_classes
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (y, pred), 1)
    return EvalResult(accuracy=float(np.mean(pred == y)), confusion=confusion,
                      total=len(samples))


# --------------------------------------------------------------------------
# joint cross-entropy baseline

def train_erm(
    train: Sequence[Sample],
    validation: Sequence[Sample],
    config: TrainConfig,
    backbone_spec: BackboneSpec | None = None,
) -> tuple[BackboneParams, Discriminator, TrainTrace]:
    """Backbone and discriminator trained jointly with cross-entropy."""
    spec = backbone_spec or BackboneSpec()
    params = init_backbone(spec, seed=config.seed)
    num_classes = _num_classes(train, validation) if validation else _num_classes(train)
    disc = _init_discriminator(spec.embedding_dim, config.disc_hidden, num_classes, config.seed)
    all_params = params.params + disc.params
    opt = _Optimizer(config.optimizer, config.learning_rate, config.momentum, all_params)
    trace = TrainTrace()
    y_train, y_val = _labels(train), _labels(validation)

    best: tuple[float, int, BackboneParams, Discriminator] | None = None
    n = len(train)
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        perm = make_rng(derive_seed(config.seed, 0xE63, epoch)).permutation(n)
        epoch_losses = []
        for lo in range(0, n, config.batch_size):
            rows = [train[i] for i in perm[lo : lo + config.batch_size]]
            z = forward_backbone(params, _stack_images(rows))
            logits = forward_discriminator(disc, z)
            loss = _cross_entropy(logits, _labels(rows), num_classes)
            value = loss.item()
            if not np.isfinite(value):
                trace.aborted = True
                trace.best_epoch = best[1] if best else 0
                if best:
                    return best[2], best[3], trace
                return params.copy(), disc.copy(), trace
            gradients(loss, all_params)
            opt.step(all_params)
            trace.steps += 1
            epoch_losses.append(value)
        trace.losses.append(float(np.mean(epoch_losses)))

        if len(validation) > 0:
            z_val = embed_samples(params, validation)
            acc = float(np.mean(np.argmax(_disc_logits_np(disc, z_val), axis=1) == y_val))
        else:
            acc = 0.0
        trace.val_accuracy.append(acc)
        if best is None or acc > best[0]:
            best = (acc, epoch, params.copy(), disc.copy())
        trace.epoch_seconds.append(time.perf_counter() - t0)

    trace.best_epoch = best[1]
    return best[2], best[3], trace
