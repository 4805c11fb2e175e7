"""Minimal learning elements: original, one positive, M negatives.

Positives are distinct same-class samples; each negative is drawn by first
picking a foreign class uniformly and then a member uniformly, so small
classes are not underrepresented as negatives.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .diffcore.backbone import make_rng
from .errors import ContractError, NoNegativeError, NoPositiveError
from .synthdata import Sample


@dataclass
class MinimalLearningElement:
    original: Sample
    positive: Sample
    negatives: tuple[Sample, ...]


@dataclass
class ElementBatch:
    elements: tuple[MinimalLearningElement, ...]
    num_negatives: int

    def __len__(self) -> int:
        return len(self.elements)


class _ClassIndex:
    def __init__(self, samples: Sequence[Sample]):
        self.samples = samples
        self.by_class: dict[int, list[int]] = {}
        for i, s in enumerate(samples):
            self.by_class.setdefault(s.class_label, []).append(i)
        if len(self.by_class) < 2:
            raise NoNegativeError(
                f"need at least 2 classes to form negatives, got {len(self.by_class)}"
            )
        for c, idx in sorted(self.by_class.items()):
            if len(idx) < 2:
                raise NoPositiveError(f"class {c} has a single sample; no positive exists")
        self.classes = sorted(self.by_class)
        self.foreign = {
            c: [k for k in self.classes if k != c] for c in self.classes
        }
        self.foreign_pool_size = {
            c: sum(len(self.by_class[k]) for k in self.foreign[c]) for c in self.classes
        }


def _build_element(index: _ClassIndex, oi: int, M: int,
                   rng: np.random.Generator) -> MinimalLearningElement:
    samples = index.samples
    original = samples[oi]
    c = original.class_label

    pool = index.by_class[c]
    pi = oi
    while pi == oi:
        pi = pool[int(rng.integers(len(pool)))]
    positive = samples[pi]

    foreign_classes = index.foreign[c]
    distinct = index.foreign_pool_size[c] >= M
    chosen: list[int] = []
    seen: set[int] = set()
    while len(chosen) < M:
        fc = foreign_classes[int(rng.integers(len(foreign_classes)))]
        members = index.by_class[fc]
        ni = members[int(rng.integers(len(members)))]
        if distinct and ni in seen:
            continue
        seen.add(ni)
        chosen.append(ni)
    return MinimalLearningElement(original, positive, tuple(samples[i] for i in chosen))


def sample_batch(
    train: Sequence[Sample],
    n: int,
    M: int,
    rng: np.random.Generator,
) -> ElementBatch:
    """Draw n elements with distinct originals; deterministic under rng state."""
    if n < 1 or M < 1:
        raise ContractError(f"need n >= 1 and M >= 1, got n={n}, M={M}")
    if n > len(train):
        raise ContractError(f"cannot draw {n} distinct originals from {len(train)} samples")
    index = _ClassIndex(train)
    originals = rng.permutation(len(train))[:n]
    elements = tuple(_build_element(index, int(oi), M, rng) for oi in originals)
    return ElementBatch(elements=elements, num_negatives=M)


def epoch_iterator(
    train: Sequence[Sample],
    n: int,
    M: int,
    seed: int,
) -> Iterator[ElementBatch]:
    """One epoch of batches whose originals form a seeded permutation of the
    train set; the final short batch is emitted as-is. Batch k's generator
    is derived from (seed, k) alone, so batches can be built independently."""
    if n < 1 or M < 1:
        raise ContractError(f"need n >= 1 and M >= 1, got n={n}, M={M}")
    index = _ClassIndex(train)
    perm = make_rng(seed, 0x9E51).permutation(len(train))
    for k, lo in enumerate(range(0, len(train), n)):
        chunk = perm[lo : lo + n]
        rng = make_rng(seed, 0xE1E, k)
        elements = tuple(_build_element(index, int(oi), M, rng) for oi in chunk)
        yield ElementBatch(elements=elements, num_negatives=M)
