"""Central finite-difference checks for analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..errors import ContractError, DeterminismError
from .backbone import make_rng
from .tensor import Tensor, gradients

REL_EPS = 1e-8


def relative_error(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), REL_EPS)


@dataclass
class GradReport:
    """Sampled analytic-vs-finite-difference comparison.

    `entries` holds (param index, flat scalar index, analytic, estimate)
    rows; `max_relative_error` uses |a-b| / max(|a|, |b|, 1e-8).
    """

    entries: list[tuple[int, int, float, float]]
    max_relative_error: float

    def worst(self) -> tuple[int, int, float, float]:
        return max(self.entries, key=lambda e: relative_error(e[2], e[3]))


def finite_diff_check(
    loss_fn: Callable[[Sequence[Tensor]], Tensor],
    params: Sequence[Tensor],
    step: float = 1e-5,
    min_scalars: int = 64,
    seed: int = 0,
) -> GradReport:
    """Compare analytic gradients of `loss_fn(params)` against central
    differences (f(p+h) - f(p-h)) / 2h on a sampled scalar subset.

    Samples at least `min_scalars` scalar coordinates across all parameters
    (all of them when there are fewer). `loss_fn` must be deterministic; it
    is evaluated twice up front and a mismatch raises DeterminismError.
    """
    if step <= 0:
        raise ContractError(f"step must be positive, got {step}")

    base_a = loss_fn(params).item()
    base_b = loss_fn(params).item()
    if base_a != base_b:
        raise DeterminismError(
            f"loss_fn returned {base_a!r} then {base_b!r} for identical parameters"
        )

    analytic = gradients(loss_fn(params), params)

    coords: list[tuple[int, int]] = []
    for pi, p in enumerate(params):
        coords.extend((pi, si) for si in range(p.values.size))
    total = len(coords)
    if total > min_scalars:
        rng = make_rng(seed, 0xFDC)
        picked = rng.choice(total, size=min_scalars, replace=False)
        coords = [coords[i] for i in sorted(picked)]

    entries: list[tuple[int, int, float, float]] = []
    max_rel = 0.0
    for pi, si in coords:
        flat = params[pi].values.reshape(-1)
        orig = flat[si]
        flat[si] = orig + step
        f_plus = loss_fn(params).item()
        flat[si] = orig - step
        f_minus = loss_fn(params).item()
        flat[si] = orig
        est = (f_plus - f_minus) / (2.0 * step)
        ana = float(analytic[pi].reshape(-1)[si])
        entries.append((pi, si, ana, est))
        max_rel = max(max_rel, relative_error(ana, est))

    return GradReport(entries=entries, max_relative_error=max_rel)
