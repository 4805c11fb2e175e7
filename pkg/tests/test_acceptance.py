"""Acceptance gate: one test per criterion, one printed pass/fail line each.

The heavy experiment fixtures are module-scoped and shared across criteria;
run with `pytest -s tests/test_acceptance.py` to watch the lines appear.
"""

import math
import time

import numpy as np
import pytest

from eihi.bench.experiments import desk_grid, run_experiment, run_seed
from eihi.diffcore import (
    Tensor,
    checkpoint_bytes,
    checkpoint_from_bytes,
    finite_diff_check,
    init_backbone,
    make_rng,
)
from eihi.diffcore.backbone import BackboneSpec, ConvBlockSpec
from eihi.losses import LossConfig, cov_penalty, info_nce, total_loss
from eihi.pruning import guidance_vote, sensitivity_indicator

GRID = {c.name: c for c in desk_grid(seeds=(0, 1, 2, 3, 4))}
WORKERS = 2


def report_line(ok: bool, label: str, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'}: {label} ({detail})", flush=True)
    assert ok, f"{label}: {detail}"


# ---------------------------------------------------------------------------
# shared heavy runs

@pytest.fixture(scope="module")
def erm_runs():
    t0 = time.perf_counter()
    mixed = run_experiment(GRID["erm_mixed"], workers=WORKERS)
    shifted = run_experiment(GRID["erm_8_2"], workers=WORKERS)
    return mixed, shifted, time.perf_counter() - t0


@pytest.fixture(scope="module")
def stage_one_8_2():
    return run_experiment(GRID["eihi_stage_one_8_2"], workers=WORKERS)


@pytest.fixture(scope="module")
def no_cov_8_2():
    return run_experiment(GRID["eihi_no_cov_8_2"], workers=WORKERS)


@pytest.fixture(scope="module")
def stage_one_5_1():
    return run_experiment(GRID["eihi_stage_one_5_1"], workers=WORKERS)


@pytest.fixture(scope="module")
def full_5_1():
    return run_experiment(GRID["eihi_full_5_1"], workers=WORKERS)


# ---------------------------------------------------------------------------
# criterion 1: gradient correctness

class TestGradientCorrectness:
    def test_total_loss_gradients_match_finite_differences(self):
        t0 = time.perf_counter()
        n, d, m = 4, 8, 3
        worst = 0.0
        for trial in range(20):
            temperature = 0.01 if trial % 2 == 0 else 1.0
            rng = make_rng(0xACC, trial)
            params = [Tensor(rng.standard_normal((n, d)), requires_grad=True)
                      for _ in range(m + 2)]
            cfg = LossConfig(temperature=temperature)
            report = finite_diff_check(
                lambda ps: total_loss(ps[0], ps[1], list(ps[2:]), cfg),
                params, step=1e-5)
            worst = max(worst, report.max_relative_error)
        elapsed = time.perf_counter() - t0
        report_line(worst < 1e-4 and elapsed < 60.0,
                    "gradient correctness",
                    f"max rel err {worst:.2e} over 20 instances in {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 2: loss oracles

class TestLossOracles:
    def test_uniform_info_nce_equals_ln10(self):
        z = np.tile([[0.6, -0.8]], (4, 1))
        value = info_nce(z, z.copy(), [z.copy() for _ in range(9)], temperature=0.3).item()
        ok = abs(value - math.log(10.0)) < 1e-9
        report_line(ok, "info_nce uniform oracle", f"{value!r} vs ln(10), tol 1e-9")

    def test_cov_penalty_hand_value(self):
        value = cov_penalty(np.array([[1.0, 0.0], [0.0, 1.0]])).item()
        report_line(abs(value - 0.25) < 1e-12, "cov_penalty hand oracle",
                    f"{value!r} vs 0.25, tol 1e-12")

    def test_total_loss_matches_straight_line_recomputation(self):
        from test_losses import oracle_total  # the independent numpy-only path

        rng = make_rng(0xACC2)
        worst = 0.0
        for _ in range(100):
            n = int(rng.integers(2, 6))
            d = int(rng.integers(1, 9))
            m = int(rng.integers(1, 5))
            t = float(rng.choice([0.01, 0.5, 1.0]))
            lam = float(rng.choice([0.5, 1.0, 2.0]))
            zo = rng.standard_normal((n, d)) + 0.05
            zp = rng.standard_normal((n, d)) + 0.05
            zn = [rng.standard_normal((n, d)) + 0.05 for _ in range(m)]
            ours = total_loss(zo, zp, zn, LossConfig(temperature=t, info_nce_weight=lam)).item()
            ref = oracle_total(zo, zp, zn, t, lam)
            denom = max(abs(ours), abs(ref), 1e-12)
            worst = max(worst, abs(ours - ref) / denom)
        report_line(worst < 1e-10, "total_loss straight-line oracle",
                    f"worst relative gap {worst:.2e} over 100 instances, tol 1e-10")


# ---------------------------------------------------------------------------
# criterion 3: pruning oracles

class TestPruningOracles:
    def test_sensitivity_indicator_matches_brute_force(self):
        from test_pruning import brute_force_keep

        rng = make_rng(0xACC3)
        mismatches = 0
        for _ in range(1000):
            d = int(rng.integers(1, 17))
            p = rng.uniform(0.0, 100.0, size=d)
            if rng.random() < 0.3:
                p[rng.random(d) < 0.5] = 0.0
            if sensitivity_indicator(p).tolist() != brute_force_keep(p.tolist()):
                mismatches += 1
        report_line(mismatches == 0, "sensitivity_indicator brute force",
                    f"{mismatches} mismatches over 1000 random vectors, d <= 16")

    def test_guidance_vote_biconditional_exhaustive(self):
        bad = 0
        for num_pairs in range(1, 5):
            patterns = [[(pat >> k) & 1 for k in range(num_pairs)]
                        for pat in range(2 ** num_pairs)]
            for lo in range(0, len(patterns), 8):  # d <= 8 per vote
                chunk = patterns[lo : lo + 8]
                indicators = [np.array([pat[k] for pat in chunk])
                              for k in range(num_pairs)]
                ind = guidance_vote(indicators)
                for j, pat in enumerate(chunk):
                    if (ind.votes[j] == 0) != all(v == 0 for v in pat):
                        bad += 1
        report_line(bad == 0, "guidance_vote biconditional",
                    f"{bad} violations over all patterns, K <= 4, d <= 8")


# ---------------------------------------------------------------------------
# criteria 4-8: experiment grid directions

class TestDiversityShiftDirection:
    def test_mixed_beats_shifted_by_five_points(self, erm_runs):
        mixed, shifted, elapsed = erm_runs
        gap = 100.0 * (mixed.mean_accuracy - shifted.mean_accuracy)
        ok = gap >= 5.0 and elapsed < 600.0
        report_line(ok, "diversity-shift direction",
                    f"mixed {100 * mixed.mean_accuracy:.2f}% vs shifted "
                    f"{100 * shifted.mean_accuracy:.2f}%: gap {gap:.2f} pts "
                    f"(need >= 5) in {elapsed:.0f}s (need < 600)")


class TestStageOneBenefit:
    def test_stage_one_beats_erm_by_three_points(self, erm_runs, stage_one_8_2):
        _, shifted, _ = erm_runs
        gain = 100.0 * (stage_one_8_2.mean_accuracy - shifted.mean_accuracy)
        report_line(gain >= 3.0, "stage-one benefit",
                    f"two-stage {100 * stage_one_8_2.mean_accuracy:.2f}% vs joint "
                    f"{100 * shifted.mean_accuracy:.2f}%: gain {gain:.2f} pts (need >= 3)")


class TestCovarianceAblation:
    def test_stage_one_at_least_matches_no_cov(self, stage_one_8_2, no_cov_8_2):
        a = stage_one_8_2.mean_accuracy
        b = no_cov_8_2.mean_accuracy
        report_line(a >= b, "covariance ablation direction",
                    f"with cov {100 * a:.2f}% vs without {100 * b:.2f}%")


class TestPruningBenefit:
    def test_full_at_least_matches_stage_one_on_correlation_shift(
            self, full_5_1, stage_one_5_1):
        a = full_5_1.mean_accuracy
        b = stage_one_5_1.mean_accuracy
        report_line(a >= b, "pruning benefit under correlation shift",
                    f"with pruning {100 * a:.2f}% vs stage one {100 * b:.2f}%")

    def test_pre_prune_accuracy_is_the_stage_one_run(self, full_5_1, stage_one_5_1):
        pre = [s.pre_prune_accuracy for s in full_5_1.seed_results]
        ref = [s.accuracy for s in stage_one_5_1.seed_results]
        report_line(pre == ref, "pruning pipeline pairing",
                    "pre-prune accuracies match the stage-one run bit-for-bit")


class TestPruningAlignment:
    def test_eliminated_dims_track_background_factor(self, full_5_1):
        hits = 0
        details = []
        for s in full_5_1.seed_results:
            ok = (s.corr_eliminated is not None and s.corr_retained is not None
                  and s.corr_eliminated > s.corr_retained)
            hits += ok
            if s.corr_eliminated is not None:
                details.append(f"seed {s.seed}: {s.corr_eliminated:.3f} vs {s.corr_retained:.3f}")
        report_line(hits >= 4, "pruning ground-truth alignment",
                    f"eliminated-dim |corr| higher in {hits}/5 seeds; " + "; ".join(details))


# ---------------------------------------------------------------------------
# criterion 9: determinism

class TestDeterminism:
    def test_rerun_reproduces_accuracy_bit_identically(self):
        config = GRID["erm_8_2"]
        a = run_seed(config, 0)
        b = run_seed(config, 0)
        report_line(a.accuracy == b.accuracy, "per-seed determinism",
                    f"accuracy {a.accuracy!r} reproduced exactly")

    def test_checkpoint_round_trip_bit_exact(self):
        spec = BackboneSpec(in_channels=3, image_hw=(16, 16),
                            blocks=(ConvBlockSpec(6), ConvBlockSpec(12)),
                            head="flatten", dense=(32,), input_offset=-0.5)
        params = init_backbone(spec, seed=123)
        for p in params.params:  # make values non-trivial
            p.values += make_rng(9).standard_normal(p.values.shape) * 0.1
        blob = checkpoint_bytes(params)
        restored = checkpoint_from_bytes(blob)
        blob2 = checkpoint_bytes(restored)
        report_line(blob == blob2 and all(
            np.array_equal(a.values, b.values)
            for a, b in zip(params.params, restored.params)),
            "checkpoint round trip", f"{len(blob)} bytes bit-identical after reload")
