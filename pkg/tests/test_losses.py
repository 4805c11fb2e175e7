"""Objective-function oracles.

The straight-line recomputation below is deliberately independent of the
differentiable core: plain numpy, covariances via the diag-subtraction
route, softmax written out by hand.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eihi.diffcore import Tensor, finite_diff_check, make_rng
from eihi.errors import ContractError, ShapeMismatchError, ZeroNormError
from eihi.losses import LossConfig, cosine_similarities, cov_penalty, info_nce, total_loss

LN10 = 2.302585092994046


def oracle_total(zo, zp, zns, t, lam, mode="concat", include_cov=True):
    def rows(z):
        return z / np.linalg.norm(z, axis=1, keepdims=True)

    no = rows(zo)
    sims = [np.sum(no * rows(zp), axis=1)]
    sims += [np.sum(no * rows(z), axis=1) for z in zns]
    logits = np.stack(sims, axis=1) / t
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    nce = float(-np.mean(np.log(p[:, 0])))

    def cov_pen(z):
        n, d = z.shape
        zc = z - z.mean(axis=0)
        cov = zc.T @ zc / (n - 1)
        return float(((cov ** 2).sum() - (np.diag(cov) ** 2).sum()) / d)

    if not include_cov:
        return lam * nce
    if mode == "concat":
        neg_term = cov_pen(np.concatenate(zns, axis=0))
    else:
        neg_term = float(np.mean([cov_pen(z) for z in zns]))
    return lam * nce + cov_pen(zo) + cov_pen(zp) + neg_term


class TestCosine:
    def test_identical_rows_give_one(self):
        z = make_rng(0).standard_normal((4, 6))
        np.testing.assert_allclose(cosine_similarities(z, z).values, np.ones(4), rtol=1e-12)

    def test_orthogonal_rows_give_zero(self):
        a = np.array([[1.0, 0.0]])
        b = np.array([[0.0, 1.0]])
        assert cosine_similarities(a, b).values[0] == pytest.approx(0.0, abs=1e-15)

    def test_hand_normalized_value(self):
        a = np.array([[1.0, 1.0]])
        b = np.array([[1.0, 0.0]])
        assert cosine_similarities(a, b).values[0] == pytest.approx(0.7071067811865475, abs=1e-12)

    def test_zero_row_identified(self):
        a = np.array([[1.0, 0.0], [0.0, 0.0]])
        with pytest.raises(ZeroNormError, match="1"):
            cosine_similarities(a, a)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            cosine_similarities(np.ones((2, 3)), np.ones((2, 4)))


class TestInfoNce:
    def test_uniform_similarities_give_ln_m_plus_one(self):
        # every slot identical -> softmax uniform over M+1 = 10
        z = np.tile([[1.0, 0.0]], (3, 1))
        negs = [z.copy() for _ in range(9)]
        loss = info_nce(z, z.copy(), negs, temperature=0.7)
        assert loss.item() == pytest.approx(LN10, abs=1e-9)

    def test_hand_scalar_softmax(self):
        # sim_pos = 1, sim_neg = 0, t = 1 -> -ln(e / (e + 1))
        ori = np.array([[1.0, 0.0]])
        pos = np.array([[2.0, 0.0]])
        neg = np.array([[0.0, 3.0]])
        loss = info_nce(ori, pos, [neg], temperature=1.0)
        assert loss.item() == pytest.approx(0.3132616875182228, abs=1e-10)

    def test_saturated_small_temperature(self):
        ori = np.array([[1.0, 0.0]])
        pos = np.array([[3.0, 0.0]])
        neg = np.array([[-2.0, 0.0]])
        loss = info_nce(ori, pos, [neg], temperature=0.01)
        assert 0.0 <= loss.item() < 1e-8

    def test_zero_negatives_rejected(self):
        z = np.ones((2, 2))
        with pytest.raises(ContractError):
            info_nce(z, z, [], temperature=1.0)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000), alpha=st.floats(0.1, 10.0))
    def test_row_rescaling_invariance(self, seed, alpha):
        rng = make_rng(seed)
        zo = rng.standard_normal((3, 5))
        zp = rng.standard_normal((3, 5))
        zn = [rng.standard_normal((3, 5)) for _ in range(2)]
        base = info_nce(zo, zp, zn, temperature=0.5).item()
        zo2 = zo.copy()
        zo2[1] *= alpha
        scaled = info_nce(zo2, zp, zn, temperature=0.5).item()
        assert scaled == pytest.approx(base, abs=1e-12)

    def test_strictly_decreasing_in_positive_similarity(self):
        rng = make_rng(4)
        zo = rng.standard_normal((2, 4))
        zn = [rng.standard_normal((2, 4))]
        # walk the positive toward the original: similarity rises, loss must fall
        zp_far = -zo + 0.3 * rng.standard_normal((2, 4))
        losses = []
        for w in (0.0, 0.4, 0.8, 1.0):
            zp = (1 - w) * zp_far + w * zo
            losses.append(info_nce(zo, zp, zn, temperature=0.5).item())
        assert all(a > b for a, b in zip(losses, losses[1:]))

    def test_loss_can_exceed_ln_m_plus_one(self):
        # dominated positive: not bounded by ln(M+1)
        ori = np.array([[1.0, 0.0]])
        pos = np.array([[-1.0, 0.0]])
        neg = np.array([[1.0, 0.1]])
        loss = info_nce(ori, pos, [neg], temperature=0.1)
        assert loss.item() > np.log(2.0)


class TestCovPenalty:
    def test_hand_computed_identity_pair(self):
        z = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert cov_penalty(z).item() == pytest.approx(0.25, abs=1e-12)

    def test_single_column_is_zero(self):
        z = make_rng(1).standard_normal((5, 1))
        assert cov_penalty(z).item() == 0.0

    def test_independent_columns_nearly_zero(self):
        z = make_rng(2).standard_normal((10_000, 8))
        assert cov_penalty(z).item() < 1e-3

    def test_mean_shift_invariance(self):
        rng = make_rng(3)
        z = rng.standard_normal((6, 4))
        shift = rng.standard_normal((1, 4)) * 100
        a = cov_penalty(z).item()
        b = cov_penalty(z + shift).item()
        assert b == pytest.approx(a, rel=1e-9)

    def test_row_permutation_invariance(self):
        rng = make_rng(5)
        z = rng.standard_normal((7, 3))
        perm = rng.permutation(7)
        assert cov_penalty(z[perm]).item() == pytest.approx(cov_penalty(z).item(), rel=1e-12)

    def test_zero_iff_diagonal_covariance(self):
        rng = make_rng(6)
        raw = rng.standard_normal((12, 4))
        q, _ = np.linalg.qr(raw - raw.mean(axis=0))
        assert cov_penalty(q).item() < 1e-28
        corr = np.column_stack([raw[:, 0], raw[:, 0] * 2.0 + 1e-3 * raw[:, 1]])
        assert cov_penalty(corr).item() > 1e-6

    def test_single_row_rejected(self):
        with pytest.raises(ContractError):
            cov_penalty(np.ones((1, 3)))


class TestTotalLoss:
    def test_lambda_zero_reduces_to_cov_terms(self):
        rng = make_rng(7)
        zo, zp = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
        zn = [rng.standard_normal((4, 3)) for _ in range(2)]
        cfg = LossConfig(temperature=0.5, info_nce_weight=0.0)
        expect = (cov_penalty(zo).item() + cov_penalty(zp).item()
                  + cov_penalty(np.concatenate(zn, axis=0)).item())
        assert total_loss(zo, zp, zn, cfg).item() == pytest.approx(expect, rel=1e-14)

    def test_single_column_reduces_to_weighted_info_nce(self):
        rng = make_rng(8)
        zo, zp = rng.uniform(0.5, 1, (3, 1)), rng.uniform(0.5, 1, (3, 1))
        zn = [rng.uniform(0.5, 1, (3, 1))]
        cfg = LossConfig(temperature=0.3, info_nce_weight=2.5)
        expect = 2.5 * info_nce(zo, zp, zn, temperature=0.3).item()
        assert total_loss(zo, zp, zn, cfg).item() == pytest.approx(expect, rel=1e-14)

    @pytest.mark.parametrize("mode", ["concat", "mean"])
    def test_matches_straight_line_oracle(self, mode):
        rng = make_rng(9)
        for trial in range(100):
            n = int(rng.integers(2, 6))
            d = int(rng.integers(1, 8))
            m = int(rng.integers(1, 5))
            t = float(rng.choice([0.01, 0.5, 1.0]))
            lam = float(rng.choice([0.5, 1.0, 2.0]))
            zo = rng.standard_normal((n, d)) + 0.1
            zp = rng.standard_normal((n, d)) + 0.1
            zn = [rng.standard_normal((n, d)) + 0.1 for _ in range(m)]
            cfg = LossConfig(temperature=t, info_nce_weight=lam, neg_cov_mode=mode)
            ours = total_loss(zo, zp, zn, cfg).item()
            ref = oracle_total(zo, zp, zn, t, lam, mode=mode)
            assert ours == pytest.approx(ref, rel=1e-10, abs=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = make_rng(10)
        n, d, m = 4, 8, 3
        params = [Tensor(rng.standard_normal((n, d)), requires_grad=True) for _ in range(m + 2)]
        cfg = LossConfig(temperature=1.0)

        def loss_fn(ps):
            return total_loss(ps[0], ps[1], list(ps[2:]), cfg)

        report = finite_diff_check(loss_fn, params, step=1e-5)
        assert report.max_relative_error < 1e-4
