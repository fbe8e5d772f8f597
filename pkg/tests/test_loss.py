import numpy as np
import pytest
from sklearn.base import clone

from topolines.components import count_components
from topolines.loss import (
    ConnectivityLoss,
    dice_loss,
    select_critical_components,
)
from oracles import plain_bce_sum, plain_dice


def bridge_instance():
    """Two parallel lines joined by a vertical one-pixel bridge."""
    y = np.zeros((11, 15), dtype=bool)
    y[2, :] = True
    y[8, :] = True
    y_hat = y.copy()
    y_hat[3:8, 7] = True
    return y, y_hat


def gap_instance():
    """One line with a three-pixel interior gap."""
    y = np.zeros((5, 15), dtype=bool)
    y[2, :] = True
    y_hat = y.copy()
    y_hat[2, 6:9] = False
    return y, y_hat


class TestSelection:
    def test_bridge_is_the_sole_merge_component(self):
        y, y_hat = bridge_instance()
        sel = select_critical_components(y, y_hat)
        assert len(sel.merge_components) == 1
        assert len(sel.split_components) == 0
        expected = np.flatnonzero((y_hat & ~y).ravel())
        assert np.array_equal(sel.merge_components[0], expected)
        assert sel.merge_deltas == (1,)

    def test_gap_is_the_sole_split_component(self):
        y, y_hat = gap_instance()
        sel = select_critical_components(y, y_hat)
        assert len(sel.split_components) == 1
        assert len(sel.merge_components) == 0
        expected = np.flatnonzero((y & ~y_hat).ravel())
        assert np.array_equal(sel.split_components[0], expected)
        assert sel.split_deltas == (-1,)

    def test_isolated_blob_is_not_selected(self):
        y = np.zeros((9, 15), dtype=bool)
        y[2, :] = True
        y_hat = y.copy()
        y_hat[6:8, 6:8] = True  # far from the line
        sel = select_critical_components(y, y_hat)
        assert sel.is_empty

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape"):
            select_critical_components(np.ones((3, 3), bool), np.ones((3, 4), bool))

    def test_selected_components_satisfy_count_inequalities(self):
        rng = np.random.default_rng(17)
        checked = 0
        for _ in range(60):
            y = rng.random((12, 12)) < 0.4
            y_hat = rng.random((12, 12)) < 0.4
            sel = select_critical_components(y, y_hat)
            base = count_components(y_hat)
            flat_pred = y_hat.ravel()
            for idx in sel.merge_components:
                trial = flat_pred.copy()
                trial[idx] = False
                assert count_components(trial.reshape(y.shape)) > base
                assert not y.ravel()[idx].any()  # false positives only
                checked += 1
            for idx in sel.split_components:
                trial = flat_pred.copy()
                trial[idx] = True
                assert count_components(trial.reshape(y.shape)) < base
                assert y.ravel()[idx].all()  # false negatives only
                checked += 1
        assert checked > 10

    def test_listed_components_are_pairwise_disjoint(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            y = rng.random((14, 14)) < 0.45
            y_hat = rng.random((14, 14)) < 0.45
            sel = select_critical_components(y, y_hat)
            groups = list(sel.merge_components) + list(sel.split_components)
            all_idx = np.concatenate(groups) if groups else np.empty(0, int)
            assert len(all_idx) == len(np.unique(all_idx))


class TestDiceLoss:
    def test_perfect_overlap_is_zero(self):
        y = np.zeros((4, 4), dtype=bool)
        y[1:3, 1:3] = True
        assert dice_loss(y, y.astype(float), epsilon=0.0) == 0.0

    def test_smoothed_empty_case_is_zero(self):
        y = np.zeros((4, 4), dtype=bool)
        assert dice_loss(y, np.zeros((4, 4)), epsilon=1.0) == 0.0

    def test_scalar_hand_computation(self):
        y = np.array([[1, 0]], dtype=bool)
        p = np.array([[0.5, 0.5]])
        assert dice_loss(y, p, epsilon=0.0) == pytest.approx(0.5, abs=1e-15)

    def test_negative_epsilon_rejected(self):
        with pytest.raises(ValueError, match="epsilon"):
            dice_loss(np.ones((2, 2), bool), np.ones((2, 2)), epsilon=-1.0)

    def test_bounds(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            y = rng.random((8, 8)) < 0.5
            p = rng.random((8, 8))
            assert 0.0 <= dice_loss(y, p) <= 1.0


class TestReport:
    def test_alpha_zero_degenerates_to_dice_plus_bce(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            y = rng.random((10, 10)) < 0.5
            p = rng.uniform(0.01, 0.99, (10, 10))
            loss = ConnectivityLoss(alpha=0.0)
            total = loss.report(y, p).total
            expected = plain_dice(y, p, loss.dice_epsilon) + (
                loss.structure_weight / p.size
            ) * plain_bce_sum(y, p, loss.clamp_epsilon)
            assert total == pytest.approx(expected, rel=1e-12)

    def test_near_perfect_prediction_is_small(self):
        y = np.zeros((8, 8), dtype=bool)
        y[2:4, :] = True
        eps = 1e-7
        p = np.where(y, 1.0 - eps, eps)
        loss = ConnectivityLoss(alpha=0.5)
        rep = loss.report(y, p)
        assert rep.dice_term == pytest.approx(0.0, abs=1e-6)
        assert rep.merge_term == 0.0 and rep.split_term == 0.0
        assert 0.0 < rep.total < 1e-4

    def test_bridge_case_uses_only_bridge_pixels(self):
        y, y_hat = bridge_instance()
        p = np.where(y_hat, 0.9, 0.1)
        loss = ConnectivityLoss(alpha=1.0, beta=0.0)
        rep = loss.report(y, p)
        bridge = (y_hat & ~y).ravel()
        by_hand = float(-np.log(1.0 - 0.9) * bridge.sum())
        assert rep.merge_term == pytest.approx(by_hand, rel=1e-12)
        expected_total = rep.dice_term + (loss.structure_weight / p.size) * rep.merge_term
        assert rep.total == pytest.approx(expected_total, rel=1e-12)

        # wiping the bridge strictly lowers the loss
        repaired = np.where(bridge.reshape(y.shape), 0.1, p)
        assert loss.report(y, repaired).total < rep.total

    def test_all_terms_nonnegative_and_composition_holds(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            y = rng.random((9, 9)) < 0.5
            p = rng.uniform(0.0, 1.0, (9, 9))
            alpha, beta = rng.uniform(0, 1, 2)
            loss = ConnectivityLoss(alpha=float(alpha), beta=float(beta))
            rep = loss.report(y, p)
            for term in (rep.total, rep.dice_term, rep.pixel_term,
                         rep.merge_term, rep.split_term):
                assert np.isfinite(term) and term >= 0.0
            composed = rep.dice_term + (loss.structure_weight / rep.n_pixels) * (
                (1 - loss.alpha) * rep.pixel_term
                + loss.alpha * ((1 - loss.beta) * rep.merge_term
                                + loss.beta * rep.split_term)
            )
            assert rep.total == pytest.approx(composed, rel=1e-12)

    def test_total_is_affine_in_beta(self):
        y, y_hat = bridge_instance()
        y_hat[2, 3:6] = False  # add a split error too
        p = np.where(y_hat, 0.85, 0.12)
        totals = [
            ConnectivityLoss(alpha=0.7, beta=b).report(y, p).total
            for b in (0.0, 0.5, 1.0)
        ]
        assert totals[1] == pytest.approx((totals[0] + totals[2]) / 2.0, rel=1e-12)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"alpha": -0.1},
            {"alpha": 1.1},
            {"beta": 2.0},
            {"binarize_threshold": 0.0},
            {"dice_epsilon": -1.0},
            {"structure_weight": 0.0},
            {"clamp_epsilon": 0.5},
            {"connectivity": 5},
        ],
    )
    def test_invalid_params_rejected(self, kwargs):
        y = np.ones((2, 2), dtype=bool)
        with pytest.raises(ValueError):
            ConnectivityLoss(**kwargs).report(y, np.full((2, 2), 0.5))

    def test_estimator_params_round_trip(self):
        loss = ConnectivityLoss(alpha=0.3, beta=0.6)
        params = loss.get_params()
        assert params["alpha"] == 0.3 and params["beta"] == 0.6
        same = clone(loss)
        assert same.get_params() == params
        loss.set_params(alpha=0.9)
        assert loss.alpha == 0.9


class TestGradient:
    def test_signs_push_toward_the_target(self):
        y = np.zeros((6, 6), dtype=bool)
        y[2:4, :] = True
        eps = 1e-7
        p = np.where(y, 1.0 - eps, eps)
        grad = ConnectivityLoss(alpha=0.4).gradient(y, p)
        assert (grad[y] < 0).all()  # descent raises foreground probabilities
        assert (grad[~y] > 0).all()

    def test_alpha_one_beta_zero_touches_only_merge_pixels_beyond_dice(self):
        y, y_hat = bridge_instance()
        p = np.where(y_hat, 0.9, 0.1)
        loss = ConnectivityLoss(alpha=1.0, beta=0.0)
        sel = loss.select(y, p)
        grad = loss.gradient(y, p, sel)
        from topolines.loss import _dice_gradient

        residual = grad - _dice_gradient(y, p, loss.dice_epsilon)
        outside = ~sel.merge_mask()
        assert np.abs(residual[outside]).max() == 0.0
        assert np.abs(residual[~outside]).min() > 0.0

    def test_matches_finite_differences(self):
        from topolines.repair import finite_diff_check

        rng = np.random.default_rng(77)
        y = rng.random((16, 16)) < 0.5
        p = rng.uniform(0.05, 0.95, (16, 16))
        err = finite_diff_check(y, p, ConnectivityLoss(alpha=0.6, beta=0.4), sample=48)
        assert err < 1e-5
