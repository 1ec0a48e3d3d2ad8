import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from designs import staggered_panel
from didmulti.estimators import event_study
from didmulti.exceptions import DesignMismatchError, EstimationError, RankDeficientError
from didmulti.inference import BootstrapSpec
from didmulti.panel import Panel
from didmulti.twfe import (
    demean_two_way,
    fe_regress,
    local_projection_coefficient,
    prop1_weights,
    prop3_weights,
    prop4_weights,
    twfe_contrast_bootstrap,
    twfe_implied_event_study,
    weight_sums,
)

seeds = st.integers(0, 2**32 - 1)


def fe_noise(rng, G, T):
    return rng.normal(size=(G, 1)) + rng.normal(size=(1, T))


def intensity_panel(I, T=4, F=3, Y=None, N=None):
    I = np.asarray(I, dtype=float)
    D = I[:, None] * (np.arange(1, T + 1)[None, :] >= F)
    Y = np.zeros(D.shape) if Y is None else Y
    return Panel.from_arrays(Y, D, N)


def dummies_ols(y, X, w):
    """Weighted least squares with explicit group and period dummies."""
    G, T = y.shape
    g = np.repeat(np.arange(G), T)
    t = np.tile(np.arange(T), G)
    Z = np.column_stack([x.ravel() for x in X] + [np.eye(G)[g]] + [np.eye(T)[t][:, 1:]])
    sw = np.sqrt(w.ravel())
    beta = np.linalg.lstsq(Z * sw[:, None], y.ravel() * sw, rcond=None)[0]
    return beta[: len(X)]


class TestFESolver:
    def test_demeaned_margins_vanish(self, rng):
        x = rng.normal(size=(6, 5))
        w = rng.integers(1, 4, size=(6, 5)).astype(float)
        r = demean_two_way(x, w)
        assert_allclose((w * r).sum(axis=0), 0, atol=1e-10)
        assert_allclose((w * r).sum(axis=1), 0, atol=1e-10)

    def test_pure_fixed_effects(self, rng):
        D = (rng.random((8, 6)) < 0.5).astype(float)
        fit = fe_regress(fe_noise(rng, 8, 6), {"D": D}, np.ones((8, 6)))
        assert abs(fit["D"]) < 1e-10

    def test_recovers_linear_model(self, rng):
        D = (rng.random((8, 6)) < 0.5).astype(float)
        fit = fe_regress(fe_noise(rng, 8, 6) + 2 * D, {"D": D}, np.ones((8, 6)))
        assert_allclose(fit["D"], 2.0, atol=1e-8)

    def test_normal_equations(self, rng):
        y = rng.normal(size=(5, 5))
        X = [rng.normal(size=(5, 5)), rng.normal(size=(5, 5))]
        w = rng.integers(1, 5, size=(5, 5)).astype(float)
        fit = fe_regress(y, {"a": X[0], "b": X[1]}, w)
        assert_allclose(fit.coef, dummies_ols(y, X, w), atol=1e-8)
        assert fit.as_dict().keys() == {"a", "b"}

    def test_rank_error_names_columns(self, rng):
        D = (rng.random((6, 5)) < 0.5).astype(float)
        with pytest.raises(RankDeficientError, match="a, b"):
            fe_regress(rng.normal(size=(6, 5)), {"a": D, "b": 2 * D}, np.ones((6, 5)))
        with pytest.raises(RankDeficientError, match="group_only"):
            fe_regress(rng.normal(size=(6, 5)), {"group_only": np.repeat(rng.normal(size=(6, 1)), 5, 1)},
                       np.ones((6, 5)))


class TestIntensityWeights:
    def test_hand_example_zero_one_two(self):
        r = prop1_weights(intensity_panel([0, 1, 2]))
        assert_allclose(r.weights.weight, [0, 1], atol=1e-15)
        assert r.flagged == []

    def test_hand_example_one_two_three(self):
        r = prop1_weights(intensity_panel([1, 2, 3]))
        assert_allclose(r.weights.weight, [-0.5, 0, 1.5], atol=1e-15)
        assert r.flagged == ["1"]
        assert r.mean_intensity == 2.0
        assert "1 negative" in r.summary_text()

    def test_binary_weights_are_uniform(self):
        r = prop1_weights(intensity_panel([0, 0, 1, 1, 1]))
        assert_allclose(r.weights.weight, [1 / 3] * 3)

    def test_no_intensity_variation(self):
        with pytest.raises(EstimationError, match="no intensity variation"):
            prop1_weights(intensity_panel([2, 2, 2]))

    def test_requires_common_switch(self):
        D = np.array([[0, 1, 1], [0, 0, 1], [0, 0, 0]], dtype=float)
        with pytest.raises(DesignMismatchError, match="common switch"):
            prop1_weights(Panel.from_arrays(np.zeros((3, 3)), D))

    @settings(max_examples=40, deadline=None)
    @given(seeds)
    def test_weights_sum_to_one_and_decompose(self, seed):
        rng = np.random.default_rng(seed)
        G, T = int(rng.integers(4, 20)), int(rng.integers(3, 8))
        F = int(rng.integers(2, T + 1))
        I = rng.choice([0.0, 0.5, 1.0, 2.0, 3.0], size=G)
        if np.unique(I).size < 2:
            I[:2] = [0.0, 1.0]
        N = np.repeat(rng.integers(1, 5, size=(G, 1)), T, axis=1).astype(float)
        effect = rng.normal(1, 2, size=G)
        D = I[:, None] * (np.arange(1, T + 1)[None, :] >= F)
        Y = fe_noise(rng, G, T) + effect[:, None] * D
        r = prop1_weights(intensity_panel(I, T, F, Y, N))
        assert abs(r.weights.weight.sum() - 1) < 1e-10
        nz = I != 0
        expected = float(np.sum(r.weights.weight.to_numpy() * effect[nz]))
        for t in range(F, T + 1):
            assert_allclose(r.coefficient[f"period[{t}]"], expected, atol=1e-8)


class TestDistributedLag:
    def binary_panel(self, rng, G=10, T=8):
        D = (rng.random((G, T)) < 0.4).astype(float)
        return Panel.from_arrays(fe_noise(rng, G, T), D)

    def test_sum_constraints(self, rng):
        p = self.binary_panel(rng)
        sums = weight_sums(prop3_weights(p, 2))
        for (l, lp), s in sums.items():
            assert_allclose(s, 1.0 if l == lp else 0.0, atol=1e-10)

    def test_static_case(self, rng):
        r = prop3_weights(self.binary_panel(rng), 0)
        assert_allclose(r.weights.weight.sum(), 1.0, atol=1e-10)

    def test_homogeneous_effects_recovered(self, rng):
        G, T, gamma = 12, 8, [1.0, 0.5, -0.25]
        D = (rng.random((G, T)) < 0.4).astype(float)
        lagged = [np.pad(D, ((0, 0), (k, 0)))[:, :T] for k in range(3)]
        Y = fe_noise(rng, G, T) + sum(g * x for g, x in zip(gamma, lagged))
        r = prop3_weights(Panel.from_arrays(Y, D), 2)
        assert_allclose([r.coefficient[f"lag[{k}]"] for k in range(3)], gamma, atol=1e-8)
        w = r.weights
        for l in range(3):
            rec = sum(gamma[lp] * w[(w.target_lag == l) & (w.lag == lp)].weight.sum()
                      for lp in range(3))
            assert_allclose(rec, gamma[l], atol=1e-10)

    def test_heterogeneous_decomposition_identity(self, rng):
        G, T, K = 12, 7, 1
        D = (rng.random((G, T)) < 0.5).astype(float)
        lagged = [np.pad(D, ((0, 0), (k, 0)))[:, :T] for k in range(K + 1)]
        delta = [rng.normal(size=(G, T)) for _ in range(K + 1)]
        Y = fe_noise(rng, G, T) + sum(d * x for d, x in zip(delta, lagged))
        r = prop3_weights(Panel.from_arrays(Y, D), K)
        w = r.weights
        gi = w.group.astype(int).to_numpy() - 1
        ti = w.period.to_numpy() - 1
        cell_effect = np.choose(w.lag.to_numpy(), [d[gi, ti] for d in delta])
        contrib = w.weight.to_numpy() * cell_effect
        for l in range(K + 1):
            rec = contrib[(w.target_lag == l).to_numpy()].sum()
            assert_allclose(rec, r.coefficient[f"lag[{l}]"], atol=1e-8)

    def test_constant_treatment_rank_error(self):
        p = Panel.from_arrays(np.zeros((3, 4)), np.ones((3, 4)))
        with pytest.raises(RankDeficientError, match="lag"):
            prop3_weights(p, 0)

    def test_requires_binary(self):
        D = np.array([[0, 2, 2], [0, 0, 1], [0, 0, 0]], dtype=float)
        with pytest.raises(DesignMismatchError):
            prop3_weights(Panel.from_arrays(np.zeros((3, 3)), D), 0)


class TestLocalProjection:
    def test_hand_example(self):
        D = np.array([[0, 1, 1], [0, 0, 1]], dtype=float)
        r = prop4_weights(Panel.from_arrays(np.zeros((2, 3)), D), 1)
        got = {(g, t): w for g, t, w in r.weights.itertuples(index=False)}
        assert got == pytest.approx({("1", 1): -1.0, ("1", 2): 1.0, ("2", 2): -1.0})
        s = r.summaries["horizon 1"]
        assert s["total"] == pytest.approx(-1.0) and s["min"] == pytest.approx(-1.0)

    @settings(max_examples=40, deadline=None)
    @given(seeds)
    def test_horizon_zero_sums_to_one(self, seed):
        p = staggered_panel(np.random.default_rng(seed))
        try:
            r = prop4_weights(p, 0)
        except EstimationError:
            return
        assert abs(r.weights.weight.sum() - 1) < 1e-10

    def test_constant_switch_date_noted(self):
        r = prop4_weights(intensity_panel([0, 1, 1, 1], T=5, F=3), 1)
        assert any("do not vary" in n for n in r.notes)

    def test_no_treated_cells(self):
        D = np.array([[0, 0, 0, 1], [0, 0, 0, 0]], dtype=float)
        with pytest.raises(EstimationError, match="no treated cells"):
            prop4_weights(Panel.from_arrays(np.zeros((2, 4)), D), 1)

    @pytest.mark.parametrize("ell", [0, 1, 2])
    def test_decomposition_identity(self, rng, ell):
        G, T = 15, 7
        F = rng.integers(2, T + 2, size=G)
        D = (np.arange(1, T + 1)[None, :] >= F[:, None]).astype(float)
        delta = rng.normal(1, 1, size=(G, T))
        Y = fe_noise(rng, G, T) + delta * D
        p = Panel.from_arrays(Y, D)
        r = prop4_weights(p, ell)
        gi = r.weights.group.astype(int).to_numpy() - 1
        ti = r.weights.period.to_numpy() - 1
        rec = np.sum(r.weights.weight.to_numpy() * delta[gi, ti + ell])
        assert_allclose(local_projection_coefficient(p, ell), rec, atol=1e-8)


class TestImpliedEventStudy:
    def test_zero_coefficients(self, rng):
        p = staggered_panel(rng, G=15, T=6)
        imp = twfe_implied_event_study(p, 1, gamma=[0.0, 0.0])
        assert all(v == 0 for v in imp.values())

    def test_homogeneous_effects_match_did(self, rng):
        G, T, gamma = 20, 7, [1.0, 0.5]
        p = staggered_panel(rng, G=G, T=T)
        D = p.treatment
        Y = fe_noise(rng, G, T) + gamma[0] * D + gamma[1] * np.pad(D, ((0, 0), (1, 0)))[:, :T]
        q = p.replace(outcome=Y)
        imp = twfe_implied_event_study(q, 1)
        es = event_study(q)
        for ell, h in es.horizon_effects.items():
            assert_allclose(imp[ell], h.estimate, atol=1e-8)

    def test_too_many_lags(self, toy):
        with pytest.raises(EstimationError, match="pre-sample"):
            twfe_implied_event_study(toy, 3)

    def test_contrast_bootstrap(self, rng):
        p = staggered_panel(rng, G=30, T=6)
        res = twfe_contrast_bootstrap(p, 1, BootstrapSpec(30, seed=0))
        assert res.labels[0] == "contrast[0]"
        assert np.isfinite(res.se[0])
