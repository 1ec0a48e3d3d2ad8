import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from designs import general_panel, staggered_panel
from didmulti import _engine
from didmulti.estimators import HorizonEffect, event_study
from didmulti.exceptions import HorizonError, SparseBootstrapError
from didmulti.inference import (
    BootstrapResult,
    BootstrapSpec,
    ConfidenceInterval,
    analytic_ci,
    analytic_ci_batch,
    bootstrap_event_study,
    cluster_bootstrap,
    influence_decomposition,
    influence_terms,
    z_quantile,
)
from didmulti.panel import design_stats

seeds = st.integers(0, 2**32 - 1)


def loop_influence(panel, ell):
    """Influence terms evaluated term by term from their definition."""
    Y, D, N, beta = panel.outcome, panel.treatment, panel.cell_size, panel.discount
    G, T = panel.shape
    F = np.array([next((t + 1 for t in range(1, T) if D[g, t] != D[g, 0]), T + 1)
                  for g in range(G)])
    arm = D[:, 0] == 0
    t_u = F[arm].max() - 1
    n1 = sum(beta ** (F[g] + ell) * N[g, F[g] + ell - 1]
             for g in range(G) if arm[g] and F[g] <= t_u - ell)
    U = np.zeros(G)
    for g in range(G):
        if not arm[g]:
            continue
        for t in range(ell + 2, t_u + 1):
            n1_t = sum(N[h, t - 1] for h in range(G) if arm[h] and F[h] == t - ell)
            nu_t = sum(N[h, t - 1] for h in range(G) if arm[h] and F[h] > t)
            ind = float(F[g] == t - ell) - (n1_t / nu_t if F[g] > t else 0.0)
            U[g] += beta ** t * N[g, t - 1] * ind * (Y[g, t - 1] - Y[g, t - ell - 2])
    return G / n1 * U


class TestInfluenceTerms:
    def test_toy_goldens(self, toy, toy_stats):
        dec = influence_decomposition(toy, toy_stats)
        assert_allclose(dec.u_g_ell[0], [3, 2.25, 0], atol=1e-12)
        assert_allclose(dec.u_g_ell[1], [4.5, 4.5, 0], atol=1e-12)
        assert_allclose(dec.u_g_ell[2], [3, 0, 0], atol=1e-12)
        assert abs(dec.sigma2_ell[0] - 1.625) < 1e-12
        assert_allclose(influence_terms(toy, toy_stats, 0), [3, 2.25, 0])

    @settings(max_examples=40, deadline=None)
    @given(seeds)
    def test_match_term_by_term_definition(self, seed):
        p = general_panel(np.random.default_rng(seed))
        s = design_stats(p)
        dec = influence_decomposition(p, s)
        for ell in dec.horizons:
            assert_allclose(dec.u_g_ell[ell], loop_influence(p, ell), rtol=1e-10, atol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(seeds)
    def test_mean_reproduces_estimate(self, seed):
        p = general_panel(np.random.default_rng(seed))
        dec = influence_decomposition(p)
        r = event_study(p)
        for ell in dec.horizons:
            assert_allclose(dec.u_g_ell[ell].mean(), r.horizon_effects[ell].estimate, rtol=1e-10,
                            atol=1e-12)
        if np.isfinite(r.aggregate):
            assert_allclose(dec.u_g.mean(), r.aggregate, rtol=1e-10, atol=1e-12)
        assert dec.identity_error() < 1e-10

    def test_trimmed_identity(self, toy, toy_stats):
        dec = influence_decomposition(toy, toy_stats, upto=1)
        assert_allclose(dec.u_g.mean(), 2.375, atol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(seeds, st.floats(-100, 100), st.floats(-5, 5).filter(lambda x: abs(x) > 0.01))
    def test_variance_invariance(self, seed, c, lam):
        p = general_panel(np.random.default_rng(seed))
        base = influence_decomposition(p)
        shifted = influence_decomposition(p.replace(outcome=p.outcome + c))
        scaled = influence_decomposition(p.replace(outcome=lam * p.outcome))
        for ell in base.horizons:
            assert_allclose(shifted.sigma2_ell[ell], base.sigma2_ell[ell], rtol=1e-8, atol=1e-10)
            assert_allclose(np.sqrt(scaled.sigma2_ell[ell]), abs(lam) * np.sqrt(base.sigma2_ell[ell]),
                            rtol=1e-8, atol=1e-10)

    def test_out_of_range(self, toy, toy_stats):
        with pytest.raises(HorizonError):
            influence_terms(toy, toy_stats, 5)


class TestAnalyticCI:
    def test_toy_interval(self, toy, toy_stats):
        ci = analytic_ci(toy, toy_stats, 0)
        half = z_quantile(0.05) * np.sqrt(1.625 / 3)
        assert_allclose([ci.lower, ci.upper], [1.75 - half, 1.75 + half], atol=1e-12)
        assert 1.75 in ci and ci.method == "analytic"

    def test_z_quantile(self):
        assert_allclose(z_quantile(0.05), 1.959963984540054, rtol=1e-14)
        with pytest.raises(ValueError):
            z_quantile(1.5)

    def test_single_contributor_is_degenerate(self, toy, toy_stats):
        assert analytic_ci(toy, toy_stats, 2).degenerate
        assert not analytic_ci(toy, toy_stats, 0).degenerate

    def test_identical_outcomes_contain_estimate(self, rng):
        p = staggered_panel(rng, G=10, T=5)
        p = p.replace(outcome=np.ones(p.shape))
        ci = analytic_ci(p, None, "aggregate")
        assert ci.lower <= 0.0 <= ci.upper

    def test_batch_matches_single(self, rng):
        p = staggered_panel(rng, G=25, T=6, weights=True)
        s = design_stats(p)
        design = _engine.ArmDesign.from_stats(p, s)
        Ys = p.outcome[None] + rng.normal(size=(4,) + p.shape)
        hs = list(range(s.l_u + 1))
        out = analytic_ci_batch(Ys, p.cell_size, design, hs)
        for b in range(4):
            q = p.replace(outcome=Ys[b])
            dec = influence_decomposition(q, s)
            for ell in dec.horizons:
                ci = analytic_ci(q, s, ell, decomposition=dec)
                assert_allclose(out["did"][b, ell], dec.estimates[ell], rtol=1e-12)
                assert_allclose(out["half"][b, ell], (ci.upper - ci.lower) / 2, rtol=1e-10)
            agg = analytic_ci(q, s, "aggregate", decomposition=dec)
            assert_allclose(out["agg_half"][b], agg.width / 2, rtol=1e-10)

    def test_interval_validation(self):
        with pytest.raises(ValueError):
            ConfidenceInterval(1.0, 0.0, 0.05, "analytic")
        with pytest.raises(ValueError):
            ConfidenceInterval(0.0, 1.0, 0.05, "bayes")


class TestBootstrap:
    def test_spec_validation(self):
        with pytest.raises(ValueError):
            BootstrapSpec(replications=1)
        with pytest.raises(ValueError):
            BootstrapSpec(cluster="period")

    def test_multiplicities(self):
        M = _engine.resample_multiplicities(7, 50, 3)
        assert M.shape == (50, 7)
        assert np.all(M.sum(axis=1) == 7)
        assert_array_equal(M, _engine.resample_multiplicities(7, 50, 3))
        assert not np.array_equal(M, _engine.resample_multiplicities(7, 50, 4))
        # replicate b does not depend on how many replicates are drawn
        assert_array_equal(M[:10], _engine.resample_multiplicities(7, 10, 3))

    def test_deterministic(self, rng):
        p = staggered_panel(rng, G=30, T=6)
        spec = BootstrapSpec(60, seed=11)
        a = bootstrap_event_study(p, spec, pl_horizons=[0])
        b = bootstrap_event_study(p, spec, pl_horizons=[0])
        assert_array_equal(a.replicates, b.replicates)
        c = bootstrap_event_study(p, BootstrapSpec(60, seed=12), pl_horizons=[0])
        assert not np.allclose(a.se, c.se)

    def test_fast_path_equals_explicit_resampling(self, rng):
        p = staggered_panel(rng, G=20, T=6, weights=True)
        s = design_stats(p)
        hs = list(range(s.l_u + 1))
        spec = BootstrapSpec(40, seed=5)
        fast = bootstrap_event_study(p, spec, stats=s, horizons=hs)

        def stat(q):
            r = event_study(q)
            missing = HorizonEffect(np.nan, 0, 0, 0)
            return [r.horizon_effects.get(ell, missing).estimate for ell in hs] + [r.aggregate]

        slow = cluster_bootstrap(p, spec, stat)
        both = np.isfinite(slow.replicates) & np.isfinite(fast.replicates)
        assert both.sum() > 0.8 * both.size
        assert_allclose(fast.replicates[both], slow.replicates[both], rtol=1e-10, atol=1e-12)
        assert_array_equal(np.isfinite(fast.replicates), np.isfinite(slow.replicates))

    def test_constant_statistic_has_zero_se(self, rng):
        p = staggered_panel(rng, G=10, T=4)
        res = cluster_bootstrap(p, BootstrapSpec(20), lambda q: 3.0)
        assert_array_equal(res.se, [0.0])
        ci = res.percentile_ci()
        assert ci.lower == ci.upper == 3.0

    def test_sparse_design_raises(self, toy):
        with pytest.raises(SparseBootstrapError, match="too sparse"):
            bootstrap_event_study(toy, BootstrapSpec(50, seed=1))
        with pytest.warns(UserWarning, match="dropped"):
            bootstrap_event_study(toy, BootstrapSpec(50, seed=1, max_invalid_share=1.0))

    def test_result_statistics(self):
        reps = np.array([[1.0, 2.0], [3.0, np.nan], [5.0, 4.0], [7.0, 6.0]])
        res = BootstrapResult([4.0, 4.0], reps, ["a", "b"])
        assert_array_equal(res.n_invalid, [0, 1])
        assert_allclose(res.se, [np.std([1, 3, 5, 7], ddof=1), np.std([2, 4, 6], ddof=1)])
        # covariance only from replicates valid in every component
        assert_allclose(res.cov, np.cov(reps[[0, 2, 3]].T))
        assert res.component("b") == 1
        lo, hi = np.percentile([1, 3, 5, 7], [2.5, 97.5])
        ci = res.percentile_ci(0)
        assert_allclose([ci.lower, ci.upper], [lo, hi])
        n = res.normal_ci(1)
        assert_allclose(n.upper - n.lower, 2 * z_quantile(0.05) * res.se[1])

    def test_minus_and_combined_arms(self, rng):
        G, T = 30, 6
        start = (np.arange(G) % 2).astype(float)
        F = rng.integers(2, T + 2, size=G)
        D = np.where(np.arange(1, T + 1)[None, :] >= F[:, None], 1 - start[:, None], start[:, None])
        from didmulti.panel import Panel
        p = Panel.from_arrays(rng.normal(size=(G, T)), D)
        for arm in ("minus", "combined"):
            res = bootstrap_event_study(p, BootstrapSpec(50, seed=2), arm=arm)
            est = event_study(p, arm=arm)
            k = res.component("aggregate")
            assert_allclose(res.estimate[k], est.aggregate, rtol=1e-12)
            assert np.isfinite(res.se[k]) and res.se[k] > 0
