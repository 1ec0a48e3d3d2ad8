import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from designs import general_panel, staggered_panel, toy_panel
from didmulti.estimators import (
    delta_plus_double_sum,
    delta_plus_hat,
    delta_plus_trimmed,
    did_g_ell,
    did_minus_and_combined,
    did_plus_ell,
    event_study,
    excluded_cells,
    mirror,
)
from didmulti.exceptions import DesignMismatchError, DIDError, EstimationError, HorizonError
from didmulti.panel import Panel, design_stats

seeds = st.integers(0, 2**32 - 1)


class TestToyGoldens:
    def test_group_dids(self, toy, toy_stats):
        assert did_g_ell(toy, toy_stats, "1", 0) == 1.5
        assert did_g_ell(toy, toy_stats, "2", 1) == 3.0

    @pytest.mark.parametrize("ell, expected", [(0, (1.75, 1.0)), (1, (3.0, 1.0)), (2, (1.0, 0.0))])
    def test_horizon_averages(self, toy, toy_stats, ell, expected):
        assert_allclose(did_plus_ell(toy, toy_stats, ell), expected, atol=1e-12)

    def test_aggregates(self, toy, toy_stats):
        assert abs(delta_plus_hat(toy, toy_stats) - 2.625) < 1e-12
        assert abs(delta_plus_trimmed(toy, toy_stats, 1) - 2.375) < 1e-12
        assert abs(delta_plus_double_sum(toy, toy_stats) - 2.625) < 1e-12

    def test_event_study_result(self, toy):
        r = event_study(toy)
        assert_allclose([r.horizon_effects[ell].estimate for ell in range(3)], [1.75, 3, 1])
        assert_allclose([r.first_stage[ell] for ell in range(3)], [1, 1, 0])
        assert_allclose(list(r.weights().values()), [0.4, 0.4, 0.2])
        assert r.aggregate == pytest.approx(2.625, abs=1e-12)
        assert r.trimmed[1] == pytest.approx(2.375, abs=1e-12)
        assert [rec["horizon"] for rec in r.as_records()] == [0, 1, 2]

    def test_horizon_out_of_range(self, toy, toy_stats):
        with pytest.raises(HorizonError):
            did_plus_ell(toy, toy_stats, 3)
        with pytest.raises(HorizonError):
            did_g_ell(toy, toy_stats, "2", 2)

    def test_unknown_group(self, toy, toy_stats):
        with pytest.raises(KeyError):
            did_g_ell(toy, toy_stats, "9", 0)


class TestEngineAgreement:
    @settings(max_examples=60, deadline=None)
    @given(seeds)
    def test_scalar_and_vectorised_paths_agree(self, seed):
        p = general_panel(np.random.default_rng(seed))
        s = design_stats(p)
        r = event_study(p, s)
        for ell, h in r.horizon_effects.items():
            did, fs = did_plus_ell(p, s, ell)
            assert_allclose(h.estimate, did, rtol=1e-10, atol=1e-12)
            assert_allclose(h.first_stage, fs, rtol=1e-10, atol=1e-12)
        if np.isfinite(r.aggregate):
            assert_allclose(r.aggregate, delta_plus_hat(p, s), rtol=1e-10)
            assert_allclose(r.aggregate, delta_plus_double_sum(p, s), rtol=1e-10)


class TestInvariances:
    @settings(max_examples=30, deadline=None)
    @given(seeds, st.floats(-50, 50), st.floats(0.1, 10))
    def test_level_shifts_and_scaling(self, seed, c, lam):
        rng = np.random.default_rng(seed)
        p = general_panel(rng)
        base = event_study(p)
        G, T = p.shape
        shifted = p.replace(outcome=p.outcome + c + rng.normal(size=(1, T)) + rng.normal(size=(G, 1)))
        r = event_study(shifted)
        for ell, h in base.horizon_effects.items():
            assert_allclose(r.horizon_effects[ell].estimate, h.estimate, atol=1e-9)
        scaled = event_study(p.replace(outcome=lam * p.outcome))
        for ell, h in base.horizon_effects.items():
            assert_allclose(scaled.horizon_effects[ell].estimate, lam * h.estimate,
                            rtol=1e-10, atol=1e-10)

    def test_common_trend_only_gives_zero(self, rng):
        p = staggered_panel(rng, G=12, T=6)
        gamma = rng.normal(size=6)
        r = event_study(p.replace(outcome=np.tile(gamma, (12, 1))))
        for h in r.horizon_effects.values():
            assert abs(h.estimate) < 1e-12

    @settings(max_examples=30, deadline=None)
    @given(seeds)
    def test_group_permutation(self, seed):
        rng = np.random.default_rng(seed)
        p = general_panel(rng)
        q = p.take(rng.permutation(p.n_groups))
        a, b = event_study(p), event_study(q)
        assert a.horizons == b.horizons
        for ell in a.horizons:
            assert_allclose(a.horizon_effects[ell].estimate, b.horizon_effects[ell].estimate,
                            rtol=1e-12, atol=1e-12)

    def test_constant_effect_recovered(self, rng):
        p = staggered_panel(rng, G=20, T=6)
        D = p.treatment
        r = event_study(p.replace(outcome=rng.normal(size=(20, 1)) + 2.0 * D))
        for h in r.horizon_effects.values():
            assert_allclose(h.estimate, 2.0, atol=1e-12)
        assert_allclose(r.aggregate, 2.0, atol=1e-12)


class TestExclusion:
    def test_dip_below_baseline_is_excluded(self):
        D = np.array([[0, 1, -1, -1], [0, 0, 0, 1], [0, 0, 0, 0], [0, 0, 1, 1]], dtype=float)
        p = Panel.from_arrays(np.zeros((4, 4)), D)
        s = design_stats(p)
        cells = excluded_cells(p, s)
        assert ("1", 1) in cells and ("1", 0) not in cells
        assert s.n_excluded == len(cells)


def direct_minus(panel, ell):
    """Initially-treated arm straight from its definition: status-quo
    minus actual outcome change, controls being initially-treated groups
    that have not switched yet."""
    D, Y, N = panel.treatment, panel.outcome, panel.cell_size
    T = panel.n_periods
    F = np.array([next((t + 1 for t in range(1, T) if D[g, t] != D[g, 0]), T + 1)
                  for g in range(panel.n_groups)])
    treated = D[:, 0] == 1
    t_u = F[treated].max() - 1
    num = mass = 0.0
    for g in np.flatnonzero(treated & (F <= t_u - ell)):
        t = F[g] + ell
        ctrl = np.flatnonzero(treated & (F > t))
        w = N[ctrl, t - 1] / N[ctrl, t - 1].sum()
        dc = w @ (Y[ctrl, t - 1] - Y[ctrl, F[g] - 2])
        did = -((Y[g, t - 1] - Y[g, F[g] - 2]) - dc)
        num += N[g, t - 1] * did
        mass += N[g, t - 1]
    return num / mass


class TestMinusArm:
    def binary_panel(self, rng, G=16, T=6):
        while True:
            start = (rng.random(G) < 0.5).astype(float)
            flips = rng.random((G, T - 1)) < 0.25
            D = np.concatenate([start[:, None], (start[:, None] + np.cumsum(flips, 1)) % 2], 1)
            p = Panel.from_arrays(rng.normal(size=(G, T)), D, rng.integers(1, 4, (G, T)))
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    minus, _ = did_minus_and_combined(p)
            except DIDError:
                continue
            if minus is not None:
                return p

    def test_mirror_identity(self, rng):
        # D -> 1-D and Y -> -Y turns the initially-untreated arm into the other one
        for _ in range(10):
            p = self.binary_panel(rng)
            plus = event_study(p)
            flipped = p.replace(treatment=1 - p.treatment, outcome=-p.outcome)
            minus = event_study(flipped, arm="minus")
            for ell, h in plus.horizon_effects.items():
                assert_allclose(minus.horizon_effects[ell].estimate, h.estimate, atol=1e-12)

    def test_matches_direct_formula(self, rng):
        for _ in range(10):
            p = self.binary_panel(rng)
            minus = event_study(p, arm="minus")
            for ell, h in minus.horizon_effects.items():
                assert_allclose(h.estimate, direct_minus(p, ell), rtol=1e-10, atol=1e-12)

    def test_combined_is_mass_weighted(self, rng):
        p = self.binary_panel(rng)
        plus, minus = event_study(p), event_study(p, arm="minus")
        comb = event_study(p, arm="combined")
        for ell, h in comb.horizon_effects.items():
            parts = [r.horizon_effects[ell] for r in (plus, minus) if ell in r.horizon_effects]
            expected = sum(x.mass * x.estimate for x in parts) / sum(x.mass for x in parts)
            assert_allclose(h.estimate, expected, rtol=1e-12)
            assert h.mass == pytest.approx(sum(x.mass for x in parts))

    def test_no_initially_treated_switchers(self, toy):
        with pytest.warns(UserWarning, match="no initially-treated"):
            minus, comb = did_minus_and_combined(toy)
        assert minus is None
        assert comb.aggregate == pytest.approx(2.625)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with pytest.raises(EstimationError):
                event_study(toy, arm="minus")

    def test_requires_binary(self):
        D = np.array([[0, 2, 2], [1, 1, 0], [0, 0, 0]], dtype=float)
        with pytest.raises(DesignMismatchError):
            did_minus_and_combined(Panel.from_arrays(np.zeros((3, 3)), D))

    def test_mirror_flips_treatment(self):
        p = toy_panel()
        assert np.array_equal(mirror(p).treatment, 1 - p.treatment)

    def test_unknown_arm(self, toy):
        with pytest.raises(ValueError):
            event_study(toy, arm="both")
