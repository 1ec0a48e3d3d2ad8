"""Long-difference placebo estimators.

A placebo at horizon ``l`` compares the outcome change of a switcher from
``F_g - 1`` back to ``F_g - l - 2`` with the same change among the groups
that serve as its controls at ``F_g + l``. It spans as many periods as the
actual estimator at that horizon, so a nonzero placebo signals differential
trends of the size that would bias the actual estimate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from . import _engine
from .estimators import _group_index, _Row, _switchers
from .exceptions import EstimationError, HorizonError, NoControlsError
from .inference import BootstrapSpec, bootstrap_event_study
from .panel import Panel, design_stats


@dataclass(frozen=True)
class PlaceboEffect:
    estimate: float
    mass: float
    n_groups: int


@dataclass(frozen=True)
class JointTest:
    statistic: float
    p_value: float
    df: int
    n_replicates: int = 0
    reference: str = "chi2"


@dataclass
class PlaceboResult:
    horizon_placebos: dict
    l_pl_u: int
    joint_test: JointTest | None = None
    se: dict = field(default_factory=dict)

    def as_records(self):
        return [{"horizon": ell, "x": -2 - ell, "estimate": p.estimate, "mass": p.mass,
                 "n_groups": p.n_groups, "se": self.se.get(ell, np.nan)}
                for ell, p in sorted(self.horizon_placebos.items())]


def did_pl_g_ell(panel: Panel, stats, g, ell: int) -> float:
    """Placebo DID of group ``g`` between ``F_g - 1`` and ``F_g - l - 2``."""
    gi = _group_index(panel, g)
    F = np.asarray(stats.F)
    Fg = int(F[gi])
    if not stats.untreated[gi]:
        raise HorizonError(f"group {panel.groups[gi]} is not initially untreated")
    if Fg > stats.t_u or not 0 <= ell <= min(stats.t_u - Fg, Fg - 3):
        raise HorizonError(
            f"placebo horizon {ell} not admissible for group {panel.groups[gi]} "
            f"(F_g={Fg}, T_u={stats.t_u})")
    Y, N = panel.outcome, panel.cell_size
    t, b, past = Fg + ell - 1, Fg - 2, Fg - ell - 3
    controls = np.flatnonzero(np.asarray(stats.untreated) & (F > Fg + ell))
    if controls.size == 0:
        raise NoControlsError(
            f"no never-switched controls at horizon {ell} for group {panel.groups[gi]}")
    n_u = N[controls, t].sum()
    ctrl = sum(N[c, t] / n_u * (Y[c, past] - Y[c, b]) for c in controls)
    return float(Y[gi, past] - Y[gi, b] - ctrl)


def did_pl_plus_ell(panel: Panel, stats, ell: int) -> float:
    """Mass-weighted average of group placebos at horizon ``l``."""
    if stats.l_pl_u < 0:
        raise EstimationError("no placebos computable: all switchers switch at period 2")
    if not 0 <= ell <= stats.l_pl_u:
        raise HorizonError(f"placebo horizon {ell} outside 0..{stats.l_pl_u}")
    F = np.asarray(stats.F)
    num = mass = 0.0
    for g in _switchers(stats, ell):
        if F[g] < ell + 3:
            continue
        w = panel.discount ** (F[g] + ell) * panel.cell_size[g, F[g] + ell - 1]
        mass += w
        num += w * did_pl_g_ell(panel, stats, _Row(g), ell)
    if mass == 0:
        raise HorizonError(f"no groups admit a placebo at horizon {ell}")
    return num / mass


def placebo_joint_test(placebos, bootstrap_cov, n_replicates=None, n_clusters=None) -> JointTest:
    """Wald test that every placebo is zero.

    Uses the pseudo-inverse of the bootstrap covariance; the degrees of
    freedom ``k`` are its numerical rank. Without ``n_clusters`` the
    statistic is referred to a chi-squared with ``k`` degrees of freedom.
    With ``n_clusters = G`` resampled groups it is treated as a Hotelling
    statistic, ``W (G - k) / (k (G - 1)) ~ F(k, G - k)``, which accounts for
    the covariance being estimated from ``G`` clusters.
    """
    p = np.atleast_1d(np.asarray(placebos, dtype=float))
    V = np.atleast_2d(np.asarray(bootstrap_cov, dtype=float))
    if p.size == 0:
        raise ValueError("joint test needs at least one placebo")
    if V.shape != (p.size, p.size):
        raise ValueError(f"covariance shape {V.shape} does not match {p.size} placebos")
    if n_replicates is not None and n_replicates < p.size:
        warnings.warn(f"{n_replicates} bootstrap replicates for {p.size} placebos: "
                      "covariance is singular, using pseudo-inverse", stacklevel=2)
    if not np.all(np.isfinite(V)):
        raise EstimationError("bootstrap covariance of placebos is not finite")
    rank = int(np.linalg.matrix_rank(V))
    use_f = n_clusters is not None and n_clusters > rank
    ref = "hotelling-f" if use_f else "chi2"
    if not np.any(p):
        return JointTest(0.0, 1.0, rank, n_replicates or 0, ref)
    if rank == 0:
        raise EstimationError("bootstrap covariance of placebos is zero")
    stat = float(p @ np.linalg.pinv(V, hermitian=True) @ p)
    if use_f:
        G = n_clusters
        pval = sps.f.sf(stat * (G - rank) / (rank * (G - 1)), rank, G - rank)
    else:
        pval = sps.chi2.sf(stat, rank)
    return JointTest(stat, float(pval), rank, n_replicates or 0, ref)


def placebo_study(panel: Panel, stats=None, *, bootstrap: BootstrapSpec | None = None,
                  arm: str = "plus") -> PlaceboResult:
    """All placebos of an arm, with bootstrap standard errors and the joint
    test when ``bootstrap`` is given."""
    stats = stats if stats is not None else design_stats(panel)
    l_pl = stats.l_pl_u
    if l_pl < 0:
        raise EstimationError("no placebos computable: all switchers switch at period 2")
    design = _engine.ArmDesign.from_stats(panel, stats)
    horizons = list(range(l_pl + 1))
    arr = _engine.event_study_arrays(panel.outcome, panel.cell_size, design, horizons,
                                     effects=False)
    found = {}
    for j, ell in enumerate(horizons):
        if arr.placebo_mass[j] > 0:
            found[ell] = PlaceboEffect(float(arr.placebo[j]), float(arr.placebo_mass[j]),
                                       int(arr.placebo_n_groups[j]))
    if arm != "plus":
        found = _arm_placebos(panel, stats, arm, horizons) or found
    result = PlaceboResult(found, l_pl)
    if bootstrap is not None and found:
        hs = sorted(found)
        bt = bootstrap_event_study(panel, bootstrap, stats=stats, arm=arm,
                                   horizons=list(range(max(hs) + 1)), pl_horizons=hs)
        idx = [bt.component(f"placebo[{h}]") for h in hs]
        se = bt.se[idx]
        result.se = {h: float(v) for h, v in zip(hs, se)}
        cov = bt.cov[np.ix_(idx, idx)]
        valid = int(np.isfinite(bt.replicates[:, idx]).all(axis=1).sum())
        try:
            result.joint_test = placebo_joint_test([found[h].estimate for h in hs], cov, valid,
                                                    panel.n_groups)
        except EstimationError as err:
            warnings.warn(f"joint placebo test skipped: {err}", stacklevel=2)
    return result


def _arm_placebos(panel, stats, arm, horizons):
    from .inference import _arm_arrays, _arm_setup
    setup = _arm_setup(panel, stats, arm)
    a = _arm_arrays(panel, panel.cell_size, setup, arm, horizons, placebos=True)
    return {ell: PlaceboEffect(float(a.placebo[j]), float(a.placebo_mass[j]),
                               int(a.placebo_n_groups[j]))
            for j, ell in enumerate(horizons) if a.placebo_mass[j] > 0}


__all__ = ["JointTest", "PlaceboEffect", "PlaceboResult", "did_pl_g_ell",
           "did_pl_plus_ell", "placebo_joint_test", "placebo_study"]
