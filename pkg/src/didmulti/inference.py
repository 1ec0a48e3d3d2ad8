"""Analytic and bootstrap inference.

The analytic variance of the initially-untreated estimators comes from
per-group influence terms whose group average reproduces the point
estimate exactly. Everything else (initially-treated and combined arms,
placebo vectors, TWFE contrasts) uses a bootstrap that resamples whole
groups with replacement.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from . import _engine
from .estimators import mirror
from .exceptions import (
    DIDError,
    EstimationError,
    HorizonError,
    SparseBootstrapError,
)
from .panel import Panel, design_stats

METHODS = ("analytic", "bootstrap-percentile", "bootstrap-normal")


def z_quantile(alpha: float) -> float:
    """Two-sided normal critical value ``z_{1-alpha/2}``."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return float(sps.norm.ppf(1 - alpha / 2))


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    alpha: float
    method: str
    degenerate: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown CI method {self.method!r}")
        if self.lower > self.upper:
            raise ValueError("lower bound exceeds upper bound")

    def __contains__(self, value):
        return self.lower <= value <= self.upper

    @property
    def width(self):
        return self.upper - self.lower


# ---------------------------------------------------------------- influence

def influence_coefficients(N, design, horizons):
    """Design part of the influence terms.

    Returns ``C`` of shape (H, G, T) such that
    ``U_{g,l} = sum_t C[l, g, t] * (Y[g, t] - Y[g, t - l - 1])`` and the
    switcher masses ``N^1_l`` of shape (H,).
    """
    N = np.asarray(N, dtype=float)
    G, T = N.shape
    F, beta = design.F, design.beta
    t_u = int(np.max(np.where(design.arm, F, 0)) - 1)
    nyt = _engine.not_yet_switched(design)
    nu = (N * nyt).sum(axis=0)
    C = np.zeros((len(horizons), G, T))
    n1 = np.zeros(len(horizons))
    for j, ell in enumerate(horizons):
        elig = design.arm & design.eligible[:, min(ell, T - 1)]
        for t in range(ell + 2, t_u + 1):            # 1-based period
            sw = elig & (F == t - ell)
            if not sw.any():
                continue
            bt = beta ** t
            n1_t = N[sw, t - 1].sum()
            n1[j] += bt * n1_t
            col = np.where(sw, 1.0, 0.0) - np.where(nyt[:, t - 1], n1_t / nu[t - 1], 0.0)
            C[j, :, t - 1] = bt * N[:, t - 1] * col
    return C, n1


def _lagged_diffs(Y, ell):
    """``Y[..., t] - Y[..., t-l-1]`` with zeros where the lag is undefined."""
    out = np.zeros_like(Y)
    out[..., ell + 1:] = Y[..., ell + 1:] - Y[..., :-(ell + 1)]
    return out


def influence_arrays(Y, N, design, horizons):
    """Influence terms for a batch of outcome draws.

    Returns ``U`` of shape (..., H, G), already multiplied by ``G / N^1_l``,
    and the masses ``N^1_l``. Horizons without switchers give NaN rows.
    """
    Y = np.asarray(Y, dtype=float)
    G = design.n_groups
    C, n1 = influence_coefficients(N, design, horizons)
    U = np.full(Y.shape[:-2] + (len(horizons), G), np.nan)
    for j, ell in enumerate(horizons):
        if n1[j] > 0:
            U[..., j, :] = G / n1[j] * np.einsum("gt,...gt->...g", C[j], _lagged_diffs(Y, ell))
    return U, n1


@dataclass
class InfluenceDecomposition:
    """Per-group influence terms and the variances built from them.

    ``u_g_ell[l]`` and ``u_g`` are arrays over all groups in panel order;
    entries for groups outside the initially-untreated arm are zero.
    """

    horizons: list
    u_g_ell: dict
    u_g: np.ndarray
    sigma2_ell: dict
    sigma2: float
    estimates: dict
    aggregate: float
    n_groups: int
    contributors: dict = field(default_factory=dict)

    def identity_error(self):
        """Largest relative gap between ``mean(U)`` and the point estimate."""
        gaps = [abs(self.u_g_ell[ell].mean() - self.estimates[ell]) / max(1.0, abs(self.estimates[ell]))
                for ell in self.horizons]
        gaps.append(abs(self.u_g.mean() - self.aggregate) / max(1.0, abs(self.aggregate)))
        return max(gaps)


def _aggregate_influence(U, n1, fs, upto=None):
    """Influence of the ratio of weighted reduced-form to first-stage effects."""
    keep = n1 > 0
    if upto is not None:
        keep = keep & (np.arange(len(n1)) <= upto)
    w = np.where(keep, n1, 0.0) / n1[keep].sum()
    den = np.sum(w[keep] * fs[keep])
    if den == 0:
        raise EstimationError("no treatment exposure mass: weighted first stage is zero")
    Uz = np.where(keep[:, None], np.nan_to_num(U), 0.0)
    return np.einsum("h,...hg->...g", w, Uz) / den


def influence_decomposition(panel: Panel, stats=None, *, upto=None) -> InfluenceDecomposition:
    """Influence terms for every horizon and for the (optionally trimmed)
    aggregate of the initially-untreated arm."""
    stats = stats if stats is not None else design_stats(panel)
    design = _engine.ArmDesign.from_stats(panel, stats)
    horizons = list(range(stats.l_u + 1))
    U, n1 = influence_arrays(panel.outcome, panel.cell_size, design, horizons)
    arr = _engine.event_study_arrays(panel.outcome, panel.cell_size, design, horizons,
                                     placebos=False)
    fs = np.nan_to_num(arr.first_stage)
    u_agg = _aggregate_influence(U, n1, fs, upto)
    G = panel.n_groups
    arm = np.asarray(stats.untreated)
    present = [j for j in horizons if n1[j] > 0]
    est = {ell: float(arr.did[ell]) for ell in present}
    agg = float(arr.aggregate(upto=upto))
    s2 = {ell: float(np.sum((U[ell, arm] - est[ell]) ** 2) / G) for ell in present}
    s2_agg = float(np.sum((u_agg[arm] - agg) ** 2) / G)
    return InfluenceDecomposition(
        horizons=present, u_g_ell={ell: U[ell] for ell in present}, u_g=u_agg,
        sigma2_ell=s2, sigma2=s2_agg, estimates=est, aggregate=agg, n_groups=G,
        contributors={ell: int(arr.n_groups[ell]) for ell in present})


def influence_terms(panel: Panel, stats, ell: int) -> np.ndarray:
    """``U_{G,g,l}`` for every group, in panel order."""
    if not 0 <= ell <= stats.l_u:
        raise HorizonError(f"horizon {ell} outside 0..{stats.l_u}")
    design = _engine.ArmDesign.from_stats(panel, stats)
    U, n1 = influence_arrays(panel.outcome, panel.cell_size, design, [ell])
    if n1[0] == 0:
        raise HorizonError(f"no switchers at horizon {ell}")
    return U[0]


def analytic_ci(panel: Panel, stats=None, target="aggregate", alpha: float = 0.05, *,
                decomposition: InfluenceDecomposition | None = None) -> ConfidenceInterval:
    """Normal confidence interval from the influence-term variance.

    Parameters
    ----------
    target : int or {"aggregate"}
        A horizon ``l`` for ``DID_{+,l}`` or ``"aggregate"`` for ``delta_+``.
    """
    dec = decomposition or influence_decomposition(panel, stats)
    if target == "aggregate":
        est, s2, used = dec.aggregate, dec.sigma2, sum(dec.contributors.values())
    else:
        if target not in dec.sigma2_ell:
            raise HorizonError(f"no estimate at horizon {target}")
        est, s2, used = dec.estimates[target], dec.sigma2_ell[target], dec.contributors[target]
    half = z_quantile(alpha) * np.sqrt(s2 / dec.n_groups)
    return ConfidenceInterval(float(est - half), float(est + half), alpha, "analytic",
                              degenerate=used < 2)


def analytic_ci_batch(Y, N, design, horizons, alpha=0.05):
    """Estimates and analytic half-widths for a batch of outcome draws.

    Used by the Monte Carlo harness, where the design is fixed and only
    outcomes change. Returns a dict with arrays ``did`` and ``half`` of
    shape (..., H) and ``agg``/``agg_half`` of shape (...,).
    """
    Y = np.asarray(Y, dtype=float)
    G = design.n_groups
    U, n1 = influence_arrays(Y, N, design, horizons)
    arr = _engine.event_study_arrays(Y, N, design, horizons, placebos=False)
    fs = np.nan_to_num(arr.first_stage[(0,) * (arr.first_stage.ndim - 1)])
    u_agg = _aggregate_influence(U, n1, fs)
    arm = design.arm
    did = arr.did
    s2 = np.sum(np.where(arm, (U - did[..., None]) ** 2, 0.0), axis=-1) / G
    agg = arr.aggregate()
    s2a = np.sum(np.where(arm, (u_agg - agg[..., None]) ** 2, 0.0), axis=-1) / G
    z = z_quantile(alpha)
    return {"did": did, "half": z * np.sqrt(s2 / G), "agg": agg,
            "agg_half": z * np.sqrt(s2a / G), "first_stage": fs, "mass": n1}


# ---------------------------------------------------------------- bootstrap

@dataclass(frozen=True)
class BootstrapSpec:
    """Cluster bootstrap settings. Groups are the resampling clusters."""

    replications: int = 100
    seed: int = 0
    cluster: str = "group"
    statistic: str = "event_study"
    max_invalid_share: float = 0.5

    def __post_init__(self):
        if self.replications < 2:
            raise ValueError("bootstrap needs at least 2 replications")
        if self.cluster != "group":
            raise ValueError("only group-level clustering is supported")


@dataclass
class BootstrapResult:
    """Replicates of a scalar or vector statistic.

    ``replicates`` has shape (B, K) with NaN where a replicate could not
    compute a component. ``se`` and the intervals use each component's
    valid replicates; ``cov`` uses replicates valid in every component.
    """

    estimate: np.ndarray
    replicates: np.ndarray
    labels: list
    alpha: float = 0.05
    n_invalid: np.ndarray = None

    def __post_init__(self):
        self.estimate = np.atleast_1d(np.asarray(self.estimate, dtype=float))
        self.replicates = np.asarray(self.replicates, dtype=float).reshape(-1, self.estimate.size)
        self.n_invalid = (~np.isfinite(self.replicates)).sum(axis=0)

    @property
    def n_replicates(self):
        return self.replicates.shape[0]

    @property
    def se(self):
        out = np.full(self.estimate.size, np.nan)
        for k in range(self.estimate.size):
            r = self.replicates[:, k]
            r = r[np.isfinite(r)]
            if r.size >= 2:
                out[k] = r.std(ddof=1)
        return out

    @property
    def cov(self):
        ok = np.isfinite(self.replicates).all(axis=1)
        r = self.replicates[ok]
        if r.shape[0] < 2:
            return np.full((self.estimate.size,) * 2, np.nan)
        return np.atleast_2d(np.cov(r, rowvar=False, ddof=1))

    def percentile_ci(self, k=0):
        r = self.replicates[:, k]
        r = r[np.isfinite(r)]
        lo, hi = np.quantile(r, [self.alpha / 2, 1 - self.alpha / 2])
        return ConfidenceInterval(float(lo), float(hi), self.alpha, "bootstrap-percentile")

    def normal_ci(self, k=0):
        half = z_quantile(self.alpha) * self.se[k]
        est = self.estimate[k]
        return ConfidenceInterval(float(est - half), float(est + half), self.alpha,
                                  "bootstrap-normal")

    def component(self, label):
        return self.labels.index(label)


def _check_invalid(invalid, B, share):
    n_bad = int(np.max(invalid)) if np.size(invalid) else 0
    if n_bad > share * B:
        raise SparseBootstrapError(
            f"design too sparse for cluster bootstrap: {n_bad} of {B} replicates invalid")
    if n_bad:
        warnings.warn(f"{n_bad} of {B} bootstrap replicates dropped (statistic undefined)",
                      stacklevel=3)


def cluster_bootstrap(panel: Panel, spec: BootstrapSpec, statistic, *, alpha=0.05,
                      labels=None) -> BootstrapResult:
    """Bootstrap any statistic of a panel by resampling groups.

    ``statistic(panel)`` must return a float or a 1-d array of fixed length.
    Duplicate draws of a group enter the resampled panel as distinct groups.
    A replicate is invalid when the statistic raises a package error or
    returns non-finite values.
    """
    est = np.atleast_1d(np.asarray(statistic(panel), dtype=float))
    B = spec.replications
    reps = np.full((B, est.size), np.nan)
    for b, rows in enumerate(_engine.resample_indices(panel.n_groups, B, spec.seed)):
        try:
            val = np.atleast_1d(np.asarray(statistic(panel.take(rows, relabel=True)), dtype=float))
        except (DIDError, ZeroDivisionError, FloatingPointError):
            continue
        reps[b] = val
    res = BootstrapResult(est, reps, labels or [f"stat{k}" for k in range(est.size)], alpha)
    _check_invalid(res.n_invalid, B, spec.max_invalid_share)
    return res


def _arm_arrays(panel, N, stats_by_arm, arm, horizons, placebos):
    """Event-study arrays for ``arm`` on a batch of cell-size arrays."""
    out = {}
    for name, (pnl, st, sign) in stats_by_arm.items():
        if st is None:
            continue
        design = _engine.ArmDesign.from_stats(pnl, st)
        a = _engine.event_study_arrays(pnl.outcome, N, design, horizons, placebos=placebos)
        if sign < 0:
            a.did = -a.did
            a.placebo = -a.placebo
        out[name] = a
    if arm != "combined":
        return out[arm]
    parts = list(out.values())
    if len(parts) == 1:
        return parts[0]
    p, m = parts

    def mix(x, y, wx, wy):
        tot = wx + wy
        num = np.where(wx > 0, wx * np.nan_to_num(x), 0) + np.where(wy > 0, wy * np.nan_to_num(y), 0)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(tot > 0, num / np.where(tot > 0, tot, 1), np.nan)

    return _engine.EventStudyArrays(
        horizons=p.horizons, did=mix(p.did, m.did, p.mass, m.mass),
        first_stage=mix(p.first_stage, m.first_stage, p.mass, m.mass),
        mass=p.mass + m.mass, n_groups=p.n_groups + m.n_groups,
        placebo=mix(p.placebo, m.placebo, p.placebo_mass, m.placebo_mass),
        placebo_mass=p.placebo_mass + m.placebo_mass,
        placebo_n_groups=p.placebo_n_groups + m.placebo_n_groups)


def _arm_setup(panel, stats, arm):
    setup = {}
    if arm in ("plus", "combined"):
        setup["plus"] = (panel, stats if stats is not None else design_stats(panel), 1.0)
    if arm in ("minus", "combined"):
        try:
            mp = mirror(panel)
            ms = design_stats(mp)
            setup["minus"] = (mp, ms if ms.n1 else None, -1.0)
        except DIDError:
            if arm == "minus":
                raise EstimationError("no initially-treated switchers") from None
    return setup


def _pathological(N, setup):
    """True for replicates where some arm loses all variation in first-switch
    dates among its present groups."""
    bad = np.zeros(N.shape[:-2], dtype=bool)
    for pnl, st, _ in setup.values():
        if st is None:
            continue
        F = np.asarray(st.F)
        arm = np.asarray(st.untreated)
        present = (N[..., :, 0] > 0) & arm
        fmax = np.where(present, F, -1).max(-1)
        fmin = np.where(present, F, np.iinfo(np.int64).max).min(-1)
        bad |= fmax <= fmin
    return bad


def event_study_statistic(panel, N, setup, arm, horizons, pl_horizons, trim=None):
    """Vector ``[DID_l..., aggregate, trimmed?, placebo_l...]`` per cell-size batch."""
    a = _arm_arrays(panel, N, setup, arm, horizons, placebos=bool(len(pl_horizons)))
    cols = [a.did, a.aggregate()[..., None]]
    if trim is not None:
        cols.append(a.aggregate(upto=trim)[..., None])
    if len(pl_horizons):
        idx = [list(horizons).index(h) for h in pl_horizons]
        cols.append(a.placebo[..., idx])
    return np.concatenate([np.broadcast_to(c, N.shape[:-2] + c.shape[-1:]) for c in cols], axis=-1)


def statistic_labels(horizons, pl_horizons, trim=None):
    labels = [f"did[{h}]" for h in horizons] + ["aggregate"]
    if trim is not None:
        labels.append(f"trimmed[{trim}]")
    return labels + [f"placebo[{h}]" for h in pl_horizons]


def bootstrap_event_study(panel: Panel, spec: BootstrapSpec, *, stats=None, arm="plus",
                          horizons=None, pl_horizons=(), trim=None, alpha=0.05,
                          chunk: int = 256) -> BootstrapResult:
    """Cluster bootstrap of an event study, vectorised over replicates.

    A resample is evaluated as the original panel with cell sizes scaled by
    the number of times each group was drawn, which yields the same numbers
    as building the resampled panel explicitly.
    """
    setup = _arm_setup(panel, stats, arm)
    if horizons is None:
        l_max = max(st.l_u for _, st, _ in setup.values() if st is not None)
        horizons = list(range(l_max + 1))
    horizons = list(horizons)
    N = panel.cell_size
    est = event_study_statistic(panel, N, setup, arm, horizons, pl_horizons, trim)
    M = _engine.resample_multiplicities(panel.n_groups, spec.replications, spec.seed)
    reps = np.empty((spec.replications, est.size))
    for s in range(0, spec.replications, chunk):
        Nb = N[None] * M[s:s + chunk, :, None]
        r = event_study_statistic(panel, Nb, setup, arm, horizons, pl_horizons, trim)
        r[_pathological(Nb, setup)] = np.nan
        reps[s:s + chunk] = r
    labels = statistic_labels(horizons, pl_horizons, trim)
    res = BootstrapResult(est, reps, labels, alpha)
    _check_invalid(res.n_invalid[np.isfinite(est)], spec.replications, spec.max_invalid_share)
    return res


__all__ = [
    "BootstrapResult", "BootstrapSpec", "ConfidenceInterval", "InfluenceDecomposition",
    "analytic_ci", "analytic_ci_batch", "bootstrap_event_study", "cluster_bootstrap",
    "influence_arrays", "influence_decomposition", "influence_terms", "z_quantile",
]
