"""Two-way fixed-effects regressions and their weight decompositions.

Three common specifications are covered:

* intensity x period: outcome on group and period effects and
  ``I_g * 1{t = l}`` for every period but the one before the common switch;
* distributed lag: outcome on group and period effects and the current and
  ``K`` lagged treatments, on periods ``t >= K + 1``;
* local projection: ``Y_{g,t+l}`` on group and period effects and
  ``D_{g,t}``, on periods ``t <= T - l``.

For each, the coefficient is a weighted sum of cell-level treatment effects.
The ``*_weights`` functions return those weights so one can see how many are
negative and how much mass they carry.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import linalg

from . import _engine
from .exceptions import DesignMismatchError, EstimationError, RankDeficientError
from .panel import Panel, design_stats


# ------------------------------------------------------------------ solver

def demean_two_way(x, weights, *, tol=1e-13, max_iter=10_000):
    """Weighted within transformation for group and period effects.

    Parameters
    ----------
    x : ndarray of shape (..., G, T)
    weights : ndarray of shape (G, T)
        Zero outside the estimation sample.

    Alternates group and period demeaning until the group means vanish.
    Balanced panels whose weights factor as ``a_g * b_t`` converge after one
    pass.
    """
    w = np.asarray(weights, dtype=float)
    x = np.where(w > 0, np.asarray(x, dtype=float), 0.0)
    wg = w.sum(axis=-1)
    wt = w.sum(axis=-2)
    wg_s, wt_s = np.where(wg > 0, wg, 1.0), np.where(wt > 0, wt, 1.0)
    scale = max(1.0, float(np.abs(x).max(initial=0.0)))
    for _ in range(max_iter):
        x = x - ((w * x).sum(-1) / wg_s)[..., :, None] * (w > 0)
        x = x - ((w * x).sum(-2) / wt_s)[..., None, :] * (w > 0)
        if np.abs((w * x).sum(-1) / wg_s).max(initial=0.0) <= tol * scale:
            return x
    raise EstimationError("within transformation did not converge")


@dataclass
class FEFit:
    coef: np.ndarray
    names: list
    residuals: np.ndarray  # (G, T), zero outside the sample

    def __getitem__(self, name):
        return self.coef[self.names.index(name)]

    def as_dict(self):
        return dict(zip(self.names, map(float, self.coef)))


def fe_regress(y, regressors, weights, sample=None, *, rank_tol=1e-9) -> FEFit:
    """Weighted least squares with group and period fixed effects.

    Parameters
    ----------
    y : ndarray of shape (G, T)
    regressors : mapping name -> ndarray of shape (G, T)
    weights : ndarray of shape (G, T)
        Cell weights, usually the cell sizes.
    sample : bool ndarray of shape (G, T), optional
        Cells used in the regression.

    Raises
    ------
    RankDeficientError
        If a regressor is collinear with the fixed effects or with other
        regressors.
    """
    names = list(regressors)
    if not names:
        raise ValueError("at least one regressor is required")
    w = np.asarray(weights, dtype=float)
    if sample is not None:
        w = np.where(sample, w, 0.0)
    X = np.stack([np.asarray(regressors[k], dtype=float) for k in names])
    Xd = demean_two_way(X, w)
    yd = demean_two_way(y, w)
    rows = w > 0
    sw = np.sqrt(w[rows])
    A = (Xd[:, rows] * sw).T
    b = yd[rows] * sw
    raw = np.linalg.norm((np.where(rows, X, 0.0)[:, rows] * sw), axis=1)
    absorbed = np.linalg.norm(A, axis=0) <= rank_tol * np.maximum(raw, 1.0)
    if absorbed.any():
        raise RankDeficientError([n for n, a in zip(names, absorbed) if a])
    Q, R, piv = linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rank_tol * diag[0]))
    if rank < len(names):
        # express each dropped column through the kept ones to name the whole set
        x = linalg.solve_triangular(R[:rank, :rank], R[:rank, rank:])
        involved = set(piv[rank:])
        involved.update(piv[:rank][np.any(np.abs(x) > rank_tol, axis=1)])
        raise RankDeficientError([names[i] for i in sorted(involved)])
    coef = np.empty(len(names))
    coef[piv] = linalg.solve_triangular(R, Q.T @ b)
    resid = np.where(rows, yd - np.einsum("k,kgt->gt", coef, Xd), 0.0)
    return FEFit(coef, names, resid)


def fe_residualize(target, others, weights, sample=None):
    """Residual of ``target`` on ``others`` plus group and period effects."""
    if not others:
        w = np.where(sample, weights, 0.0) if sample is not None else weights
        return demean_two_way(target, w)
    fit = fe_regress(target, others, weights, sample)
    return fit.residuals


# ------------------------------------------------------------ weight report

@dataclass
class WeightReport:
    """Decomposition weights of one TWFE coefficient (or family of them).

    ``weights`` is a frame with one row per weighted cell. Columns:
    ``group``, ``period``, ``weight`` and, for the distributed-lag
    specification, ``target_lag`` and ``lag``.
    """

    spec: str
    weights: pd.DataFrame
    coefficient: dict
    summaries: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def summary_text(self):
        lines = [f"specification: {self.spec}"]
        for key, s in self.summaries.items():
            lines.append(
                f"{key}: {s['n_positive']} effects positive weight (sum {s['sum_positive']:.4f}), "
                f"{s['n_negative']} negative (sum {s['sum_negative']:.4f}); "
                f"total {s['total']:.4f}, min {s['min']:.4f}")
        for name, val in self.coefficient.items():
            lines.append(f"coefficient {name}: {val:.6g}")
        lines.extend(self.notes)
        return "\n".join(lines) + "\n"


def _summary(w):
    w = np.asarray(w, dtype=float)
    pos, neg = w[w > 0], w[w < 0]
    return {"n_positive": int(pos.size), "sum_positive": float(pos.sum()),
            "n_negative": int(neg.size), "sum_negative": float(neg.sum()),
            "total": float(w.sum()), "min": float(w.min()) if w.size else np.nan,
            "n_cells": int(w.size)}


def _constant_sizes(panel):
    N = panel.cell_size
    if not np.all(N == N[:, :1]):
        raise DesignMismatchError("cell sizes must be constant over time for this decomposition")
    return N[:, 0]


def intensity_design(panel: Panel):
    """Split ``D_{g,t} = I_g * 1{t >= F_g}`` into intensities and switch dates.

    Returns ``(I, F)`` with ``F = T + 1`` for groups with ``I = 0``.
    """
    D = panel.treatment
    T = panel.n_periods
    nz = D != 0
    F = np.where(nz.any(axis=1), nz.argmax(axis=1) + 1, T + 1)
    I = D[:, -1].copy()
    expected = I[:, None] * (np.arange(1, T + 1)[None, :] >= F[:, None])
    if not np.array_equal(D, expected):
        raise DesignMismatchError(
            "treatment is not of the form I_g * 1{t >= F_g}")
    return I, F


# ------------------------------------------------------ intensity x period

def _intensity_regressors(panel, I, F):
    T = panel.n_periods
    regs = {}
    for ell in range(1, T + 1):
        if ell == F - 1:
            continue
        col = np.zeros(panel.shape)
        col[:, ell - 1] = I
        regs[ell] = col
    return regs


def prop1_weights(panel: Panel) -> WeightReport:
    """Weights of the intensity x period regression coefficients.

    The treatment must switch on at one common date ``F``:
    ``D_{g,t} = I_g * 1{t >= F}``. Every post-switch coefficient weights
    group effects by ``N_g I_g (I_g - Ibar)``, normalised to sum to one over
    groups with ``I_g != 0``. Groups whose intensity lies strictly between
    zero and ``Ibar`` get negative weight.
    """
    I, Fg = intensity_design(panel)
    switching = Fg[I != 0]
    if switching.size == 0 or np.unique(switching).size != 1:
        raise DesignMismatchError(
            "not an intensity x period design: needs one common switch date")
    F = int(switching[0])
    if F < 2:
        raise DesignMismatchError("not an intensity x period design: switch at period 1")
    Ng = _constant_sizes(panel)
    ibar = float(np.sum(Ng * I) / Ng.sum())
    raw = Ng * I * (I - ibar)
    den = raw[I != 0].sum()
    if np.isclose(den, 0.0, atol=1e-14 * max(1.0, np.abs(raw).max())):
        raise EstimationError("no intensity variation: all groups share one intensity")
    w = raw / den
    nz = I != 0
    flagged = (I != 0) & (np.minimum(0, ibar) < I) & (I < np.maximum(0, ibar))
    frame = pd.DataFrame({"group": np.array(panel.groups)[nz], "intensity": I[nz],
                          "weight": w[nz], "negative_condition": flagged[nz]})
    fit = fe_regress(panel.outcome, _intensity_regressors(panel, I, F), panel.cell_size)
    coef = {f"period[{panel.periods[k - 1]}]": float(fit[k]) for k in fit.names}
    notes = [f"common switch period index F={F}, mean intensity {ibar:.6g}"]
    if flagged.any():
        notes.append("groups with intensity strictly between 0 and the mean (negative weights): "
                     + ", ".join(np.array(panel.groups)[flagged]))
    report = WeightReport("intensity_x_period", frame, coef, {"all": _summary(w[nz])}, notes)
    report.switch = F
    report.mean_intensity = ibar
    report.flagged = [panel.groups[g] for g in np.flatnonzero(flagged)]
    return report


# --------------------------------------------------------- distributed lag

def _lag(D, k):
    out = np.zeros_like(D)
    out[:, k:] = D[:, :D.shape[1] - k] if k else D
    return out


def distributed_lag_regressors(panel, K):
    T = panel.n_periods
    if not 0 <= K <= T - 2:
        raise EstimationError(f"{K} lags leave no usable periods (T={T})")
    regs = {f"lag[{k}]": _lag(panel.treatment, k) for k in range(K + 1)}
    sample = np.zeros(panel.shape, dtype=bool)
    sample[:, K:] = True
    return regs, sample


def prop3_weights(panel: Panel, K: int) -> WeightReport:
    """Weights of the distributed-lag regression coefficients.

    For target lag ``l`` the weight of cell ``(g,t)`` is proportional to
    ``N_{g,t}`` times the residual of ``D_{g,t-l}`` on the other lags and
    group and period effects. Own-lag weights sum to one over cells with
    ``D_{g,t-l} != 0``; the weights attached to any other lag sum to zero.
    """
    if not np.isin(panel.treatment, (0.0, 1.0)).all():
        raise DesignMismatchError("distributed-lag decomposition requires a binary treatment")
    regs, sample = distributed_lag_regressors(panel, K)
    N = panel.cell_size
    fit = fe_regress(panel.outcome, regs, N, sample)
    names = list(regs)
    rows, summaries = [], {}
    groups = np.array(panel.groups)
    periods = np.array(panel.periods)
    for l, name in enumerate(names):
        others = {k: v for k, v in regs.items() if k != name}
        eps = fe_residualize(regs[name], others, N, sample)
        den = float(np.sum(np.where(sample, N * eps * regs[name], 0.0)))
        if den == 0:
            raise RankDeficientError([name])
        w = np.where(sample, N * eps / den, 0.0)
        for lp, other in enumerate(names):
            cells = sample & (regs[other] != 0)
            g_idx, t_idx = np.nonzero(cells)
            summaries[f"target {l} / lag {lp}"] = _summary(w[cells])
            rows.append(pd.DataFrame({"target_lag": l, "lag": lp, "group": groups[g_idx],
                                      "period": periods[t_idx], "weight": w[cells]}))
    frame = pd.concat(rows, ignore_index=True)
    coef = {n: float(fit[n]) for n in names}
    return WeightReport("distributed_lag", frame, coef, summaries, [f"K={K} lags"])


def weight_sums(report: WeightReport):
    """Per (target lag, lag) weight sums of a distributed-lag report."""
    return report.weights.groupby(["target_lag", "lag"])["weight"].sum()


# -------------------------------------------------------- local projection

def local_projection_coefficient(panel: Panel, ell: int) -> float:
    T = panel.n_periods
    if not 0 <= ell <= T - 2:
        raise EstimationError(f"horizon {ell} leaves fewer than two periods")
    y = np.zeros(panel.shape)
    y[:, :T - ell] = panel.outcome[:, ell:]
    sample = np.zeros(panel.shape, dtype=bool)
    sample[:, :T - ell] = True
    fit = fe_regress(y, {"D": panel.treatment}, panel.cell_size, sample)
    return float(fit["D"])


def prop4_weights(panel: Panel, ell: int) -> WeightReport:
    """Closed-form weights of the local-projection coefficient at horizon ``l``.

    Requires ``D_{g,t} = I_g * 1{t >= F_g}`` and cell sizes constant over
    time. Weighted cells are ``(g, t)`` with ``I_g != 0``, ``t <= T - l`` and
    ``t + l >= F_g``. The weights sum to one at ``l = 0`` but generally not
    at ``l >= 1``.
    """
    I, F = intensity_design(panel)
    Ng = _constant_sizes(panel)
    G, T = panel.shape
    if not 0 <= ell <= T - 2:
        raise EstimationError(f"horizon {ell} leaves fewer than two periods")
    D = panel.treatment
    Ts = T - ell
    Dsub = D[:, :Ts]
    if not np.any(Dsub != 0):
        raise EstimationError(
            f"local projection at horizon {ell} undefined: no treated cells in t <= {Ts}")
    Nsub = np.broadcast_to(Ng[:, None], (G, Ts))
    d_g = (Nsub * Dsub).sum(1) / Nsub.sum(1)
    d_t = (Nsub * Dsub).sum(0) / Nsub.sum(0)
    d_all = (Nsub * Dsub).sum() / Nsub.sum()
    t = np.arange(1, Ts + 1)[None, :]
    on = t >= F[:, None]
    core = I[:, None] * on - d_g[:, None] - d_t[None, :] + d_all
    num = Ng[:, None] * I[:, None] * core
    nzI = (I != 0)[:, None]
    den = float(np.sum(np.where(nzI & on, num, 0.0)))
    if den == 0:
        raise EstimationError(f"local projection at horizon {ell}: zero denominator")
    cells = nzI & (t + ell >= F[:, None])
    g_idx, t_idx = np.nonzero(cells)
    w = num[cells] / den
    frame = pd.DataFrame({"group": np.array(panel.groups)[g_idx],
                          "period": np.array(panel.periods)[t_idx], "weight": w})
    notes = []
    total = float(w.sum())
    if ell >= 1 and not np.isclose(total, 1.0, atol=1e-10):
        notes.append(f"weights sum to {total:.6g}, not 1: biased even under "
                     "homogeneous effects")
    switch = F[I != 0]
    if np.unique(switch).size <= 1:
        notes.append("switch dates do not vary: the negative-minimum guarantee does not apply")
    try:
        coef = {f"horizon[{ell}]": local_projection_coefficient(panel, ell)}
    except RankDeficientError as err:
        coef = {}
        notes.append(str(err))
    return WeightReport("local_projection", frame, coef, {f"horizon {ell}": _summary(w)}, notes)


# ----------------------------------------------- implied event study

def twfe_implied_event_study(panel: Panel, K: int, stats=None, gamma=None) -> dict:
    """Event-study effects implied by distributed-lag coefficients.

    Under ``Y(D) = Y(0) + sum_k gamma_k D_{t-k}``, the effect of a switcher
    ``l`` periods after its first switch is
    ``sum_k gamma_k (D_{g,F_g+l-k} - D_{g,1})`` (lags before period one count
    as the period-one treatment). These are averaged with the same weights as
    the DID estimator, giving a like-for-like comparison.
    """
    T = panel.n_periods
    if K > T - 2:
        raise EstimationError(f"K={K} exceeds the available pre-sample (T={T})")
    stats = stats if stats is not None else design_stats(panel)
    if gamma is None:
        regs, sample = distributed_lag_regressors(panel, K)
        fit = fe_regress(panel.outcome, regs, panel.cell_size, sample)
        gamma = fit.coef
    gamma = np.asarray(gamma, dtype=float)
    D = panel.treatment
    base = D[:, :1]
    Dpad = np.concatenate([np.repeat(base, K, axis=1), D], axis=1) - base
    # Dpad[:, K + s] = D_{g, s+1} - D_{g,1}; cumulative lag effect per cell
    effect = sum(gamma[k] * Dpad[:, K - k:K - k + T] for k in range(len(gamma)))
    design = _engine.ArmDesign.from_stats(panel, stats)
    arr = _engine.event_study_arrays(effect, panel.cell_size, design,
                                     np.arange(stats.l_u + 1), placebos=False,
                                     keep_group_dids=False)
    # the DID of a pure effect surface against untreated controls is the
    # switcher's own effect, since controls have zero effect
    return {int(h): float(v) for h, v, m in zip(arr.horizons, arr.did, arr.mass) if m > 0}


def twfe_contrast_bootstrap(panel: Panel, K: int, spec, *, alpha=0.05):
    """Bootstrap of ``DID_{+,l}`` minus the TWFE-implied effect, per horizon."""
    from .estimators import event_study
    from .inference import cluster_bootstrap

    stats = design_stats(panel)
    horizons = list(range(stats.l_u + 1))

    def contrast(p):
        st = design_stats(p)
        es = event_study(p, st)
        imp = twfe_implied_event_study(p, K, st)
        return [es.horizon_effects[h].estimate - imp[h]
                if h in es.horizon_effects and h in imp else np.nan for h in horizons]

    return cluster_bootstrap(panel, spec, contrast, alpha=alpha,
                             labels=[f"contrast[{h}]" for h in horizons])


__all__ = [
    "FEFit", "WeightReport", "demean_two_way", "fe_regress", "fe_residualize",
    "intensity_design", "local_projection_coefficient", "prop1_weights",
    "prop3_weights", "prop4_weights", "twfe_contrast_bootstrap",
    "twfe_implied_event_study", "weight_sums", "distributed_lag_regressors",
]
