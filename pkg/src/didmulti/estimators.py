"""Event-study DID estimators for groups whose treatment changes.

The per-group and per-horizon functions (:func:`did_g_ell`,
:func:`did_plus_ell`, :func:`delta_plus_hat`) follow the defining sums term
by term. :func:`event_study` computes the same quantities for every horizon
at once through the vectorised engine and is what the CLI and the
estimator classes use.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _engine
from .exceptions import (
    DesignMismatchError,
    EstimationError,
    HorizonError,
    NoControlsError,
    ZeroExposureError,
)
from .panel import Panel, design_stats, first_switch, is_binary_treatment

ARMS = ("plus", "minus", "combined")


@dataclass(frozen=True)
class HorizonEffect:
    estimate: float
    mass: float
    n_groups: int
    first_stage: float


@dataclass
class EventStudyResult:
    """Point estimates of one arm.

    ``horizon_effects`` maps an event-time horizon to its reduced-form
    estimate; horizons without switchers are absent rather than zero.
    ``trimmed[k]`` aggregates horizons ``0..k``; the entry for the largest
    horizon equals ``aggregate``.
    """

    arm: str
    horizon_effects: dict
    first_stage: dict
    aggregate: float
    trimmed: dict
    n_excluded: int = 0
    components: dict = field(default_factory=dict)

    @property
    def horizons(self):
        return sorted(self.horizon_effects)

    def weights(self):
        total = sum(h.mass for h in self.horizon_effects.values())
        return {ell: h.mass / total for ell, h in sorted(self.horizon_effects.items())}

    def as_records(self):
        return [
            {"arm": self.arm, "horizon": ell, "estimate": h.estimate,
             "first_stage": h.first_stage, "mass": h.mass, "n_groups": h.n_groups}
            for ell, h in sorted(self.horizon_effects.items())
        ]


class _Row(int):
    """Row position, as opposed to a group label that looks like an int."""


def _group_index(panel: Panel, g) -> int:
    if isinstance(g, _Row):
        return int(g)
    try:
        return panel.groups.index(str(g))
    except ValueError:
        raise KeyError(f"unknown group {g!r}") from None


def _same_baseline(panel, stats, gi, tol=0.0):
    base = panel.treatment[:, 0]
    return np.abs(base - base[gi]) <= tol


def did_g_ell(panel: Panel, stats, g, ell: int, *, tol: float = 0.0) -> float:
    """DID of group ``g`` between ``F_g - 1`` and ``F_g + ell``.

    Controls are the groups with the same period-one treatment as ``g`` whose
    treatment has not changed by ``F_g + ell``, weighted by their cell sizes
    at ``F_g + ell``.
    """
    gi = _group_index(panel, g)
    F = np.asarray(stats.F)
    Y, N = panel.outcome, panel.cell_size
    same = _same_baseline(panel, stats, gi, tol)
    t_u = int(F[same].max() - 1)
    Fg = int(F[gi])
    if Fg > t_u or not 0 <= ell <= t_u - Fg:
        raise HorizonError(
            f"horizon {ell} not admissible for group {panel.groups[gi]} "
            f"(F_g={Fg}, T_u={t_u})")
    t, b = Fg + ell - 1, Fg - 2
    controls = np.flatnonzero(same & (F > Fg + ell))
    if controls.size == 0:
        raise NoControlsError(
            f"no never-switched controls at horizon {ell} for group {panel.groups[gi]}")
    n_u = N[controls, t].sum()
    ctrl = sum(N[c, t] / n_u * (Y[c, t] - Y[c, b]) for c in controls)
    return float(Y[gi, t] - Y[gi, b] - ctrl)


def _switchers(stats, ell):
    F = np.asarray(stats.F)
    keep = np.asarray(stats.untreated) & (F <= stats.t_u - ell)
    return np.flatnonzero(keep & np.asarray(stats.eligible)[:, ell])


def did_plus_ell(panel: Panel, stats, ell: int):
    """Reduced-form ``DID_{+,l}`` and first-stage ``delta^D_{+,l}``."""
    if not 0 <= ell <= stats.l_u:
        raise HorizonError(f"horizon {ell} outside 0..{stats.l_u}")
    if ell not in stats.n1:
        raise HorizonError(f"no switchers at horizon {ell}")
    F = np.asarray(stats.F)
    beta = panel.discount
    num = fs = mass = 0.0
    for g in _switchers(stats, ell):
        w = beta ** (F[g] + ell) * panel.cell_size[g, F[g] + ell - 1]
        mass += w
        num += w * did_g_ell(panel, stats, _Row(g), ell)
        fs += w * panel.treatment[g, F[g] + ell - 1]
    return num / mass, fs / mass


def _ratio(num, den):
    if den == 0:
        raise ZeroExposureError("no treatment exposure mass: weighted first stage is zero")
    return num / den


def delta_plus_hat(panel: Panel, stats) -> float:
    """Weighted reduced-form effects over weighted first-stage effects."""
    num = den = 0.0
    for ell, w in stats.weights_w.items():
        did, fs = did_plus_ell(panel, stats, ell)
        num += w * did
        den += w * fs
    return _ratio(num, den)


def delta_plus_trimmed(panel: Panel, stats, k: int) -> float:
    """Same ratio restricted to horizons ``0..k``."""
    if not 0 <= k <= stats.l_u:
        raise HorizonError(f"trimming horizon {k} outside 0..{stats.l_u}")
    kept = {ell: m for ell, m in stats.n1.items() if ell <= k}
    total = sum(kept.values())
    num = den = 0.0
    for ell, m in kept.items():
        did, fs = did_plus_ell(panel, stats, ell)
        num += m / total * did
        den += m / total * fs
    return _ratio(num, den)


def delta_plus_double_sum(panel: Panel, stats) -> float:
    """``delta_+`` as one sum over switchers and their post-switch periods."""
    F = np.asarray(stats.F)
    beta = panel.discount
    num = den = 0.0
    for g in np.flatnonzero(stats.untreated & (F <= stats.t_u)):
        for ell in range(stats.t_u - F[g] + 1):
            if not stats.eligible[g, ell]:
                continue
            w = beta ** (F[g] + ell) * panel.cell_size[g, F[g] + ell - 1]
            num += w * did_g_ell(panel, stats, _Row(g), ell)
            den += w * panel.treatment[g, F[g] + ell - 1]
    return _ratio(num, den)


def _plus_result(panel, stats, arm="plus", sign=1.0):
    design = _engine.ArmDesign.from_stats(panel, stats)
    arr = _engine.event_study_arrays(panel.outcome, panel.cell_size, design,
                                     np.arange(stats.l_u + 1), placebos=False)
    effects, fstage = {}, {}
    for j, ell in enumerate(arr.horizons):
        if arr.mass[j] > 0:
            effects[int(ell)] = HorizonEffect(sign * float(arr.did[j]), float(arr.mass[j]),
                                              int(arr.n_groups[j]), float(arr.first_stage[j]))
            fstage[int(ell)] = float(arr.first_stage[j])
    agg = float(arr.aggregate())
    if not np.isfinite(agg):
        raise ZeroExposureError("no treatment exposure mass: weighted first stage is zero")
    trimmed = {}
    for k in effects:
        val = float(arr.aggregate(upto=k))
        if np.isfinite(val):
            trimmed[k] = sign * val
    return EventStudyResult(arm, effects, fstage, sign * agg, trimmed, stats.n_excluded)


def mirror(panel: Panel) -> Panel:
    """Binary panel with treatment relabelled ``D -> 1 - D``."""
    return panel.replace(treatment=1.0 - panel.treatment)


def _combine(plus, minus):
    effects, fstage = {}, {}
    for ell in sorted(set(plus.horizon_effects) | set(minus.horizon_effects)):
        parts = [r.horizon_effects[ell] for r in (plus, minus) if ell in r.horizon_effects]
        m = sum(p.mass for p in parts)
        est = sum(p.mass * p.estimate for p in parts) / m
        fs = sum(p.mass * p.first_stage for p in parts) / m
        effects[ell] = HorizonEffect(est, m, sum(p.n_groups for p in parts), fs)
        fstage[ell] = fs

    def agg(upto):
        num = sum(h.mass * h.estimate for ell, h in effects.items() if ell <= upto)
        den = sum(h.mass * h.first_stage for ell, h in effects.items() if ell <= upto)
        return num / den if den != 0 else np.nan

    top = max(effects)
    aggregate = agg(top)
    if not np.isfinite(aggregate):
        raise ZeroExposureError("no treatment exposure mass in either arm")
    trimmed = {k: agg(k) for k in effects if np.isfinite(agg(k))}
    return EventStudyResult("combined", effects, fstage, aggregate, trimmed,
                            plus.n_excluded + minus.n_excluded,
                            components={"plus": plus, "minus": minus})


def did_minus_and_combined(panel: Panel, stats=None):
    """Initially-treated arm and the mass-weighted combination of both arms.

    The initially-treated arm is the initially-untreated machinery applied to
    the mirrored panel, with the reduced-form sign flipped so that it measures
    status-quo minus actual outcomes. Returns ``(minus, combined)``; ``minus``
    is ``None`` when no initially-treated group ever switches.
    """
    if not is_binary_treatment(panel.treatment):
        raise DesignMismatchError("the initially-treated arm requires a binary treatment")
    stats = stats if stats is not None else design_stats(panel)
    plus = _plus_result(panel, stats)
    try:
        mstats = design_stats(mirror(panel))
    except EstimationError:
        mstats = None
    except ValueError:
        mstats = None
    if mstats is None or not mstats.n1:
        warnings.warn("no initially-treated switchers: combined estimates equal "
                      "the initially-untreated arm", stacklevel=2)
        combined = EventStudyResult("combined", dict(plus.horizon_effects),
                                    dict(plus.first_stage), plus.aggregate,
                                    dict(plus.trimmed), plus.n_excluded,
                                    components={"plus": plus})
        return None, combined
    minus = _plus_result(mirror(panel), mstats, arm="minus", sign=-1.0)
    return minus, _combine(plus, minus)


def event_study(panel: Panel, stats=None, arm: str = "plus", *,
                treat_tol: float = 0.0) -> EventStudyResult:
    """Event-study estimates for ``arm`` in ``{"plus", "minus", "combined"}``."""
    if arm not in ARMS:
        raise ValueError(f"arm must be one of {ARMS}, got {arm!r}")
    if arm == "plus":
        stats = stats if stats is not None else design_stats(panel, treat_tol=treat_tol)
        return _plus_result(panel, stats)
    minus, combined = did_minus_and_combined(panel, stats)
    if arm == "combined":
        return combined
    if minus is None:
        raise EstimationError("no initially-treated switchers")
    return minus


def excluded_cells(panel: Panel, stats):
    """(group, horizon) pairs dropped because the treatment path crosses
    below its period-one value before ``F_g + l``."""
    F = np.asarray(stats.F)
    out = []
    for ell in range(stats.l_u + 1):
        for g in np.flatnonzero(stats.untreated & (F <= stats.t_u - ell)):
            if not stats.eligible[g, ell]:
                out.append((panel.groups[g], ell))
    return out


__all__ = [
    "EventStudyResult", "HorizonEffect", "did_g_ell", "did_plus_ell",
    "delta_plus_hat", "delta_plus_trimmed", "delta_plus_double_sum",
    "did_minus_and_combined", "event_study", "mirror", "excluded_cells",
    "first_switch",
]
