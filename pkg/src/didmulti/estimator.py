"""Scikit-learn style front ends.

:class:`DIDEventStudy` bundles point estimates, placebos and inference
behind ``fit``; :class:`TWFEDiagnostics` does the same for the TWFE weight
decompositions. Both take a long data frame (one row per group-period or
per micro observation) or a :class:`~didmulti.panel.Panel`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator

from .estimators import EventStudyResult, event_study
from .exceptions import EstimationError, HorizonError
from .inference import (
    BootstrapSpec,
    ConfidenceInterval,
    analytic_ci,
    bootstrap_event_study,
    influence_decomposition,
    z_quantile,
)
from .output import event_study_table
from .panel import design_stats
from .placebos import placebo_study
from .twfe import prop1_weights, prop3_weights, prop4_weights
from .validation import check_alpha, check_panel_frame


@dataclass
class EventStudyAnalysis:
    """Everything one estimation run produces."""

    result: EventStudyResult
    stats: object
    placebos: object = None
    cis: dict = field(default_factory=dict)
    ses: dict = field(default_factory=dict)
    placebo_ses: dict = field(default_factory=dict)
    placebo_cis: dict = field(default_factory=dict)
    bootstrap: object = None
    inference: str = "analytic"
    trim_k: int | None = None

    def table(self):
        return event_study_table(self.result, cis=self.cis, ses=self.ses,
                                 placebos=self.placebos, placebo_ses=self.placebo_ses,
                                 placebo_cis=self.placebo_cis, trim_k=self.trim_k)

    def to_dict(self):
        r = self.result
        out = {
            "arm": r.arm,
            "horizons": {str(ell): {"estimate": h.estimate, "first_stage": h.first_stage,
                                    "mass": h.mass, "n_groups": h.n_groups,
                                    "se": self.ses.get(ell, math.nan),
                                    "ci": _ci_dict(self.cis.get(ell))}
                         for ell, h in sorted(r.horizon_effects.items())},
            "weights": {str(k): v for k, v in r.weights().items()},
            "aggregate": {"estimate": r.aggregate, "se": self.ses.get("aggregate", math.nan),
                          "ci": _ci_dict(self.cis.get("aggregate"))},
            "trimmed": {str(k): {"estimate": v, "se": self.ses.get(f"trimmed[{k}]", math.nan),
                                 "ci": _ci_dict(self.cis.get(f"trimmed[{k}]"))}
                        for k, v in sorted(r.trimmed.items())},
            "n_excluded_cells": r.n_excluded,
            "inference": self.inference,
            "design": {"t_u": self.stats.t_u, "l_u": self.stats.l_u,
                       "l_pl_u": self.stats.l_pl_u, "first_switch": self.stats.first_switch,
                       "is_binary": self.stats.is_binary,
                       "is_staggered": self.stats.is_staggered},
        }
        if self.placebos is not None:
            jt = self.placebos.joint_test
            out["placebos"] = {
                "l_pl_u": self.placebos.l_pl_u,
                "horizons": {str(ell): {"estimate": p.estimate, "mass": p.mass,
                                        "n_groups": p.n_groups, "x": -2 - ell,
                                        "se": self.placebo_ses.get(ell, math.nan),
                                        "ci": _ci_dict(self.placebo_cis.get(ell))}
                             for ell, p in sorted(self.placebos.horizon_placebos.items())},
                "joint_test": None if jt is None else {
                    "statistic": jt.statistic, "p_value": jt.p_value, "df": jt.df,
                    "n_replicates": jt.n_replicates, "reference": jt.reference},
            }
        if self.bootstrap is not None:
            out["bootstrap"] = {"replications": int(self.bootstrap.n_replicates),
                                "invalid": dict(zip(self.bootstrap.labels,
                                                    map(int, self.bootstrap.n_invalid)))}
        return out


def _ci_dict(ci):
    if ci is None:
        return None
    return {"lower": ci.lower, "upper": ci.upper, "alpha": ci.alpha, "method": ci.method,
            "degenerate": ci.degenerate}


def analyze(panel, *, arm="plus", trim_k=None, alpha=0.05, bootstrap: BootstrapSpec | None = None,
            ci_method=None, placebos=True, treat_tol=0.0) -> EventStudyAnalysis:
    """Point estimates, placebos and confidence intervals for one arm.

    Parameters
    ----------
    bootstrap : BootstrapSpec or None
        Cluster bootstrap settings. Placebo standard errors and the joint
        placebo test are only produced when this is given.
    ci_method : {"analytic", "bootstrap"} or None
        Intervals for the effects. The default is analytic for the
        initially-untreated arm and bootstrap otherwise; the analytic
        intervals exist only for that arm.
    """
    alpha = check_alpha(alpha)
    if ci_method is None:
        ci_method = "analytic" if arm == "plus" else "bootstrap"
    if ci_method not in ("analytic", "bootstrap"):
        raise ValueError(f"ci_method must be analytic or bootstrap, got {ci_method!r}")
    if ci_method == "analytic" and arm != "plus":
        raise ValueError("analytic intervals are only available for the plus arm")
    if ci_method == "bootstrap" and bootstrap is None:
        bootstrap = BootstrapSpec()
    stats = design_stats(panel, treat_tol=treat_tol)
    result = event_study(panel, stats, arm=arm, treat_tol=treat_tol)
    if trim_k is not None and trim_k not in result.trimmed:
        raise HorizonError(f"trimming horizon {trim_k} has no switchers "
                           f"(available: {sorted(result.trimmed)})")
    an = EventStudyAnalysis(result, stats, trim_k=trim_k, inference=ci_method)
    if ci_method == "analytic":
        dec = influence_decomposition(panel, stats)
        for ell in dec.horizons:
            an.cis[ell] = analytic_ci(panel, stats, ell, alpha, decomposition=dec)
            an.ses[ell] = math.sqrt(dec.sigma2_ell[ell] / dec.n_groups)
        an.cis["aggregate"] = analytic_ci(panel, stats, "aggregate", alpha, decomposition=dec)
        an.ses["aggregate"] = math.sqrt(dec.sigma2 / dec.n_groups)
        if trim_k is not None:
            dk = influence_decomposition(panel, stats, upto=trim_k)
            an.cis[f"trimmed[{trim_k}]"] = analytic_ci(panel, stats, "aggregate", alpha,
                                                       decomposition=dk)
            an.ses[f"trimmed[{trim_k}]"] = math.sqrt(dk.sigma2 / dk.n_groups)
    else:
        horizons = list(range(max(result.horizon_effects) + 1))
        bt = bootstrap_event_study(panel, bootstrap, stats=stats, arm=arm, horizons=horizons,
                                   pl_horizons=[], trim=trim_k, alpha=alpha)
        an.bootstrap = bt
        keys = [(ell, f"did[{ell}]") for ell in result.horizon_effects]
        keys.append(("aggregate", "aggregate"))
        if trim_k is not None:
            keys.append((f"trimmed[{trim_k}]", f"trimmed[{trim_k}]"))
        for key, label in keys:
            k = bt.component(label)
            an.ses[key], an.cis[key] = float(bt.se[k]), bt.percentile_ci(k)
    if placebos and stats.l_pl_u >= 0:
        try:
            an.placebos = placebo_study(panel, stats, arm=arm, bootstrap=bootstrap)
        except EstimationError:
            an.placebos = None
    if an.placebos is not None:
        z = z_quantile(alpha)
        for ell, p in an.placebos.horizon_placebos.items():
            se = an.placebos.se.get(ell)
            if se is not None and np.isfinite(se):
                an.placebo_ses[ell] = se
                an.placebo_cis[ell] = ConfidenceInterval(p.estimate - z * se, p.estimate + z * se,
                                                         alpha, "bootstrap-normal")
    return an


class DIDEventStudy(BaseEstimator):
    """Event-study DID estimator for designs where treatment can change
    more than once and need not be binary.

    Parameters
    ----------
    group, time, outcome, treatment : str
        Column names in the input frame.
    weight : str or None
        Optional column of cell sizes or micro-observation weights.
    discount : float
        Discount factor in (0, 1] applied to later horizons.
    trim_k : int or None
        Also report the aggregate over horizons ``0..trim_k``.
    arm : {"plus", "minus", "combined"}
    alpha : float
        One minus the confidence level.
    n_bootstrap : int
        Cluster bootstrap replications for placebos and non-analytic arms;
        0 disables the bootstrap for the initially-untreated arm.
    random_state : int
    ci_method : {"analytic", "bootstrap"} or None
        See :func:`analyze`.
    treat_tol : float
        Tolerance for detecting a treatment change.

    Attributes
    ----------
    panel_ : Panel
    design_ : DesignStats
    result_ : EventStudyResult
    analysis_ : EventStudyAnalysis
    """

    def __init__(self, group="group", time="time", outcome="outcome", treatment="treatment",
                 weight=None, discount=1.0, trim_k=None, arm="plus", alpha=0.05,
                 n_bootstrap=100, random_state=0, ci_method=None, treat_tol=0.0):
        self.group = group
        self.time = time
        self.outcome = outcome
        self.treatment = treatment
        self.weight = weight
        self.discount = discount
        self.trim_k = trim_k
        self.arm = arm
        self.alpha = alpha
        self.n_bootstrap = n_bootstrap
        self.random_state = random_state
        self.ci_method = ci_method
        self.treat_tol = treat_tol

    def _columns(self):
        return {"group": self.group, "time": self.time, "outcome": self.outcome,
                "treatment": self.treatment, "weight": self.weight}

    def fit(self, X, y=None):
        panel = check_panel_frame(X, self._columns(), self.discount)
        spec = BootstrapSpec(self.n_bootstrap, self.random_state) if self.n_bootstrap else None
        self.panel_ = panel
        self.analysis_ = analyze(panel, arm=self.arm, trim_k=self.trim_k, alpha=self.alpha,
                                 bootstrap=spec, ci_method=self.ci_method,
                                 treat_tol=self.treat_tol)
        self.design_ = self.analysis_.stats
        self.result_ = self.analysis_.result
        self.n_groups_ = panel.n_groups
        return self

    @property
    def aggregate_(self):
        return self.result_.aggregate

    def effects_frame(self) -> pd.DataFrame:
        """Table of effects, first stages, placebos and aggregates."""
        return self.analysis_.table()


class TWFEDiagnostics(BaseEstimator):
    """Weight decomposition of a TWFE regression coefficient.

    Parameters
    ----------
    spec : {"prop1", "prop3", "prop4"}
        Intensity x period, distributed-lag or local-projection regression.
    lags : int
        Number of treatment lags for the distributed-lag regression.
    horizon : int
        Horizon of the local-projection regression.
    """

    def __init__(self, spec="prop3", lags=0, horizon=0, group="group", time="time",
                 outcome="outcome", treatment="treatment", weight=None):
        self.spec = spec
        self.lags = lags
        self.horizon = horizon
        self.group = group
        self.time = time
        self.outcome = outcome
        self.treatment = treatment
        self.weight = weight

    def fit(self, X, y=None):
        cols = {"group": self.group, "time": self.time, "outcome": self.outcome,
                "treatment": self.treatment, "weight": self.weight}
        panel = check_panel_frame(X, cols)
        if self.spec == "prop1":
            self.report_ = prop1_weights(panel)
        elif self.spec == "prop3":
            self.report_ = prop3_weights(panel, int(self.lags))
        elif self.spec == "prop4":
            self.report_ = prop4_weights(panel, int(self.horizon))
        else:
            raise ValueError(f"spec must be prop1, prop3 or prop4, got {self.spec!r}")
        self.weights_ = self.report_.weights
        self.coefficient_ = self.report_.coefficient
        return self


__all__ = ["DIDEventStudy", "EventStudyAnalysis", "TWFEDiagnostics", "analyze"]
