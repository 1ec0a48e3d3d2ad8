"""Panel data model, CSV ingestion and design statistics.

A :class:`Panel` holds group-by-period cell means of the outcome, the
(sharp) treatment and the cell sizes. Everything the estimators need that
depends only on the treatment paths and cell sizes lives in
:class:`DesignStats`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

from .exceptions import (
    PanelValidationError,
    PathologicalDesignError,
    SharpDesignError,
    UnbalancedPanelError,
)

DEFAULT_COLUMNS = {
    "group": "group",
    "time": "time",
    "outcome": "outcome",
    "treatment": "treatment",
    "weight": None,
}


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Panel:
    """Balanced group x period panel.

    Attributes
    ----------
    groups : tuple of str
        Group identifiers, row order of the arrays.
    periods : tuple of int
        Consecutive integer period labels, column order of the arrays.
    outcome, treatment, cell_size : ndarray of shape (G, T)
        ``Y_{g,t}``, ``D_{g,t}`` and ``N_{g,t}``.
    discount : float
        Planner discount factor in (0, 1].
    """

    groups: tuple
    periods: tuple
    outcome: np.ndarray
    treatment: np.ndarray
    cell_size: np.ndarray
    discount: float = 1.0

    def __post_init__(self):
        groups = tuple(str(g) for g in self.groups)
        periods = tuple(int(t) for t in self.periods)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "periods", periods)
        G, T = len(groups), len(periods)
        for name in ("outcome", "treatment", "cell_size"):
            arr = _frozen(getattr(self, name))
            if arr.shape != (G, T):
                raise PanelValidationError(
                    f"{name} has shape {arr.shape}, expected {(G, T)}")
            if not np.all(np.isfinite(arr)):
                bad = np.argwhere(~np.isfinite(arr))[0]
                raise PanelValidationError(
                    f"non-finite {name} at ({groups[bad[0]]},{periods[bad[1]]})")
            object.__setattr__(self, name, arr)
        if len(set(groups)) != G:
            raise PanelValidationError("duplicate group identifiers")
        if G < 1 or T < 2:
            raise PanelValidationError("need at least one group and two periods")
        if any(b - a != 1 for a, b in zip(periods, periods[1:])):
            raise PanelValidationError(
                "period labels must be consecutive integers, got "
                f"{periods[0]}..{periods[-1]} with gaps")
        if np.any(self.cell_size <= 0):
            raise PanelValidationError("cell sizes must be strictly positive")
        if not 0.0 < float(self.discount) <= 1.0:
            raise PanelValidationError(f"discount must lie in (0, 1], got {self.discount}")
        object.__setattr__(self, "discount", float(self.discount))

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def n_periods(self) -> int:
        return len(self.periods)

    @property
    def shape(self):
        return (self.n_groups, self.n_periods)

    def replace(self, **changes) -> "Panel":
        kw = dict(groups=self.groups, periods=self.periods, outcome=self.outcome,
                  treatment=self.treatment, cell_size=self.cell_size,
                  discount=self.discount)
        kw.update(changes)
        return Panel(**kw)

    def take(self, rows, *, relabel=False) -> "Panel":
        """Panel made of the given group rows (repeats allowed when ``relabel``)."""
        rows = np.asarray(rows, dtype=int)
        if relabel:
            groups = tuple(f"{self.groups[r]}#{k}" for k, r in enumerate(rows))
        else:
            groups = tuple(self.groups[r] for r in rows)
        return self.replace(groups=groups, outcome=self.outcome[rows],
                            treatment=self.treatment[rows],
                            cell_size=self.cell_size[rows])

    def to_frame(self) -> pd.DataFrame:
        G, T = self.shape
        return pd.DataFrame({
            "group": np.repeat(self.groups, T),
            "time": np.tile(self.periods, G),
            "outcome": self.outcome.ravel(),
            "treatment": self.treatment.ravel(),
            "weight": self.cell_size.ravel(),
        })

    @classmethod
    def from_arrays(cls, outcome, treatment, cell_size=None, *, groups=None,
                    periods=None, discount=1.0) -> "Panel":
        outcome = np.asarray(outcome, dtype=float)
        G, T = outcome.shape
        if cell_size is None:
            cell_size = np.ones((G, T))
        if groups is None:
            groups = [str(g + 1) for g in range(G)]
        if periods is None:
            periods = range(1, T + 1)
        return cls(groups, periods, outcome, treatment, cell_size, discount)

    @classmethod
    def from_frame(cls, df: pd.DataFrame, *, group="group", time="time",
                   outcome="outcome", treatment="treatment", weight=None,
                   discount=1.0) -> "Panel":
        """Aggregate a long data frame into cell means.

        Several rows for one (group, period) cell are micro observations: the
        cell outcome is their mean and the cell size their count. With a
        ``weight`` column the cell size is the sum of weights and the mean is
        weighted by them. Treatment must be constant within each cell.
        """
        cols = [group, time, outcome, treatment] + ([weight] if weight else [])
        missing = [c for c in cols if c not in df.columns]
        if missing:
            raise PanelValidationError(f"missing columns: {', '.join(missing)}")
        data = df[cols].copy()
        na = data[[group, time, outcome, treatment]].isna()
        if na.any().any():
            bad = na.any(axis=1).to_numpy().nonzero()[0]
            cols_bad = [c for c in na.columns if na[c].any()]
            shown = ", ".join(str(i + 2) for i in bad[:10])
            raise PanelValidationError(
                f"missing values in {', '.join(cols_bad)} on line(s) {shown}"
                + (" ..." if bad.size > 10 else ""))
        data[group] = data[group].astype(str)
        try:
            tnum = pd.to_numeric(data[time])
            yv = pd.to_numeric(data[outcome]).astype(float)
            dv = pd.to_numeric(data[treatment]).astype(float)
            wv = pd.to_numeric(data[weight]).astype(float) if weight else None
        except (ValueError, TypeError) as exc:
            raise PanelValidationError(f"non-numeric value: {exc}") from exc
        if np.any(tnum != np.round(tnum)):
            raise PanelValidationError("period labels must be integers")
        data[time] = tnum.astype(np.int64)
        data[outcome], data[treatment] = yv, dv
        if weight:
            if np.any(wv <= 0) or wv.isna().any():
                raise PanelValidationError("weights must be strictly positive")
            data[weight] = wv
        else:
            weight = "__n"
            data[weight] = 1.0

        keys = [group, time]
        dspread = data.groupby(keys, sort=False)[treatment].agg(["min", "max"])
        varying = dspread[dspread["min"] != dspread["max"]]
        if len(varying):
            g, t = varying.index[0]
            raise SharpDesignError(g, t)

        data["__wy"] = data[outcome] * data[weight]
        cells = data.groupby(keys, sort=False).agg(
            wy=("__wy", "sum"), n=(weight, "sum"), d=(treatment, "first"),
            y1=(outcome, "first"), rows=(outcome, "size"))
        # single-row cells keep their value exactly
        cells["y"] = np.where(cells["rows"] == 1, cells["y1"], cells["wy"] / cells["n"])

        groups = sorted(cells.index.get_level_values(0).unique(), key=_natural_key)
        tvals = sorted(cells.index.get_level_values(1).unique())
        periods = list(range(tvals[0], tvals[-1] + 1))
        if len(periods) != len(tvals):
            gaps = sorted(set(periods) - set(tvals))
            raise PanelValidationError(f"period labels are not consecutive, gaps at {gaps}")
        full = pd.MultiIndex.from_product([groups, periods], names=keys)
        absent = full.difference(cells.index)
        if len(absent):
            raise UnbalancedPanelError(sorted(absent, key=lambda c: (_natural_key(c[0]), c[1])))
        cells = cells.reindex(full)
        G, T = len(groups), len(periods)
        return cls(groups, periods,
                   cells["y"].to_numpy().reshape(G, T),
                   cells["d"].to_numpy().reshape(G, T),
                   cells["n"].to_numpy().reshape(G, T),
                   discount)


def _natural_key(label):
    s = str(label)
    try:
        return (0, float(s), s)
    except ValueError:
        return (1, 0.0, s)


def ingest_csv(path, column_map: Mapping[str, str | None] | None = None,
               discount: float = 1.0) -> Panel:
    """Read a UTF-8 CSV with a header row into a validated :class:`Panel`.

    ``column_map`` maps the roles ``group``, ``time``, ``outcome``,
    ``treatment`` and optionally ``weight`` to column names.
    """
    cmap = dict(DEFAULT_COLUMNS)
    if column_map:
        cmap.update({k: v for k, v in column_map.items() if k in cmap})
    path = Path(path)
    if not path.is_file():
        raise PanelValidationError(f"input file not found: {path}")
    try:
        df = pd.read_csv(path, encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise PanelValidationError(f"cannot parse {path}: {exc}") from exc
    return Panel.from_frame(df, group=cmap["group"], time=cmap["time"],
                            outcome=cmap["outcome"], treatment=cmap["treatment"],
                            weight=cmap["weight"], discount=discount)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def first_switch(treatment, tol=0.0) -> np.ndarray:
    """1-based period of the first treatment change, ``T + 1`` if none."""
    D = np.asarray(treatment, dtype=float)
    T = D.shape[-1]
    changed = np.abs(np.diff(D, axis=-1)) > tol
    first = np.argmax(changed, axis=-1) + 2
    return np.where(changed.any(axis=-1), first, T + 1)


def monotone_eligibility(treatment, baseline, tol=0.0) -> np.ndarray:
    """``elig[g, l]``: treatment stays weakly above its period-one value
    through period ``F_g + l`` (trivially true for binary 0-start paths)."""
    D = np.asarray(treatment, dtype=float)
    below = D < (np.asarray(baseline, dtype=float)[:, None] - tol)
    # cum[g, s]: some period <= s+1 is below baseline
    cum = np.logical_or.accumulate(below, axis=1)
    F = first_switch(D, tol)
    T = D.shape[1]
    ell = np.arange(T)
    col = np.clip(F[:, None] + ell[None, :] - 1, 0, T - 1)
    return ~np.take_along_axis(cum, col, axis=1)


@dataclass(frozen=True, eq=False)
class DesignStats:
    """Design objects derived from treatments and cell sizes only.

    Periods are 1-based indices into ``panel.periods``. ``first_switch`` is
    ``T + 1`` for groups whose treatment never changes. Maps over horizons
    only contain horizons with a strictly positive switcher mass.
    """

    first_switch: dict
    baseline_treatment: dict
    t_u: int
    l_u: int
    n_u: dict
    n1: dict
    weights_w: dict
    is_staggered: bool
    is_binary: bool
    n_excluded: int = 0
    # array views used by the estimators
    F: np.ndarray = field(repr=False, default=None)
    untreated: np.ndarray = field(repr=False, default=None)
    eligible: np.ndarray = field(repr=False, default=None)

    @property
    def horizons(self):
        return sorted(self.n1)

    @property
    def l_pl_u(self) -> int:
        Fu = self.F[self.untreated]
        return int(np.max(np.minimum(self.t_u - Fu, Fu - 3)))


def is_binary_treatment(treatment) -> bool:
    D = np.asarray(treatment)
    return bool(np.all((D == 0) | (D == 1)))


def design_stats(panel: Panel, *, treat_tol: float = 0.0,
                 require_binary: bool = False) -> DesignStats:
    """Compute first-switch dates, ``T_u``, ``L_u``, masses and weights.

    Raises
    ------
    PathologicalDesignError
        When no two initially-untreated groups have distinct first-switch
        dates.
    """
    D = panel.treatment
    N = panel.cell_size
    G, T = panel.shape
    binary = is_binary_treatment(D)
    if require_binary and not binary:
        bad = np.argwhere((D != 0) & (D != 1))[0]
        raise PanelValidationError(
            "binary treatment asserted but D="
            f"{D[bad[0], bad[1]]!r} at ({panel.groups[bad[0]]},{panel.periods[bad[1]]})")
    F = first_switch(D, treat_tol)
    base = D[:, 0]
    untreated = np.abs(base) <= treat_tol
    Fu = F[untreated]
    if Fu.size < 2 or Fu.min() == Fu.max():
        raise PathologicalDesignError(
            "pathological design: need two initially-untreated groups with "
            "different first-switch dates")
    t_u = int(Fu.max() - 1)
    l_u = int(t_u - Fu.min())
    periods = np.arange(1, T + 1)
    nyt = untreated[:, None] & (F[:, None] > periods[None, :])
    n_u = {int(t): float(v) for t, v in zip(periods, (N * nyt).sum(axis=0))}
    elig = monotone_eligibility(D, np.zeros(G), treat_tol) & untreated[:, None]
    beta = panel.discount
    n1 = {}
    n_excluded = 0
    for ell in range(l_u + 1):
        inset = untreated & (F <= t_u - ell)
        n_excluded += int(np.sum(inset & ~elig[:, ell]))
        members = np.flatnonzero(inset & elig[:, ell])
        mass = float(sum(beta ** (F[g] + ell) * N[g, F[g] + ell - 1] for g in members))
        if mass > 0:
            n1[ell] = mass
    total = sum(n1.values())
    weights_w = {ell: m / total for ell, m in n1.items()}
    dd = np.diff(D, axis=1)
    staggered = bool(np.all(dd >= 0) or np.all(dd <= 0))
    return DesignStats(
        first_switch={g: int(f) for g, f in zip(panel.groups, F)},
        baseline_treatment={g: float(b) for g, b in zip(panel.groups, base)},
        t_u=t_u, l_u=l_u, n_u=n_u, n1=n1, weights_w=weights_w,
        is_staggered=staggered, is_binary=binary, n_excluded=n_excluded,
        F=_frozen(F, int), untreated=_frozen(untreated, bool),
        eligible=_frozen(elig, bool),
    )
