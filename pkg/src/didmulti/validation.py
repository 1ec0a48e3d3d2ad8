"""Input checks shared by the estimator classes and the CLI."""

from __future__ import annotations

import numbers

import pandas as pd

from .exceptions import PanelValidationError
from .panel import Panel


def check_columns(columns) -> dict:
    """Column map with the required keys filled in."""
    cols = {"group": "group", "time": "time", "outcome": "outcome",
            "treatment": "treatment", "weight": None}
    if columns:
        unknown = set(columns) - set(cols)
        if unknown:
            raise ValueError(f"unknown column roles: {sorted(unknown)}")
        cols.update(columns)
    return cols


def check_discount(beta) -> float:
    if not isinstance(beta, numbers.Real) or not 0 < beta <= 1:
        raise PanelValidationError(f"discount must lie in (0, 1], got {beta!r}")
    return float(beta)


def check_alpha(alpha) -> float:
    if not isinstance(alpha, numbers.Real) or not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    return float(alpha)


def check_panel_frame(X, columns=None, discount=1.0) -> Panel:
    """Build a :class:`Panel` from a long frame or pass a Panel through."""
    if isinstance(X, Panel):
        return X if discount == X.discount else X.replace(discount=check_discount(discount))
    if not isinstance(X, pd.DataFrame):
        raise TypeError(f"expected a pandas DataFrame or Panel, got {type(X).__name__}")
    if X.empty:
        raise PanelValidationError("empty data frame")
    cols = check_columns(columns)
    return Panel.from_frame(X, group=cols["group"], time=cols["time"], outcome=cols["outcome"],
                            treatment=cols["treatment"], weight=cols["weight"],
                            discount=check_discount(discount))
