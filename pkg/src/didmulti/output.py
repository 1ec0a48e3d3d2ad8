"""Tables, JSON documents and run manifests.

Outputs are deterministic: no timestamps, sorted JSON keys, and floats in
CSV written with 17 significant digits so that a table read back and
written again is byte-identical.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

FLOAT_FORMAT = "%.17g"


def tool_version() -> str:
    from importlib import metadata

    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        from . import __version__
        return __version__


@dataclass
class RunManifest:
    subcommand: str
    input_path: str | None
    input_sha256: str | None
    column_map: dict
    discount: float
    trim_k: int | None = None
    bootstrap: dict | None = None
    out_dir: str = "."
    options: dict = field(default_factory=dict)
    tool_version: str = field(default_factory=tool_version)

    def to_dict(self):
        return asdict(self)


def jsonable(x):
    """Convert numpy scalars, arrays and non-finite floats for JSON."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def dumps_json(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def frame_to_csv(df: pd.DataFrame) -> str:
    return df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


class OutputBundle:
    """Files held in memory until every computation has succeeded.

    Nothing touches the output directory before :meth:`write`, so a failed
    run leaves no partial outputs behind.
    """

    def __init__(self):
        self.files = {}

    def add_text(self, name, text):
        self.files[name] = text

    def add_json(self, name, obj):
        self.files[name] = dumps_json(obj)

    def add_csv(self, name, frame):
        self.files[name] = frame_to_csv(frame)

    def write(self, out_dir) -> list:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name, text in sorted(self.files.items()):
            path = out / name
            tmp = path.with_suffix(path.suffix + ".tmp")
            tmp.write_text(text, encoding="utf-8", newline="")
            tmp.replace(path)
            written.append(path)
        return written


def ci_fields(ci):
    if ci is None:
        return {"ci_lower": math.nan, "ci_upper": math.nan, "ci_method": ""}
    return {"ci_lower": ci.lower, "ci_upper": ci.upper, "ci_method": ci.method}


def event_study_table(result, *, cis=None, ses=None, placebos=None, placebo_ses=None,
                      placebo_cis=None, trim_k=None):
    """Flat table: one row per horizon per quantity.

    ``kind`` is one of ``effect``, ``first_stage``, ``placebo``,
    ``aggregate`` or ``trimmed`` (whose ``horizon`` is the last horizon
    included); ``x`` is the event-time position used in
    figures (placebo ``l`` at ``-2 - l``).
    """
    cis, ses = cis or {}, ses or {}
    placebo_ses, placebo_cis = placebo_ses or {}, placebo_cis or {}
    rows = []

    def add(kind, horizon, x, est, mass=math.nan, n=0, key=None):
        ci = cis.get(key) if key is not None else None
        rows.append({"arm": result.arm, "kind": kind, "horizon": horizon, "x": x,
                     "estimate": est, "se": ses.get(key, math.nan) if key is not None else math.nan,
                     **ci_fields(ci), "mass": mass, "n_groups": n})

    if placebos is not None:
        for ell, p in sorted(placebos.horizon_placebos.items(), reverse=True):
            rows.append({"arm": result.arm, "kind": "placebo", "horizon": ell, "x": -2 - ell,
                         "estimate": p.estimate, "se": placebo_ses.get(ell, math.nan),
                         **ci_fields(placebo_cis.get(ell)), "mass": p.mass,
                         "n_groups": p.n_groups})
    for ell, h in sorted(result.horizon_effects.items()):
        add("effect", ell, ell, h.estimate, h.mass, h.n_groups, key=ell)
    for ell, h in sorted(result.horizon_effects.items()):
        add("first_stage", ell, ell, h.first_stage, h.mass, h.n_groups)
    # every group counted at a later horizon is also a horizon-0 switcher
    h = result.horizon_effects
    first = h[min(h)].n_groups

    def mass_upto(k):
        return sum(e.mass for ell, e in h.items() if ell <= k)

    add("aggregate", max(h), math.nan, result.aggregate, mass_upto(max(h)), first,
        key="aggregate")
    for k, v in sorted(result.trimmed.items()):
        if trim_k is None or k == trim_k:
            add("trimmed", k, math.nan, v, mass_upto(k), first, key=f"trimmed[{k}]")
    return pd.DataFrame(rows)


__all__ = ["OutputBundle", "RunManifest", "dumps_json", "event_study_table",
           "frame_to_csv", "jsonable", "tool_version"]
