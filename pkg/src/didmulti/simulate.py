"""Synthetic panels with known effects and Monte Carlo experiments.

Potential outcomes are linear in the treatment history,

    Y_{g,t}(d) = Y_{g,t}(0) + sum_{s <= t} K[g, t, s] * d_s,

with an effect kernel ``K`` that is zero above the diagonal (no
anticipation). The untreated outcome is a group effect plus a period effect
plus AR(1) noise, optionally with a linear trend for groups that ever switch
to break parallel trends on purpose. The true event-study parameters follow
from ``K`` and the realised treatment paths alone.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import _engine
from .exceptions import AnticipationError, ConfigError, DesignMismatchError
from .inference import analytic_ci_batch, z_quantile
from .panel import Panel, design_stats, first_switch

ASSIGNMENTS = ("staggered", "nonstaggered", "intensity", "local_projection", "explicit")
EFFECTS = ("zero", "cumulative", "instantaneous", "dynamic", "group", "time_varying",
           "monotone", "kernel")


@dataclass
class SimConfig:
    """Monte Carlo design.

    ``assignment`` and ``effect`` are small dicts whose ``kind`` selects a
    rule; the remaining keys parameterise it (see the README for the list).
    """

    G: int = 50
    T: int = 8
    assignment: dict = field(default_factory=lambda: {"kind": "staggered"})
    effect: dict = field(default_factory=lambda: {"kind": "cumulative", "tau": 1.0})
    group_sd: float = 1.0
    period_sd: float = 1.0
    noise_sd: float = 1.0
    ar1: float = 0.0
    trend_slope: float = 0.0
    cell_size: float | list = 1.0
    discount: float = 1.0
    replications: int = 1000
    seed: int = 0
    conditional: bool = True
    alpha: float = 0.05
    bootstrap: int = 0
    twfe: dict | None = None
    assertions: list = field(default_factory=list)

    def __post_init__(self):
        if self.G < 2 or self.T < 2:
            raise ConfigError("need G >= 2 and T >= 2")
        for name in ("group_sd", "period_sd", "noise_sd"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if not -1 < self.ar1 < 1:
            raise ConfigError("ar1 must lie in (-1, 1)")
        if self.replications < 1:
            raise ConfigError("replications must be positive")
        if self.assignment.get("kind") not in ASSIGNMENTS:
            raise ConfigError(f"assignment kind must be one of {ASSIGNMENTS}")
        if self.effect.get("kind") not in EFFECTS:
            raise ConfigError(f"effect kind must be one of {EFFECTS}")
        if not 0 < self.discount <= 1:
            raise ConfigError("discount must lie in (0, 1]")

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            return cls(**d)
        except TypeError as err:
            raise ConfigError(str(err)) from None

    @classmethod
    def from_json(cls, path):
        try:
            data = json.loads(Path(path).read_text())
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err}") from None
        except json.JSONDecodeError as err:
            raise ConfigError(f"config {path} is not valid JSON: {err}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self):
        return asdict(self)


def _rng(seed, *path):
    return np.random.default_rng(np.random.SeedSequence([seed, *path]))


# --------------------------------------------------------------- treatment

def draw_treatment(config: SimConfig, rng) -> np.ndarray:
    a = config.assignment
    G, T = config.G, config.T
    kind = a["kind"]
    t = np.arange(1, T + 1)
    if kind == "explicit":
        D = np.asarray(a["treatment"], dtype=float)
        if D.shape != (G, T):
            raise ConfigError(f"explicit treatment has shape {D.shape}, expected {(G, T)}")
        return D
    if kind == "staggered":
        F = _switch_dates(a, G, T, rng)
        return (t[None, :] >= F[:, None]).astype(float)
    if kind == "nonstaggered":
        p = a.get("p_switch", 0.2)
        share = a.get("initially_treated", 0.0)
        for _ in range(1000):
            start = (rng.random(G) < share).astype(float)
            flips = rng.random((G, T - 1)) < p
            D = np.concatenate([start[:, None], (start[:, None] + np.cumsum(flips, 1)) % 2], 1)
            if _usable(D):
                return D
        raise ConfigError("could not draw a non-pathological non-staggered design")
    if kind in ("intensity", "local_projection"):
        levels = np.asarray(a.get("intensities", [0, 1, 2, 3]), dtype=float)
        counts = a.get("counts")
        I = (np.repeat(levels, counts) if counts is not None
             else rng.choice(levels, size=G))
        if I.size != G:
            raise ConfigError("intensity counts must sum to G")
        F = (np.full(G, int(a.get("switch", T // 2 + 1))) if kind == "intensity"
             else _switch_dates(a, G, T, rng))
        F = np.where(I == 0, T + 1, F)
        return I[:, None] * (t[None, :] >= F[:, None])
    raise ConfigError(f"unknown assignment {kind!r}")


def _switch_dates(a, G, T, rng):
    if "first_switch" in a:
        F = np.asarray(a["first_switch"], dtype=int)
        if F.shape != (G,) or F.min() < 2 or F.max() > T + 1:
            raise ConfigError("first_switch must list G dates in 2..T+1")
        return F
    dates = np.asarray(a.get("dates", list(range(2, T + 2))), dtype=int)
    never = a.get("never_treated", None)
    for _ in range(1000):
        F = rng.choice(dates, size=G)
        if never:
            F[: int(round(never * G))] = T + 1
        if np.unique(F).size >= 2:
            return F
    raise ConfigError("could not draw switch dates with variation")


def _usable(D):
    F = first_switch(D)
    Fu = F[D[:, 0] == 0]
    return Fu.size >= 2 and Fu.min() < Fu.max() and Fu.min() <= Fu.max() - 1


# ------------------------------------------------------------ effect model

def effect_kernel(config: SimConfig, rng) -> np.ndarray:
    """Kernel ``K`` of shape (G, T, T); ``K[g, t, s]`` is the effect on
    period ``t`` of one unit of treatment at period ``s`` (0-based)."""
    e = config.effect
    G, T = config.G, config.T
    kind = e["kind"]
    lower = np.tril(np.ones((T, T)))
    diag = np.eye(T)
    lag = np.subtract.outer(np.arange(T), np.arange(T))  # t - s
    if kind == "zero":
        K = np.zeros((G, T, T))
    elif kind == "cumulative":
        K = np.broadcast_to(e.get("tau", 1.0) * lower, (G, T, T)).copy()
    elif kind == "instantaneous":
        c = np.broadcast_to(np.asarray(e.get("tau", 1.0), dtype=float), (G,))
        if "by_intensity" in e:
            c = _by_intensity(config, e["by_intensity"])
        K = c[:, None, None] * diag
    elif kind == "dynamic":
        prof = np.asarray(e["lags"], dtype=float)
        K = np.zeros((G, T, T))
        for k, v in enumerate(prof[:T]):
            K[:, lag == k] = v
    elif kind == "group":
        tau = rng.normal(e.get("tau", 1.0), e.get("sd", 1.0), size=G)
        K = tau[:, None, None] * lower
    elif kind == "time_varying":
        tau_t = np.asarray(e["tau_t"], dtype=float)
        if tau_t.shape != (T,):
            raise ConfigError("tau_t must have one entry per period")
        K = np.broadcast_to(tau_t[:, None] * lower, (G, T, T)).copy()
    elif kind == "monotone":
        scale = e.get("scale", 1.0)
        decay = e.get("decay", 0.5)
        amp = np.abs(rng.normal(0.0, scale, size=G))
        K = amp[:, None, None] * np.where(lag >= 0, decay ** np.maximum(lag, 0), 0.0)[None]
    elif kind == "kernel":
        K = np.asarray(e["kernel"], dtype=float)
        if K.shape == (T, T):
            K = np.broadcast_to(K, (G, T, T)).copy()
    else:
        raise ConfigError(f"unknown effect model {kind!r}")
    check_no_anticipation(K)
    return K


def _by_intensity(config, mapping):
    D = draw_treatment(config, _rng(config.seed, 0))
    I = D.max(axis=1)
    try:
        return np.array([float(mapping[str(int(i)) if float(i).is_integer() else str(i)])
                         if i != 0 else 0.0 for i in I])
    except KeyError as err:
        raise ConfigError(f"no effect given for intensity {err}") from None


def check_no_anticipation(K):
    """Reject kernels where a treatment affects earlier outcomes."""
    K = np.asarray(K)
    if K.ndim != 3 or K.shape[1] != K.shape[2]:
        raise ConfigError(f"effect kernel must have shape (G, T, T), got {K.shape}")
    upper = np.triu(np.ones(K.shape[1:], dtype=bool), k=1)
    if np.any(K[:, upper] != 0):
        raise AnticipationError(
            "effect model references future treatments (no-anticipation violated)")


def apply_effects(Y0, D, K):
    """Observed outcomes ``Y0 + sum_s K[g,t,s] * D[g,s]``."""
    return Y0 + np.einsum("gts,gs->gt", K, D)


# ----------------------------------------------------------------- truth

@dataclass
class Truth:
    delta_g: dict          # (group index, l) -> delta_{g,l}
    delta_plus: dict       # l -> delta_{+,l}
    first_stage: dict      # l -> delta^D_{+,l}
    delta: float           # delta_+
    mass: dict             # l -> N^1_l


def true_effects(D, N, K, discount=1.0) -> Truth:
    """Event-study parameters implied by the kernel and the treatment paths.

    ``delta_{g,l}`` is the effect at ``F_g + l`` of the realised path
    relative to keeping the period-one treatment throughout.
    """
    D = np.asarray(D, dtype=float)
    G, T = D.shape
    F = first_switch(D)
    untreated = D[:, 0] == 0
    t_u = int(F[untreated].max() - 1)
    l_u = t_u - int(F[untreated].min())
    dev = D - D[:, :1]
    dg, dp, fs, mass = {}, {}, {}, {}
    for ell in range(l_u + 1):
        num = den = m = 0.0
        for g in range(G):
            if not untreated[g] or F[g] > t_u - ell:
                continue
            t = F[g] + ell - 1
            if np.any(D[g, : t + 1] < 0):
                continue
            eff = float(K[g, t, : t + 1] @ dev[g, : t + 1])
            dg[(g, ell)] = eff
            w = discount ** (t + 1) * N[g, t]
            num += w * eff
            den += w * D[g, t]
            m += w
        if m > 0:
            dp[ell], fs[ell], mass[ell] = num / m, den / m, m
    total = sum(mass.values())
    top = sum(mass[l] * dp[l] for l in mass) / total
    bot = sum(mass[l] * fs[l] for l in mass) / total
    return Truth(dg, dp, fs, top / bot if bot != 0 else math.nan, mass)


# ------------------------------------------------------------- generation

@dataclass
class SimDraw:
    panel: Panel
    truth: Truth
    untreated_outcome: np.ndarray


def _cell_sizes(config, rng):
    cs = config.cell_size
    if isinstance(cs, (int, float)):
        return np.full((config.G, config.T), float(cs))
    lo, hi = cs
    return np.repeat(rng.integers(lo, hi + 1, size=(config.G, 1)), config.T, axis=1).astype(float)


def _untreated_outcomes(config, D, rng, n=None):
    """Draws of ``Y(0)`` with shape (n, G, T), or (G, T) when ``n`` is None."""
    G, T = config.G, config.T
    shape = (1 if n is None else n, G)
    a = rng.normal(0, config.group_sd, size=shape)[..., None]
    b = rng.normal(0, config.period_sd, size=(shape[0], 1, T))
    eps = rng.normal(0, config.noise_sd, size=shape + (T,))
    if config.ar1:
        rho = config.ar1
        eps[..., 0] /= math.sqrt(1 - rho ** 2)
        for t in range(1, T):
            eps[..., t] += rho * eps[..., t - 1]
    y = a + b + eps
    if config.trend_slope:
        switcher = first_switch(D) <= T
        y = y + config.trend_slope * switcher[:, None] * np.arange(1, T + 1)[None, :]
    return y[0] if n is None else y


class Design:
    """Treatment, cell sizes and kernel of one Monte Carlo design."""

    def __init__(self, config: SimConfig, replicate: int = 0):
        drng = _rng(config.seed, 0) if config.conditional else _rng(config.seed, 2, replicate)
        self.config = config
        self.D = draw_treatment(config, drng)
        self.N = _cell_sizes(config, drng)
        self.K = effect_kernel(config, _rng(config.seed, 4))
        self.truth = true_effects(self.D, self.N, self.K, config.discount)
        self.groups = tuple(f"g{g + 1}" for g in range(config.G))

    def panel(self, Y):
        return Panel(self.groups, tuple(range(1, self.config.T + 1)), Y, self.D, self.N,
                     self.config.discount)

    def outcomes(self, rng, n=None):
        Y0 = _untreated_outcomes(self.config, self.D, rng, n)
        return Y0 + np.einsum("gts,gs->gt", self.K, self.D), Y0


def generate(config: SimConfig, replicate: int = 0) -> SimDraw:
    """One synthetic panel and the true parameters behind it."""
    design = Design(config, replicate)
    Y, Y0 = design.outcomes(_rng(config.seed, 1, replicate))
    return SimDraw(design.panel(Y), design.truth, Y0)


# ------------------------------------------------------------ Monte Carlo

@dataclass
class SimReport:
    """Monte Carlo summary.

    ``table`` has one row per estimand with columns ``estimand``,
    ``horizon``, ``truth``, ``mean``, ``sd``, ``mc_se``, ``bias``,
    ``bias_z``, ``coverage`` and ``n``.
    """

    config: dict
    table: pd.DataFrame
    placebo_rejection: float | None = None
    placebo_tests: int = 0
    twfe: dict = field(default_factory=dict)
    assertions: list = field(default_factory=list)

    @property
    def passed(self):
        return all(a["passed"] for a in self.assertions)

    def row(self, estimand, horizon=None):
        t = self.table[self.table.estimand == estimand]
        if horizon is not None:
            t = t[t.horizon == horizon]
        return t.iloc[0]

    def to_dict(self):
        return {"config": self.config, "table": self.table.to_dict(orient="records"),
                "placebo_rejection": self.placebo_rejection,
                "placebo_tests": self.placebo_tests, "twfe": self.twfe,
                "assertions": self.assertions, "passed": self.passed}

    def to_json(self, path):
        Path(path).write_text(json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True) + "\n")

    def to_csv(self, path):
        self.table.to_csv(path, index=False, float_format="%.17g")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return None if not np.isfinite(x) else float(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _moments(x):
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    n = x.size
    if n == 0:
        return math.nan, math.nan, math.nan, 0
    mean = math.fsum(x) / n
    sd = math.sqrt(math.fsum((x - mean) ** 2) / (n - 1)) if n > 1 else math.nan
    return mean, sd, sd / math.sqrt(n) if n > 1 else math.nan, n


def _row(estimand, horizon, truth, draws, covered=None):
    mean, sd, se, n = _moments(draws)
    bias = mean - truth if truth is not None else math.nan
    return {"estimand": estimand, "horizon": horizon, "truth": truth, "mean": mean, "sd": sd,
            "mc_se": se, "bias": bias,
            "bias_z": bias / se if se and np.isfinite(se) and se > 0 else math.nan,
            "coverage": float(np.mean(covered)) if covered is not None else math.nan, "n": n}


def _placebo_rejections(design, Y, config, pl_idx, horizons, stats):
    """Joint placebo test per replicate with a vectorised cluster bootstrap."""
    from .inference import _pathological
    from .placebos import placebo_joint_test

    pnl = design.panel(Y[0])
    setup = {"plus": (pnl, stats, 1.0)}
    arm = _engine.ArmDesign.from_stats(pnl, stats)
    B = config.bootstrap
    rejected, n = 0, 0
    for r in range(Y.shape[0]):
        M = _engine.resample_multiplicities(config.G, B, [config.seed, 3, r])
        Nb = design.N[None] * M[:, :, None]
        a = _engine.event_study_arrays(Y[r], Nb, arm, horizons, effects=False)
        reps = a.placebo[:, pl_idx]
        reps[_pathological(Nb, setup)] = np.nan
        ok = np.isfinite(reps).all(axis=1)
        if ok.sum() < 2:
            continue
        est = _engine.event_study_arrays(Y[r], design.N, arm, horizons,
                                         effects=False).placebo[pl_idx]
        cov = np.atleast_2d(np.cov(reps[ok], rowvar=False, ddof=1))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            test = placebo_joint_test(est, cov, int(ok.sum()), config.G)
        rejected += test.p_value < config.alpha
        n += 1
    return rejected / n if n else math.nan, n


def _twfe_draws(design, Y, spec):
    from .twfe import fe_regress, _intensity_regressors, intensity_design, prop1_weights

    pnl = design.panel(Y[0])
    if spec.get("kind", "prop1") != "prop1":
        raise ConfigError("only the intensity x period TWFE summary is simulated")
    I, F = intensity_design(pnl)
    Fc = int(F[I != 0][0])
    regs = _intensity_regressors(pnl, I, Fc)
    report = prop1_weights(pnl)
    w = np.zeros(design.D.shape[0])
    w[I != 0] = report.weights["weight"].to_numpy()
    out = {}
    for ell in [k for k in regs if k >= Fc]:
        coefs = np.array([fe_regress(Y[r], regs, design.N)[ell] for r in range(Y.shape[0])])
        mean, sd, se, n = _moments(coefs)
        t = ell - 1
        norm = np.where(I != 0, I, 1.0)
        eff = np.array([design.K[g, t, : t + 1] @ design.D[g, : t + 1] for g in range(len(I))])
        implied = float(np.sum(w * eff / norm))
        out[int(ell)] = {"mean": mean, "mc_se": se, "decomposition": implied,
                         "min_effect": float(np.min((eff / norm)[I != 0]))}
    out["weights"] = {g: float(v) for g, v in zip(report.weights["group"], report.weights["weight"])}
    out["min_weight"] = float(report.weights["weight"].min())
    return out


def run_monte_carlo(config: SimConfig, *, chunk: int = 500) -> SimReport:
    """Repeat the experiment ``config.replications`` times and tabulate.

    In conditional mode the treatment paths and cell sizes are drawn once and
    held fixed; each replicate redraws the untreated outcomes only.
    """
    if not config.conditional:
        return _run_unconditional(config)
    design = Design(config)
    stats = design_stats(design.panel(np.zeros(design.D.shape)))
    arm = _engine.ArmDesign.from_stats(design.panel(np.zeros(design.D.shape)), stats)
    horizons = list(range(stats.l_u + 1))
    R = config.replications
    rng = _rng(config.seed, 1)
    Y, _ = design.outcomes(rng, R)
    res = {"did": [], "half": [], "agg": [], "agg_half": [], "pl": []}
    for s in range(0, R, chunk):
        out = analytic_ci_batch(Y[s:s + chunk], design.N, arm, horizons, config.alpha)
        pl = _engine.event_study_arrays(Y[s:s + chunk], design.N, arm, horizons,
                                        effects=False).placebo
        for k in ("did", "half", "agg", "agg_half"):
            res[k].append(out[k])
        res["pl"].append(pl)
    res = {k: np.concatenate(v) for k, v in res.items()}
    truth = design.truth
    rows = []
    for j, ell in enumerate(horizons):
        if ell not in truth.delta_plus:
            continue
        est, half = res["did"][:, j], res["half"][:, j]
        cov = np.abs(est - truth.delta_plus[ell]) <= half
        rows.append(_row("did_plus", ell, truth.delta_plus[ell], est, cov))
    cov = np.abs(res["agg"] - truth.delta) <= res["agg_half"]
    rows.append(_row("delta_plus", -1, truth.delta, res["agg"], cov))
    pl_idx = [j for j in range(len(horizons)) if np.isfinite(res["pl"][0, j])]
    for j in pl_idx:
        rows.append(_row("placebo", horizons[j], 0.0, res["pl"][:, j]))
    report = SimReport(config.to_dict(), pd.DataFrame(rows))
    if config.bootstrap and pl_idx:
        rate, n = _placebo_rejections(design, Y, config, pl_idx, horizons, stats)
        report.placebo_rejection, report.placebo_tests = rate, n
    if config.twfe:
        report.twfe = _twfe_draws(design, Y, config.twfe)
    report.assertions = evaluate_assertions(report, config.assertions)
    return report


def _run_unconditional(config):
    """Redraw the design in every replicate. The truth differs across
    replicates, so the table reports estimation errors: ``truth`` is 0 and
    ``mean`` is the mean of estimate minus that replicate's truth."""
    rows = {}
    for r in range(config.replications):
        design = Design(config, r)
        Y, _ = design.outcomes(_rng(config.seed, 1, r))
        stats = design_stats(design.panel(Y))
        arm = _engine.ArmDesign.from_stats(design.panel(Y), stats)
        hz = list(range(stats.l_u + 1))
        a = _engine.event_study_arrays(Y, design.N, arm, hz)
        for j, ell in enumerate(hz):
            if ell in design.truth.delta_plus and np.isfinite(a.did[j]):
                rows.setdefault(("did_plus", ell), []).append(a.did[j] - design.truth.delta_plus[ell])
            if np.isfinite(a.placebo[j]):
                rows.setdefault(("placebo", ell), []).append(a.placebo[j])
        rows.setdefault(("delta_plus", -1), []).append(float(a.aggregate()) - design.truth.delta)
    table = pd.DataFrame([_row(k[0], k[1], 0.0, v) for k, v in sorted(rows.items())])
    report = SimReport(config.to_dict(), table)
    report.assertions = evaluate_assertions(report, config.assertions)
    return report


# ------------------------------------------------------------- assertions

def evaluate_assertions(report: SimReport, specs):
    """Check acceptance-style conditions embedded in a config.

    Supported ``check`` values: ``bias_within_se``, ``placebo_mean_within_se``,
    ``coverage_at_least``, ``placebo_rejection_between``,
    ``placebo_sign_opposite_bias`` and ``placebo_nonzero``.
    """
    out = []
    t = report.table
    for spec in specs:
        check = spec.get("check")
        k = spec.get("n_se", 3.0)
        if check == "bias_within_se":
            sub = t[t.estimand.isin(["did_plus", "delta_plus"])]
            worst = float(np.nanmax(np.abs(sub.bias_z)))
            ok, detail = worst <= k, f"max |bias|/se = {worst:.3f} (limit {k})"
        elif check == "placebo_mean_within_se":
            sub = t[t.estimand == "placebo"]
            worst = float(np.nanmax(np.abs(sub["mean"] / sub.mc_se))) if len(sub) else 0.0
            ok, detail = worst <= k, f"max |placebo mean|/se = {worst:.3f} (limit {k})"
        elif check == "placebo_nonzero":
            sub = t[t.estimand == "placebo"]
            zs = np.abs(sub["mean"] / sub.mc_se)
            ok = bool(len(sub)) and bool((zs > k).all())
            detail = f"min |placebo mean|/se = {float(zs.min()) if len(sub) else math.nan:.3f}"
        elif check == "coverage_at_least":
            sub = t[t.estimand.isin(["did_plus", "delta_plus"])]
            worst = float(sub.coverage.min())
            ok, detail = worst >= spec["value"], f"min coverage {worst:.4f}"
        elif check == "placebo_rejection_between":
            r = report.placebo_rejection
            lo, hi = spec["low"], spec["high"]
            ok = r is not None and lo <= r <= hi
            detail = f"rejection rate {r}"
        elif check == "placebo_sign_opposite_bias":
            pl = t[t.estimand == "placebo"].set_index("horizon")
            did = t[t.estimand == "did_plus"].set_index("horizon")
            common = pl.index.intersection(did.index)
            signs = [np.sign(pl.loc[h, "mean"]) == -np.sign(did.loc[h, "bias"]) for h in common]
            ok = bool(common.size) and all(signs)
            detail = f"{sum(signs)} of {len(signs)} horizons with opposite signs"
        else:
            raise ConfigError(f"unknown assertion check {check!r}")
        out.append({"check": check, "passed": bool(ok), "detail": detail})
    return out


# ------------------------------------------------------------------ oracle

def oracle_group_time_att(panel: Panel) -> dict:
    """Brute-force cohort-by-period DIDs with not-yet-treated controls.

    For every cohort (set of groups sharing a switch date ``F``) and period
    ``t = F + l``, compare the cohort's mass-weighted mean outcome change
    since ``F - 1`` with the same change in the pool of groups not treated by
    ``t``. Cohort effects at horizon ``l`` are averaged with their cell-size
    masses. Defined for binary staggered designs without discounting.
    """
    D = panel.treatment
    if not np.isin(D, (0.0, 1.0)).all() or np.any(np.diff(D, axis=1) < 0):
        raise DesignMismatchError("oracle needs a binary staggered treatment")
    if panel.discount != 1.0:
        raise DesignMismatchError("oracle is defined without discounting")
    frame = panel.to_frame()
    T = panel.n_periods
    pidx = {p: i + 1 for i, p in enumerate(panel.periods)}
    frame["t"] = frame["time"].map(pidx)
    treated = frame[frame.treatment == 1].groupby("group")["t"].min()
    frame["F"] = frame["group"].map(treated).fillna(T + 1).astype(int)
    frame = frame[frame.groupby("group")["treatment"].transform("first") == 0]
    wide_y = frame.pivot(index="group", columns="t", values="outcome")
    wide_n = frame.pivot(index="group", columns="t", values="weight")
    F = frame.groupby("group")["F"].first()
    t_u = int(F.max()) - 1
    out = {}
    for ell in range(t_u - int(F.min()) + 1):
        num = mass = 0.0
        for f, members in F.groupby(F):
            t = f + ell
            if f > t_u - ell:
                continue
            ids = members.index
            pool = F.index[F > t]
            chg = wide_y.loc[ids, t] - wide_y.loc[ids, f - 1]
            n_c = wide_n.loc[ids, t]
            pool_chg = wide_y.loc[pool, t] - wide_y.loc[pool, f - 1]
            n_p = wide_n.loc[pool, t]
            att = (n_c * chg).sum() / n_c.sum() - (n_p * pool_chg).sum() / n_p.sum()
            num += n_c.sum() * att
            mass += n_c.sum()
        if mass > 0:
            out[ell] = num / mass
    return out


def bundled_config(name: str) -> Path:
    """Path of a config shipped with the package."""
    path = Path(__file__).parent / "configs" / f"{name}.json"
    if not path.exists():
        raise ConfigError(f"no bundled config named {name!r}")
    return path


__all__ = ["Design", "SimConfig", "SimDraw", "SimReport", "Truth", "apply_effects",
           "bundled_config", "check_no_anticipation", "draw_treatment", "effect_kernel",
           "evaluate_assertions", "generate", "oracle_group_time_att", "run_monte_carlo",
           "true_effects"]
