"""Vectorised event-study computations.

Every function here broadcasts over leading batch axes of the outcome and
of the cell-size arrays. Batching over outcomes serves Monte Carlo runs with
a fixed design; batching over cell sizes serves the cluster bootstrap, where
a resample of groups is the same panel with cell sizes multiplied by the
number of times each group was drawn (groups drawn zero times drop out).
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class ArmDesign:
    """Design arrays of one arm, computed from the (possibly mirrored)
    treatment matrix: first-switch dates, membership and eligibility."""

    D: np.ndarray
    F: np.ndarray
    arm: np.ndarray
    eligible: np.ndarray
    beta: float

    @property
    def n_groups(self):
        return self.D.shape[0]

    @property
    def n_periods(self):
        return self.D.shape[1]

    @classmethod
    def from_stats(cls, panel, stats):
        return cls(panel.treatment, np.asarray(stats.F), np.asarray(stats.untreated),
                   np.asarray(stats.eligible), panel.discount)


@dataclass
class EventStudyArrays:
    horizons: np.ndarray
    did: np.ndarray          # (..., H)
    first_stage: np.ndarray  # (..., H)
    mass: np.ndarray         # (..., H)
    n_groups: np.ndarray     # (..., H)
    placebo: np.ndarray      # (..., H), NaN where not computable
    placebo_mass: np.ndarray
    placebo_n_groups: np.ndarray
    did_g: np.ndarray = None  # (..., H, G) when requested
    t_u: np.ndarray = None

    def aggregate(self, upto=None):
        """Ratio of mass-weighted reduced-form to first-stage effects."""
        keep = self.mass > 0
        if upto is not None:
            keep = keep & (self.horizons <= upto)
        num = np.where(keep, self.mass * np.nan_to_num(self.did), 0.0).sum(-1)
        den = np.where(keep, self.mass * np.nan_to_num(self.first_stage), 0.0).sum(-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(den != 0, num / np.where(den != 0, den, 1.0), np.nan)


def not_yet_switched(design):
    T = design.n_periods
    t = np.arange(1, T + 1)
    return design.arm[:, None] & (design.F[:, None] > t[None, :])


def last_control_period(N, design):
    """``T_u`` per batch element; -1 if no arm group is present."""
    present = N[..., :, 0] > 0
    Fm = np.where(design.arm & present, design.F, 0)
    return Fm.max(axis=-1) - 1


def control_weights(N, design):
    """``N_{g',t} / N^u_t`` for not-yet-switched arm groups, else 0."""
    nyt = not_yet_switched(design)
    masked = N * nyt
    nu = masked.sum(axis=-2, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(nu > 0, masked / np.where(nu > 0, nu, 1.0), 0.0)


def _long_diff_dids(Y, W, ct, cb):
    """Per-group DID of periods ``cb -> ct`` (0-based, one pair per group)
    against the control mixture ``W[..., :, ct]``."""
    G = Y.shape[-2]
    rows = np.arange(G)
    own = Y[..., rows, ct] - Y[..., rows, cb]
    yd = Y[..., :, ct] - Y[..., :, cb]
    wg = W[..., :, ct]
    ctrl = np.einsum("...hg,...hg->...g", wg, yd)
    return own - ctrl


def event_study_arrays(Y, N, design, horizons=None, *, effects=True,
                       placebos=True, keep_group_dids=False):
    """Reduced-form, first-stage and placebo estimates for every horizon.

    Parameters
    ----------
    Y, N : ndarray of shape (..., G, T)
        Outcomes and cell sizes; leading axes broadcast.
    design : ArmDesign
    horizons : sequence of int, optional
        Defaults to ``0..T-2``.
    """
    Y = np.asarray(Y, dtype=float)
    N = np.asarray(N, dtype=float)
    G, T = design.n_groups, design.n_periods
    F, D = design.F, design.D
    rows = np.arange(G)
    if horizons is None:
        horizons = np.arange(T - 1)
    horizons = np.asarray(horizons, dtype=int)
    batch = np.broadcast_shapes(Y.shape[:-2], N.shape[:-2])
    nbatch = N.shape[:-2]
    H = len(horizons)

    t_u = last_control_period(N, design)
    present = N[..., :, 0] > 0
    W = control_weights(N, design)
    cb = np.clip(F - 2, 0, T - 1)

    out = {k: np.full(batch + (H,), np.nan) for k in ("did", "fs", "pl")}
    for k in ("mass", "ng", "plm", "plng"):
        out[k] = np.zeros(nbatch + (H,))
    did_g = np.full(batch + (H, G), np.nan) if keep_group_dids else None

    for j, ell in enumerate(horizons):
        tgt = F + ell
        ct = np.clip(tgt - 1, 0, T - 1)
        inset = (design.arm & present & (F <= t_u[..., None] - ell)
                 & design.eligible[:, min(ell, T - 1)])
        if not inset.any():
            continue
        omega = np.where(inset, design.beta ** tgt * N[..., rows, ct], 0.0)
        mass = omega.sum(-1)
        out["mass"][..., j] = mass
        out["ng"][..., j] = inset.sum(-1)
        ok = mass > 0
        safe = np.where(ok, mass, 1.0)
        if effects:
            dg = _long_diff_dids(Y, W, ct, cb)
            num = (omega * np.where(inset, dg, 0.0)).sum(-1)
            out["did"][..., j] = np.where(ok, num / safe, np.nan)
            out["fs"][..., j] = np.broadcast_to(
                np.where(ok, (omega * D[rows, ct]).sum(-1) / safe, np.nan), batch)
            if keep_group_dids:
                did_g[..., j, :] = np.where(inset, dg, np.nan)
        if placebos:
            plset = inset & (F >= ell + 3)
            if plset.any():
                cp = np.clip(F - ell - 3, 0, T - 1)
                own = Y[..., rows, cp] - Y[..., rows, cb]
                yd = Y[..., :, cp] - Y[..., :, cb]
                ctrl = np.einsum("...hg,...hg->...g", W[..., :, ct], yd)
                pg = own - ctrl
                om = np.where(plset, omega, 0.0)
                pm = om.sum(-1)
                out["plm"][..., j] = pm
                out["plng"][..., j] = plset.sum(-1)
                pok = pm > 0
                val = (om * np.where(plset, pg, 0.0)).sum(-1) / np.where(pok, pm, 1.0)
                out["pl"][..., j] = np.where(pok, val, np.nan)

    return EventStudyArrays(
        horizons=horizons, did=out["did"], first_stage=out["fs"],
        mass=np.broadcast_to(out["mass"], batch + (H,)),
        n_groups=np.broadcast_to(out["ng"], batch + (H,)),
        placebo=out["pl"], placebo_mass=np.broadcast_to(out["plm"], batch + (H,)),
        placebo_n_groups=np.broadcast_to(out["plng"], batch + (H,)),
        did_g=did_g, t_u=t_u)


def resample_multiplicities(n_groups, n_replicates, seed):
    """Group draw counts for each bootstrap replicate.

    Replicate ``b`` uses its own generator seeded from ``(seed, b)``, so the
    draws do not depend on how replicates are scheduled.
    """
    idx = resample_indices(n_groups, n_replicates, seed)
    return np.array([np.bincount(i, minlength=n_groups) for i in idx],
                    dtype=np.int64).reshape(n_replicates, n_groups)


def resample_indices(n_groups, n_replicates, seed):
    ss = np.random.SeedSequence(seed)
    return [np.sort(np.random.default_rng(child).integers(0, n_groups, n_groups))
            for child in ss.spawn(n_replicates)]
