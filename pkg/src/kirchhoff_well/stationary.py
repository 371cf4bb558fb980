"""Ground states of the stationary problem and late-time analysis of trajectories."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .discretization import (
    Field,
    Mesh,
    first_eigenvalue,
    grad_norm_sq,
    h_minus1_norm,
    inner,
    solve_poisson,
)
from .errors import MeshMismatchError, NumericalError
from .functionals import (
    ModelParams,
    energy_J,
    i_prime_pairing,
    j_prime_residual,
    nehari_I,
    nehari_project,
)
from .sampling import random_direction, spawn_rngs

logger = logging.getLogger(__name__)

ROUNDOFF = 1e-13


@dataclass(frozen=True)
class GroundStateConfig:
    starts: int = 8
    seed: int = 0
    tol: float = 1e-6
    max_iter: int = 2000
    armijo: float = 1e-4


@dataclass(frozen=True)
class StartRecord:
    start_id: int
    J: float
    residual: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class GroundStateReport:
    field: Field = field(repr=False)
    J: float
    abs_I: float
    residual: float
    iterations: int
    start_id: int
    starts: tuple[StartRecord, ...] = ()

    @property
    def converged_J(self) -> list[float]:
        return [s.J for s in self.starts if s.converged]


def stationary_residual(u: Field, p: ModelParams) -> float:
    """``||J'(u)||_{H^{-1}}``; zero exactly at discrete solutions of the stationary problem."""
    return h_minus1_norm(j_prime_residual(u, p))


def descent_step(u: Field, p: ModelParams, armijo: float = 1e-4):
    """One projected Sobolev-gradient step on J restricted to the Nehari manifold.

    The direction is ``(-Δ)^{-1} J'(u) / M(A)``; the step is backtracked from 1 by
    halving until the Armijo condition on J holds. Once the predicted decrease is
    below the rounding level of J, the full step is accepted if it lowers the
    residual instead. Returns ``(new_u, new_J, residual_before, eta)``;
    ``eta == 0`` means no admissible step was found.
    """
    r = j_prime_residual(u, p)
    phi = solve_poisson(r)
    res = math.sqrt(max(inner(r, phi), 0.0))
    J0 = energy_J(u, p)
    d = phi / p.M(grad_norm_sq(u))
    slope = inner(r, d)
    if slope <= ROUNDOFF * max(1.0, abs(J0)):
        try:
            cand = nehari_project(u - d, p)
        except (NumericalError, ValueError):
            return u, J0, res, 0.0
        Jc = energy_J(cand, p)
        if Jc <= J0 + ROUNDOFF * max(1.0, abs(J0)) and stationary_residual(cand, p) < res:
            return cand, Jc, res, 1.0
        return u, J0, res, 0.0
    eta = 1.0
    while eta > 1e-12:
        try:
            cand = nehari_project(u - eta * d, p)
        except (NumericalError, ValueError):
            cand = None
        if cand is not None:
            Jc = energy_J(cand, p)
            if Jc <= J0 - armijo * eta * slope:
                return cand, Jc, res, eta
        eta *= 0.5
    return u, J0, res, 0.0


def _descend(u: Field, p: ModelParams, cfg: GroundStateConfig):
    u = nehari_project(u, p)
    J = energy_J(u, p)
    for it in range(1, cfg.max_iter + 1):
        new, Jn, res, eta = descent_step(u, p, cfg.armijo)
        if res <= cfg.tol:
            return u, J, res, it, True
        if eta == 0.0:
            # no further decrease resolvable in floating point
            return u, J, stationary_residual(u, p), it, res <= cfg.tol
        u, J = new, Jn
    res = stationary_residual(u, p)
    return u, J, res, cfg.max_iter, res <= cfg.tol


def ground_state(mesh: Mesh, p: ModelParams, cfg: GroundStateConfig | None = None, starts_from=None) -> GroundStateReport:
    """Minimize J over the Nehari manifold from several random starts.

    ``starts_from`` optionally supplies the initial fields instead of random ones.
    Raises :class:`NumericalError` if no start reaches the residual tolerance.
    """
    cfg = cfg or GroundStateConfig()
    if starts_from is None:
        starts_from = [random_direction(mesh, rng) for rng in spawn_rngs(cfg.seed, cfg.starts)]
    records, fields = [], []
    for k, u0 in enumerate(starts_from):
        if u0.mesh != mesh:
            raise MeshMismatchError("start field lives on another mesh")
        u, J, res, its, ok = _descend(u0, p, cfg)
        logger.debug("start %d: J=%.12g res=%.3g its=%d", k, J, res, its)
        records.append(StartRecord(k, J, res, its, ok))
        fields.append(u)
    good = [r for r in records if r.converged]
    if not good:
        raise NumericalError(
            "no ground-state start converged",
            {"starts": [(r.start_id, r.J, r.residual, r.iterations) for r in records]},
        )
    best = min(good, key=lambda r: r.J)
    v0 = fields[best.start_id]
    return GroundStateReport(
        field=v0,
        J=best.J,
        abs_I=abs(nehari_I(v0, p)),
        residual=best.residual,
        iterations=best.iterations,
        start_id=best.start_id,
        starts=tuple(records),
    )


def lagrange_consistency_check(v0: Field, p: ModelParams) -> tuple[float, float]:
    """``(<I'(v0), v0>, I(v0))``; the first must be negative for the multiplier to vanish."""
    return i_prime_pairing(v0, v0, p), nehari_I(v0, p)


@dataclass(frozen=True)
class OmegaLimitReport:
    times: np.ndarray
    residuals: np.ndarray
    J: np.ndarray
    ut_norms: np.ndarray
    limit: Field = field(repr=False)
    limit_kind: str
    distance: float
    J_limit: float
    residual_bounds: np.ndarray

    @property
    def residual_bound_ratio(self) -> float:
        """max over selected times of residual / ((1/√λ1)·||δu/δt||); 1 + slack allowed."""
        mask = self.residual_bounds > 0
        if not mask.any():
            return 0.0
        return float(np.max(self.residuals[mask] / self.residual_bounds[mask]))


@dataclass(frozen=True)
class OmegaLimitConfig:
    tol: float = 1e-6
    zero_tol: float = 1e-6
    polish: GroundStateConfig = GroundStateConfig(starts=1)


def select_times(ut_norms: np.ndarray) -> np.ndarray:
    """Indices where ``||δu/δt||`` reaches a new running minimum (record lows)."""
    idx, best = [], math.inf
    for k, v in enumerate(ut_norms):
        if v < best:
            idx.append(k)
            best = v
    return np.array(idx, dtype=int)


def omega_limit_analysis(traj, p: ModelParams, cfg: OmegaLimitConfig | None = None) -> OmegaLimitReport:
    """Late-time limit candidate of a global trajectory and its stationarity evidence."""
    cfg = cfg or OmegaLimitConfig()
    if not traj.snapshots:
        raise MeshMismatchError("trajectory carries no snapshot fields")
    mesh = traj.mesh
    snap_t = np.array([t for t, _ in traj.snapshots])
    # ut norm belonging to each snapshot time (backward difference of the step ending there)
    row = np.searchsorted(traj.times, snap_t)
    ut = traj.ut_norm[row]
    # t = 0 has no time derivative yet
    keep = snap_t > 0
    snap_idx = np.nonzero(keep)[0]
    if len(snap_idx) == 0:
        snap_idx = np.array([0])
        ut_sel = np.zeros(1)
    else:
        ut_sel = ut[snap_idx]
    chosen = snap_idx[select_times(ut_sel)] if len(snap_idx) else snap_idx
    fields = [traj.snapshots[i][1] for i in chosen]
    residuals = np.array([stationary_residual(u, p) for u in fields])
    Js = np.array([energy_J(u, p) for u in fields])
    uts = ut[chosen]
    lam1 = first_eigenvalue(mesh)
    bounds = uts / math.sqrt(lam1)

    final = traj.snapshots[-1][1]
    if final.is_zero() or math.sqrt(grad_norm_sq(final)) <= cfg.zero_tol:
        limit, kind = mesh.zeros(), "zero"
    elif stationary_residual(final, p) <= cfg.tol:
        limit, kind = final, "final-snapshot"
    else:
        try:
            gs = ground_state(mesh, p, cfg.polish, starts_from=[final])
            limit, kind = gs.field, "polished"
        except NumericalError:
            limit, kind = final, "unpolished"
    distance = math.sqrt(grad_norm_sq(final - limit))
    return OmegaLimitReport(
        times=snap_t[chosen],
        residuals=residuals,
        J=Js,
        ut_norms=uts,
        limit=limit,
        limit_kind=kind,
        distance=distance,
        J_limit=float(traj.J[-1]),
        residual_bounds=bounds,
    )
