"""Time integration of the parabolic Kirchhoff problem and decay/energy diagnostics.

Semi-implicit Euler: the nonlocal coefficient is lagged, diffusion is implicit
and the reaction explicit, so each step is one SPD linear solve

    (I/dt + M(A^n)(-Δ)) u^{n+1} = u^n/dt + |u^n|^{q-1} u^n.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .discretization import (
    Field,
    Mesh,
    grad_norm_sq,
    lp_power_sum,
    solve_shifted,
)
from .errors import DomainError, NumericalError
from .functionals import ModelParams

logger = logging.getLogger(__name__)

OVERFLOW_LEVEL = 1e150
CSV_COLUMNS = ("t", "L2sq", "H1sq", "Lq1", "J", "I", "H", "D")


class Scheme(str, enum.Enum):
    SEMI_IMPLICIT = "semi-implicit"
    FULLY_IMPLICIT = "fully-implicit"


class Outcome(str, enum.Enum):
    GLOBAL_DECAY = "GlobalDecay"
    BLOW_UP = "BlowUp"
    REACHED_T_END = "ReachedTEnd"


@dataclass(frozen=True)
class TimeStepConfig:
    dt: float = 1e-4
    t_end: float = 1.0
    scheme: Scheme = Scheme.SEMI_IMPLICIT
    blowup_cap: float = 1e6
    dt_min: float = 1e-12
    adaptive: bool = False
    snapshot_stride: int = 100
    decay_ratio: float = 1e-14
    step_tol: float = 1e-8
    max_steps: int = 10_000_000

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        problems = timestep_problems(self.dt, self.t_end, self.blowup_cap, self.dt_min, self.snapshot_stride)
        if problems:
            raise DomainError("; ".join(problems))


def timestep_problems(dt, t_end, blowup_cap, dt_min, snapshot_stride) -> list[str]:
    out = []
    if not dt > 0:
        out.append(f"time.dt must be > 0, got {dt}")
    if not t_end > 0:
        out.append(f"time.t_end must be > 0, got {t_end}")
    if not blowup_cap > 0:
        out.append(f"time.blowup_cap must be > 0, got {blowup_cap}")
    if not (dt_min > 0 and dt_min <= max(dt, 0)):
        out.append(f"time.dt_min must satisfy 0 < dt_min <= dt, got {dt_min}")
    if snapshot_stride < 1:
        out.append(f"time.snapshot_stride must be >= 1, got {snapshot_stride}")
    return out


class StepFailure(NumericalError):
    """A single time step could not be completed."""


def _reaction(vals: np.ndarray, q: float) -> np.ndarray:
    return np.abs(vals) ** (q - 1) * vals


def _solve(rhs: Field, shift: float, coef: float) -> Field:
    if not math.isfinite(coef) or np.max(np.abs(rhs.values)) > OVERFLOW_LEVEL:
        raise StepFailure("state diverged beyond floating-point range", {"coef": coef})
    return solve_shifted(rhs, shift, coef)


def step(
    u: Field,
    dt: float,
    p: ModelParams,
    scheme: Scheme | str = Scheme.SEMI_IMPLICIT,
    *,
    linear_only: bool = False,
    fp_tol: float = 1e-10,
    fp_max_iter: int = 50,
) -> Field:
    """Advance one step of size ``dt``.

    ``linear_only`` drops the nonlocal term and the reaction (``M ≡ a``, no source),
    leaving implicit Euler for the heat equation.
    """
    if not dt > 0:
        raise DomainError(f"dt must be > 0, got {dt}")
    scheme = Scheme(scheme)
    with np.errstate(over="raise", invalid="raise"):
        try:
            rhs = u.values / dt if linear_only else u.values / dt + _reaction(u.values, p.q)
        except FloatingPointError as exc:
            raise StepFailure("reaction term overflowed") from exc
    if not np.all(np.isfinite(rhs)):
        raise StepFailure("reaction term overflowed")
    rhs_f = Field(u.mesh, rhs)
    coef = p.a if linear_only else p.M(grad_norm_sq(u))
    new = _solve(rhs_f, 1.0 / dt, coef)
    if scheme is Scheme.SEMI_IMPLICIT or linear_only:
        return new
    A_prev = grad_norm_sq(new)
    for _ in range(fp_max_iter):
        new = _solve(rhs_f, 1.0 / dt, p.M(A_prev))
        A = grad_norm_sq(new)
        if abs(A - A_prev) <= fp_tol * max(A, 1e-300):
            return new
        A_prev = A
    raise StepFailure("fixed-point iteration on the nonlocal coefficient did not converge", {"dt": dt})


@dataclass
class Trajectory:
    """Scalar series at every accepted step plus field snapshots at a stride.

    ``ut_norm[k]`` is ``||(u^k - u^{k-1}) / dt_k||_2`` (zero at ``k = 0``).
    """

    mesh: Mesh
    params: ModelParams
    times: np.ndarray
    L2sq: np.ndarray
    H1sq: np.ndarray
    Lq1: np.ndarray
    J: np.ndarray
    I: np.ndarray
    H: np.ndarray
    D: np.ndarray
    ut_norm: np.ndarray
    outcome: Outcome
    blowup_time: float | None = None
    snapshots: list[tuple[float, Field]] = field(default_factory=list, repr=False)
    rejected_steps: int = 0

    def series(self) -> dict[str, np.ndarray]:
        return {
            "t": self.times,
            "L2sq": self.L2sq,
            "H1sq": self.H1sq,
            "Lq1": self.Lq1,
            "J": self.J,
            "I": self.I,
            "H": self.H,
            "D": self.D,
        }

    @property
    def final(self) -> Field:
        return self.snapshots[-1][1]

    def write_csv(self, path) -> None:
        data = np.column_stack([self.series()[c] for c in CSV_COLUMNS])
        np.savetxt(path, data, fmt="%.16e", delimiter=",", header=",".join(CSV_COLUMNS), comments="")


def _scalars(u: Field, p: ModelParams) -> tuple[float, float, float, float, float]:
    L2 = lp_power_sum(u, 2)
    A = grad_norm_sq(u)
    B = lp_power_sum(u, p.q + 1)
    J = 0.5 * p.a * A + 0.25 * p.b * A * A - B / (p.q + 1)
    I = p.a * A + p.b * A * A - B
    return L2, A, B ** (1 / (p.q + 1)), J, I


def simulate(u0: Field, p: ModelParams, cfg: TimeStepConfig, *, linear_only: bool = False) -> Trajectory:
    """March from ``u0`` until ``t_end``, numerical blow-up, or decay to zero.

    Numerical blow-up is declared when ``||∇u||_2 >= blowup_cap``, when a step
    overflows and cannot be retried, or when adaptive step reduction reaches ``dt_min``.
    """
    rows = []
    snapshots = [(0.0, u0)]
    L2, A, Lq, J, I = _scalars(u0, p)
    rows.append((0.0, L2, A, Lq, J, I, J + L2, 0.0, 0.0))
    A0 = A
    if u0.is_zero():
        return _build(u0.mesh, p, rows, Outcome.GLOBAL_DECAY, None, snapshots, 0)

    t, u, D = 0.0, u0, 0.0
    dt = cfg.dt
    clean = 0
    rejected = 0
    nsteps = 0
    outcome, t_blow = Outcome.REACHED_T_END, None
    eps_t = 1e-12 * cfg.t_end
    while t < cfg.t_end - eps_t:
        if nsteps >= cfg.max_steps:
            raise NumericalError("max_steps exceeded", {"t": t})
        h = min(dt, cfg.t_end - t)
        try:
            new = step(u, h, p, cfg.scheme, linear_only=linear_only)
            with np.errstate(over="ignore", invalid="ignore"):
                L2n, An, Lqn, Jn, In = _scalars(new, p)
            ok = all(math.isfinite(x) for x in (L2n, An, Jn, In))
        except StepFailure:
            ok = False
        except NumericalError:
            if not (cfg.adaptive and h / 2 >= cfg.dt_min):
                raise
            dt = h / 2
            rejected += 1
            clean = 0
            continue
        if not ok:
            if cfg.adaptive and h / 2 >= cfg.dt_min:
                dt = h / 2
                rejected += 1
                clean = 0
                continue
            outcome, t_blow = Outcome.BLOW_UP, t + h
            break
        if cfg.adaptive and Jn > J + cfg.step_tol * max(1.0, abs(J)):
            if h / 2 < cfg.dt_min:
                outcome, t_blow = Outcome.BLOW_UP, t
                break
            dt = h / 2
            rejected += 1
            clean = 0
            continue
        nsteps += 1
        ut = math.sqrt(lp_power_sum(new - u, 2)) / h
        D += h * ut * ut
        t = t + h
        u, J = new, Jn
        rows.append((t, L2n, An, Lqn, Jn, In, Jn + L2n, D, ut))
        if nsteps % cfg.snapshot_stride == 0:
            snapshots.append((t, u))
        if math.sqrt(An) >= cfg.blowup_cap:
            outcome, t_blow = Outcome.BLOW_UP, t
            break
        if An <= cfg.decay_ratio * A0:
            outcome = Outcome.GLOBAL_DECAY
            break
        if cfg.adaptive:
            clean += 1
            if clean >= 20 and dt < cfg.dt:
                dt = min(2 * dt, cfg.dt)
                clean = 0
    if snapshots[-1][0] != rows[-1][0]:
        snapshots.append((rows[-1][0], u))
    if outcome is Outcome.BLOW_UP:
        logger.info("numerical blow-up at t=%.6g", t_blow)
    return _build(u0.mesh, p, rows, outcome, t_blow, snapshots, rejected)


def _build(mesh, p, rows, outcome, t_blow, snapshots, rejected) -> Trajectory:
    arr = np.array(rows, dtype=float)
    return Trajectory(
        mesh=mesh,
        params=p,
        times=arr[:, 0],
        L2sq=arr[:, 1],
        H1sq=arr[:, 2],
        Lq1=arr[:, 3],
        J=arr[:, 4],
        I=arr[:, 5],
        H=arr[:, 6],
        D=arr[:, 7],
        ut_norm=arr[:, 8],
        outcome=outcome,
        blowup_time=t_blow,
        snapshots=snapshots,
        rejected_steps=rejected,
    )


def energy_identity_residual(traj: Trajectory) -> float:
    """``max_t |D(t) + J(u(t)) - J(u0)| / max(1, |J(u0)|)``."""
    J0 = traj.J[0]
    return float(np.max(np.abs(traj.D + traj.J - J0)) / max(1.0, abs(J0)))


def dL2_identity_check(traj: Trajectory) -> float:
    """Max relative mismatch of ``d/dt ||u||_2^2 = -2 I(u)`` at interior times (central differences)."""
    if len(traj.times) < 3:
        return 0.0
    rate = np.gradient(traj.L2sq, traj.times)[1:-1]
    I = traj.I[1:-1]
    return float(np.max(np.abs(rate + 2 * I) / np.maximum(1.0, 2 * np.abs(I))))


@dataclass(frozen=True)
class DecayRates:
    C1: float
    C2: float
    alpha: float
    lambda1: float
    ratio: float


def decay_rates(J0: float, d0: float, p: ModelParams, lambda1: float) -> DecayRates:
    """Explicit exponential rates valid when ``0 <= J(u0) < d0`` and ``I(u0) > 0``."""
    if not (0 <= J0 < d0):
        raise DomainError(f"explicit decay rates need 0 <= J(u0) < d0, got J0={J0}, d0={d0}")
    q, a = p.q, p.a
    r = (J0 / d0) ** ((q - 1) / 2)
    C1 = 2 * a * lambda1 * (1 - r)
    alpha = 8 * (1 - r) / (2 - 4 * r / (q + 1))
    C2 = a * lambda1 * alpha * (q - 1) / (a * lambda1 * (q - 1) + 2 * (q + 1))
    return DecayRates(C1=C1, C2=C2, alpha=alpha, lambda1=lambda1, ratio=r)


@dataclass(frozen=True)
class BoundCheck:
    name: str
    max_relative_violation: float
    passed: bool


@dataclass(frozen=True)
class DecayVerification:
    rates: DecayRates
    checks: tuple[BoundCheck, ...]
    fitted_L2_exponent: float | None
    fitted_H_exponent: float | None
    slack: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def fit_decay_exponent(t: np.ndarray, series: np.ndarray, floor: float = 1e-12) -> float | None:
    """Least-squares slope of ``-log(series)`` over the window where ``series > floor * series[0]``."""
    if len(series) < 2 or series[0] <= 0:
        return None
    mask = series > floor * series[0]
    if mask.sum() < 2:
        return None
    slope = np.polyfit(t[mask], np.log(series[mask]), 1)[0]
    return float(-slope)


def verify_decay(traj: Trajectory, rates: DecayRates, p: ModelParams, S: float, slack: float = 0.02) -> DecayVerification:
    """Check the four exponential bounds at every recorded time.

    The violation of each bound is ``max_t (lhs - bound) / bound``; a check passes
    when it is ``<= slack``.
    """
    q, a = p.q, p.a
    t = traj.times
    J0, L0 = traj.J[0], traj.L2sq[0]
    if J0 < 0:
        raise DomainError("decay verification needs J(u0) >= 0")
    H0 = J0 + L0
    eC1 = np.exp(-rates.C1 * t)
    eC2 = np.exp(-rates.C2 * t)
    K = 2 * (q + 1) / (a * (q - 1))
    pairs = {
        "L2": (traj.L2sq, L0 * eC1),
        "H1": (traj.H1sq, K * H0 * eC2),
        "Lq1": (traj.Lq1**2, S**2 * K * H0 * eC2),
        "H": (traj.H, H0 * eC2),
    }
    checks = []
    for name, (lhs, bound) in pairs.items():
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(bound > 0, (lhs - bound) / bound, np.where(lhs > 0, np.inf, 0.0))
        worst = float(np.max(rel)) if len(rel) else 0.0
        checks.append(BoundCheck(name, worst, worst <= slack))
    return DecayVerification(
        rates=rates,
        checks=tuple(checks),
        fitted_L2_exponent=fit_decay_exponent(t, traj.L2sq),
        fitted_H_exponent=fit_decay_exponent(t, traj.H),
        slack=slack,
    )
