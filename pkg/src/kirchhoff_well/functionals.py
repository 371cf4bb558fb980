"""Energy, Nehari functional and friends for ``-M(||∇u||²)Δu = |u|^{q-1}u``, ``M(s) = a + b s``.

Throughout, ``A = ||∇u||_2^2`` and ``B = ||u||_{q+1}^{q+1}``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .discretization import (
    Field,
    Mesh,
    grad_norm_sq,
    inner,
    lp_power_sum,
    neg_laplacian_values,
    solve_poisson,
)
from .errors import DegenerateInputError, DomainError, NonConvergenceWarning, NumericalError

logger = logging.getLogger(__name__)

NEHARI_RTOL = 1e-8
FIBER_RTOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Coefficients ``a, b`` of ``M(s) = a + b s``, exponent ``q`` and dimension ``n``.

    ``q = 3`` is accepted here but only usable once :func:`validate_params` has
    checked ``b < S**4`` against a Sobolev constant.
    """

    a: float = 1.0
    b: float = 1.0
    q: float = 5.0
    n: int = 1

    def __post_init__(self):
        problems = params_problems(self.a, self.b, self.q, self.n)
        if problems:
            raise DomainError("; ".join(problems))

    def M(self, s: float) -> float:
        return self.a + self.b * s

    @property
    def critical_exponent_note(self) -> str:
        # 2* = +inf for n = 1, 2, so q < 2* - 1 holds for every finite q.
        return "q < 2*-1 is vacuous for n in {1, 2}"


def params_problems(a, b, q, n) -> list[str]:
    """Every violated invariant of ``ModelParams``, as messages."""
    out = []
    if not (a > 0):
        out.append(f"model.a must be > 0, got {a}")
    if not (b > 0):
        out.append(f"model.b must be > 0, got {b}")
    if not (q >= 3):
        out.append(f"model.q must satisfy q > 3 (or q = 3 with b < S^4), got {q}")
    if n not in (1, 2):
        out.append(f"model.n must be 1 or 2, got {n}")
    return out


def validate_params(p: ModelParams, S: float | None = None) -> None:
    """Gate the borderline case ``q = 3``: requires ``b < S^4``."""
    if p.q > 3:
        return
    if S is None:
        raise DomainError("q = 3 requires a Sobolev constant S to check b < S^4")
    if not p.b < S**4:
        raise DomainError(f"q = 3 requires b < S^4 = {S**4:.6g}, got b = {p.b}")


def _AB(u: Field, p: ModelParams) -> tuple[float, float]:
    return grad_norm_sq(u), lp_power_sum(u, p.q + 1)


def _reaction(u: Field, p: ModelParams) -> np.ndarray:
    return np.abs(u.values) ** (p.q - 1) * u.values


def energy_J(u: Field, p: ModelParams) -> float:
    A, B = _AB(u, p)
    return 0.5 * p.a * A + 0.25 * p.b * A * A - B / (p.q + 1)


def nehari_I(u: Field, p: ModelParams) -> float:
    A, B = _AB(u, p)
    return p.a * A + p.b * A * A - B


def kirchhoff_energy_E(u: Field, p: ModelParams) -> float:
    A = grad_norm_sq(u)
    return 0.5 * p.a * A + 0.25 * p.b * A * A


def j_prime_residual(u: Field, p: ModelParams) -> Field:
    """L2 representative of ``J'(u)``: ``(a + bA)(-Δu) - |u|^{q-1}u``."""
    A = grad_norm_sq(u)
    return Field(u.mesh, p.M(A) * neg_laplacian_values(u) - _reaction(u, p))


def i_prime_pairing(u: Field, v: Field, p: ModelParams) -> float:
    """``<I'(u), v>``."""
    A = grad_norm_sq(u)
    lap = Field(u.mesh, neg_laplacian_values(u))
    return (2 * p.a + 4 * p.b * A) * inner(lap, v) - (p.q + 1) * inner(Field(u.mesh, _reaction(u, p)), v)


def e_prime_pairing(u: Field, w: Field, p: ModelParams) -> float:
    """``<E'(u), w> = (a + bA)(-Δu, w)``."""
    return p.M(grad_norm_sq(u)) * inner(Field(u.mesh, neg_laplacian_values(u)), w)


def decomposition_check(u: Field, p: ModelParams) -> tuple[float, float]:
    """The two rearrangements of J through I; each should reproduce ``energy_J``."""
    A, B = _AB(u, p)
    q = p.q
    I = p.a * A + p.b * A * A - B
    first = p.a * (q - 1) / (2 * (q + 1)) * A + p.b * (q - 3) / (4 * (q + 1)) * A * A + I / (q + 1)
    second = p.a / 4 * A + (q - 3) / (4 * (q + 1)) * B + I / 4
    return first, second


def nehari_scale(A: float, B: float, p: ModelParams) -> float:
    return max(p.a * A, B)


@dataclass(frozen=True)
class FiberResult:
    lambda_star: float
    iterations: int
    bracket: tuple[float, float]


def _fiber_g(lam, A, B, p: ModelParams):
    """``g(λ)/λ²``: same sign as ``g`` for ``λ > 0`` and no overflow before ``λ`` itself does."""
    return p.a * A / lam**2 + p.b * A**2 - lam ** (p.q - 3) * B


def lambda_star_batch(A: np.ndarray, B: np.ndarray, p: ModelParams, rtol: float = FIBER_RTOL, max_iter: int = 400):
    """Vectorized positive roots of ``g(λ) = aA + bλ²A² - λ^{q-1}B``.

    Returns ``(lam, iterations, lo, hi)``. Entries with no sign change (possible
    only when ``q = 3`` and ``B <= bA²``) come back as NaN.
    """
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _lambda_star_batch(np.asarray(A, dtype=float), np.asarray(B, dtype=float), p, rtol, max_iter)


def _lambda_star_batch(A, B, p: ModelParams, rtol, max_iter):
    lo = np.ones_like(A)
    hi = np.ones_like(A)
    g1 = _fiber_g(1.0, A, B, p)
    up = g1 > 0
    ok = np.ones_like(A, dtype=bool)
    for _ in range(2100):
        gh = _fiber_g(hi, A, B, p)
        grow = up & (gh > 0) & np.isfinite(hi)
        gl = _fiber_g(lo, A, B, p)
        shrink = ~up & (gl <= 0) & (lo > 0)
        if not (grow.any() or shrink.any()):
            break
        hi = np.where(grow, 2 * hi, hi)
        lo = np.where(grow, hi / 2, lo)
        lo = np.where(shrink, lo / 2, lo)
        hi = np.where(shrink, 2 * lo, hi)
    ok &= (_fiber_g(lo, A, B, p) > 0) & (_fiber_g(hi, A, B, p) <= 0) & np.isfinite(hi) & (lo > 0)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        gm = _fiber_g(mid, A, B, p)
        pos = gm > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
        if np.all((hi - lo) <= rtol * hi):
            break
    lam = 0.5 * (lo + hi)
    # Newton polish, kept inside the bracket
    q = p.q
    for _ in range(3):
        g = _fiber_g(lam, A, B, p)
        dg = -2 * p.a * A / lam**3 - (q - 3) * lam ** (q - 4) * B
        with np.errstate(divide="ignore", invalid="ignore"):
            nxt = lam - g / dg
        inside = np.isfinite(nxt) & (nxt >= lo) & (nxt <= hi)
        lam = np.where(inside, nxt, lam)
    lam = np.where(ok, lam, np.nan)
    return lam, iterations, lo, hi


def fiber_lambda_star(A: float, B: float, p: ModelParams) -> FiberResult:
    """Unique ``λ* > 0`` with ``I(λ* u) = 0`` given ``A = ||∇u||²``, ``B = ||u||_{q+1}^{q+1}``."""
    if not (A > 0 and B > 0):
        raise DegenerateInputError(f"fiber map needs A > 0 and B > 0, got A={A}, B={B}")
    lam, its, lo, hi = lambda_star_batch(np.array([A]), np.array([B]), p)
    if not np.isfinite(lam[0]):
        if p.q > 3:
            msg = "fiber root outside floating-point range (q close to 3 with b A^2 >> B)"
        else:
            msg = "no positive root of the fiber equation (q = 3 needs B > b A^2)"
        raise NumericalError(msg, {"A": A, "B": B})
    return FiberResult(float(lam[0]), its, (float(lo[0]), float(hi[0])))


def nehari_project(u: Field, p: ModelParams) -> Field:
    A, B = _AB(u, p)
    if not (A > 0 and B > 0):
        raise DegenerateInputError("cannot project the zero field onto the Nehari manifold")
    return fiber_lambda_star(A, B, p).lambda_star * u


def on_nehari(u: Field, p: ModelParams, rtol: float = NEHARI_RTOL) -> bool:
    A, B = _AB(u, p)
    return A > 0 and abs(p.a * A + p.b * A * A - B) <= rtol * nehari_scale(A, B, p)


def d0_lower_bound(p: ModelParams, S: float) -> float:
    """Explicit lower bound for the well depth in terms of ``a, q`` and the embedding constant ``S``."""
    if not S > 0:
        raise DomainError(f"S must be positive, got {S}")
    q = p.q
    return p.a * (q - 1) / (2 * (q + 1)) * (p.a / S ** (q + 1)) ** (2 / (q - 1))


# ---------------------------------------------------------------------------
# Scale-invariant ratio maximization, shared by the Sobolev and
# Gagliardo-Nirenberg estimators.


@dataclass
class AscentResult:
    field: Field
    log_ratio: float
    iterations: int
    converged: bool


def maximize_log_ratio(objective, u0: Field, max_iter: int = 500, gtol: float = 1e-10) -> AscentResult:
    """Sobolev-gradient ascent on a scale-invariant ``log R(u)``.

    ``objective(u)`` returns ``(value, g)`` with ``g`` the L2 representative of the
    derivative. The ascent direction is ``(-Δ)^{-1} g``; iterates are renormalized
    to ``||∇u|| = 1`` since ``R`` is 0-homogeneous.
    """
    u = u0 / math.sqrt(grad_norm_sq(u0))
    f, g = objective(u)
    for it in range(1, max_iter + 1):
        d = solve_poisson(g)
        slope = inner(g, d)
        if slope <= gtol:
            return AscentResult(u, f, it, True)
        eta = 1.0
        while True:
            cand = u + eta * d
            cand = cand / math.sqrt(grad_norm_sq(cand))
            fc, gc = objective(cand)
            if fc >= f + 1e-4 * eta * slope:
                break
            eta *= 0.5
            if eta < 1e-14:
                return AscentResult(u, f, it, True)
        u, f, g = cand, fc, gc
    return AscentResult(u, f, max_iter, False)


def sobolev_objective(q: float):
    """``log(||w||_{q+1} / ||∇w||_2)`` and its L2 gradient."""

    def obj(w: Field):
        A = grad_norm_sq(w)
        B = lp_power_sum(w, q + 1)
        val = math.log(B) / (q + 1) - 0.5 * math.log(A)
        g = np.abs(w.values) ** (q - 1) * w.values / B - neg_laplacian_values(w) / A
        return val, Field(w.mesh, g)

    return obj


@dataclass(frozen=True)
class SobolevEstimate:
    """Best ratio found, with the per-start log."""

    S: float
    start_values: tuple[float, ...]
    iterations: tuple[int, ...]
    converged: tuple[bool, ...]
    best_field: Field = field(repr=False)

    @property
    def spread(self) -> float:
        return (max(self.start_values) - min(self.start_values)) / self.S


def sobolev_search(
    mesh: Mesh, q: float, starts: int = 8, seed: int = 0, max_iter: int = 500, gtol: float = 1e-12
) -> SobolevEstimate:
    """Estimate ``S = sup ||w||_{q+1} / ||∇w||_2`` by multi-start Sobolev-gradient ascent."""
    from .sampling import random_direction

    if q + 1 < 2:
        raise DomainError(f"need q + 1 >= 2, got {q + 1}")
    obj = sobolev_objective(q)
    children = np.random.SeedSequence(seed).spawn(starts)
    results = []
    for k, ss in enumerate(children):
        w0 = random_direction(mesh, np.random.default_rng(ss), family="sine" if k == 0 else None)
        results.append(maximize_log_ratio(obj, w0, max_iter=max_iter, gtol=gtol))
    vals = [math.exp(r.log_ratio) for r in results]
    best = int(np.argmax(vals))
    if not any(r.converged for r in results):
        warnings.warn(f"Sobolev search hit max_iter={max_iter}; returning best so far", NonConvergenceWarning)
    logger.debug("Sobolev starts: %s", vals)
    return SobolevEstimate(
        S=vals[best],
        start_values=tuple(vals),
        iterations=tuple(r.iterations for r in results),
        converged=tuple(r.converged for r in results),
        best_field=results[best].field,
    )


def sobolev_constant(mesh: Mesh, q: float, starts: int = 8, seed: int = 0, **kw) -> float:
    return sobolev_search(mesh, q, starts=starts, seed=seed, **kw).S


def sobolev_ratio(w: Field, q: float) -> float:
    """``||w||_{q+1} / ||∇w||_2`` for one field: a certified lower bound on S."""
    return lp_power_sum(w, q + 1) ** (1 / (q + 1)) / math.sqrt(grad_norm_sq(w))
