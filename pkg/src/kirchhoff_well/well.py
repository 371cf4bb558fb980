"""Potential-well analysis: depth estimate, state classification and Nehari level-set bounds."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .discretization import Field, Mesh, first_eigenvalue, grad_norm_sq, lp_power_sum, lp_norm
from .errors import DomainError
from .functionals import (
    NEHARI_RTOL,
    ModelParams,
    d0_lower_bound,
    lambda_star_batch,
    maximize_log_ratio,
    sobolev_search,
    validate_params,
)
from .sampling import random_direction, spawn_rngs, sine_mode
from .stationary import GroundStateConfig, GroundStateReport, ground_state
from .discretization import neg_laplacian_values

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WellReport:
    """Well depth estimate relative to this discretization.

    ``d_est`` is the smallest J among converged ground-state starts, so every
    classification that uses it is relative to ``d_est``, not the continuum depth.
    """

    d_est: float
    d0: float
    S: float
    num_starts: int
    best_start_id: int
    start_J: tuple[float, ...]
    ground_state: GroundStateReport = field(repr=False)

    @property
    def spread(self) -> float:
        return (max(self.start_J) - min(self.start_J)) / self.d_est


def well_depth(
    mesh: Mesh,
    p: ModelParams,
    cfg: GroundStateConfig | None = None,
    sobolev_starts: int = 8,
) -> WellReport:
    cfg = cfg or GroundStateConfig()
    S = sobolev_search(mesh, p.q, starts=sobolev_starts, seed=cfg.seed).S
    validate_params(p, S)
    gs = ground_state(mesh, p, cfg)
    conv = tuple(r.J for r in gs.starts if r.converged)
    return WellReport(
        d_est=gs.J,
        d0=d0_lower_bound(p, S),
        S=S,
        num_starts=len(gs.starts),
        best_start_id=gs.start_id,
        start_J=conv,
        ground_state=gs,
    )


class Classification(str, enum.Enum):
    INSIDE_W = "InsideW"
    INSIDE_V = "InsideV"
    ON_NEHARI = "OnNehari"
    ENERGY_ABOVE_D = "EnergyAboveD"
    ZERO = "Zero"


def classify(u: Field, p: ModelParams, d: float, rtol: float = NEHARI_RTOL) -> Classification:
    """Place ``u`` relative to the well of depth ``d`` (sign of I, level of J)."""
    if not d > 0:
        raise DomainError(f"well depth must be positive, got {d}")
    if lp_power_sum(u, 2) == 0:
        return Classification.ZERO
    A = grad_norm_sq(u)
    B = lp_power_sum(u, p.q + 1)
    I = p.a * A + p.b * A * A - B
    J = 0.5 * p.a * A + 0.25 * p.b * A * A - B / (p.q + 1)
    tol = rtol * max(p.a * A, B)
    if abs(I) <= tol and A > 0:
        return Classification.ON_NEHARI
    if I > tol and J < d:
        return Classification.INSIDE_W
    if I < -tol and J < d:
        return Classification.INSIDE_V
    return Classification.ENERGY_ABOVE_D


# ---------------------------------------------------------------------------
# Gagliardo-Nirenberg constant


def gn_exponents(p: ModelParams) -> tuple[float, float]:
    """``(n(q-1)/2, γ)`` with ``γ = q + 1 - n(q-1)/2``."""
    grad_exp = p.n * (p.q - 1) / 2
    return grad_exp, p.q + 1 - grad_exp


def gn_ratio(u: Field, p: ModelParams) -> float:
    """``||u||_{q+1}^{q+1} / (||∇u||_2^{n(q-1)/2} ||u||_2^γ)``; scale invariant."""
    ge, gamma = gn_exponents(p)
    A = grad_norm_sq(u)
    L = lp_power_sum(u, 2)
    return lp_power_sum(u, p.q + 1) / (A ** (ge / 2) * L ** (gamma / 2))


def _gn_objective(p: ModelParams):
    ge, gamma = gn_exponents(p)
    q = p.q

    def obj(u: Field):
        A = grad_norm_sq(u)
        L = lp_power_sum(u, 2)
        B = lp_power_sum(u, q + 1)
        val = math.log(B) - ge / 2 * math.log(A) - gamma / 2 * math.log(L)
        g = (q + 1) * np.abs(u.values) ** (q - 1) * u.values / B - ge * neg_laplacian_values(u) / A - gamma * u.values / L
        return val, Field(u.mesh, g)

    return obj


@dataclass(frozen=True)
class GNEstimate:
    G: float
    samples: int
    raw_best: float
    refined: tuple[float, ...]


def _batch_ratios(vals: np.ndarray, mesh: Mesh, p: ModelParams) -> np.ndarray:
    """GN ratio for each row of ``vals`` (1D meshes), or per-field loop otherwise."""
    ge, gamma = gn_exponents(p)
    cell = mesh.cell_measure
    if mesh.dimension == 1:
        h = mesh.spacing[0]
        padded = np.pad(vals, ((0, 0), (1, 1)))
        A = np.sum((np.diff(padded, axis=1) / h) ** 2, axis=1) * cell
    else:
        A = np.array([grad_norm_sq(Field(mesh, v)) for v in vals])
    L = np.sum(vals**2, axis=1) * cell
    B = np.sum(np.abs(vals) ** (p.q + 1), axis=1) * cell
    return B / (A ** (ge / 2) * L ** (gamma / 2))


def gn_constant_estimate(
    mesh: Mesh, p: ModelParams, samples: int = 1000, seed: int = 0, refine_top: int = 4, max_iter: int = 300
) -> GNEstimate:
    """Estimate the Gagliardo-Nirenberg constant as the best sampled ratio.

    Samples are random sine series, Gaussian bumps and rescaled eigenmodes; the
    ``refine_top`` best are polished by Sobolev-gradient ascent on the ratio.
    The result is a lower estimate of the true constant.
    """
    if samples < 1:
        raise DomainError("need at least one sample")
    fields = [random_direction(mesh, rng) for rng in spawn_rngs(seed, samples)]
    fields.append(sine_mode(mesh, 1))
    vals = np.stack([f.values.reshape(-1) for f in fields])
    ratios = _batch_ratios(vals, mesh, p)
    order = np.argsort(ratios)[::-1][:refine_top]
    obj = _gn_objective(p)
    refined = []
    for k in order:
        res = maximize_log_ratio(obj, fields[k], max_iter=max_iter)
        refined.append(math.exp(res.log_ratio))
    G = max([float(ratios.max())] + refined)
    return GNEstimate(G=G, samples=samples, raw_best=float(ratios.max()), refined=tuple(refined))


# ---------------------------------------------------------------------------
# Level-set bounds


@dataclass(frozen=True)
class LevelSetBounds:
    """Lower/upper bounds on ``||u||_2`` over ``N_s = N ∩ {J < s}``.

    ``K1`` is conditional on the Gagliardo-Nirenberg constant ``G`` that was used
    (an estimate); ``K2`` only needs the discrete first eigenvalue.
    """

    s: float
    K1: float
    K2: float
    G: float
    gamma: float
    theta: float
    branch: str
    lambda1: float
    empirical_lambda_s: float | None = None
    empirical_Lambda_s: float | None = None
    sample_count: int = 0

    def with_samples(self, sample: NehariSample) -> LevelSetBounds:
        return replace(
            self,
            empirical_lambda_s=sample.lambda_s,
            empirical_Lambda_s=sample.Lambda_s,
            sample_count=len(sample.fields),
        )

    @property
    def K1_consistent(self) -> bool | None:
        if self.empirical_lambda_s is None:
            return None
        return self.K1 <= self.empirical_lambda_s

    @property
    def K2_holds(self) -> bool | None:
        if self.empirical_Lambda_s is None:
            return None
        return self.empirical_Lambda_s <= self.K2


def theta_bound(p: ModelParams, d: float, S: float) -> float:
    """Lower bound on ``||∇u||_2`` over the Nehari manifold."""
    q = p.q
    return (2 * (q + 1) * d / (q - 1)) ** (1 / (q + 1)) / S


def level_set_bounds(s: float, p: ModelParams, m: Mesh, d: float, G: float, S: float) -> LevelSetBounds:
    if not s > d:
        raise DomainError(f"level s must exceed the well depth, got s={s}, d={d}")
    q, a, n = p.q, p.a, p.n
    _, gamma = gn_exponents(p)
    theta = theta_bound(p, d, S)
    lam1 = first_eigenvalue(m)
    expo = 4 - n * (q - 1)
    if q <= 1 + 4 / n + 1e-12:
        branch = "q <= 1+4/n"
        K1 = (a / G) ** (1 / gamma) * theta ** (expo / (2 * gamma))
    else:
        branch = "q > 1+4/n"
        K1 = (a / G) ** (1 / gamma) * (2 * (q + 1) * s / (a * (q - 1))) ** (expo / (4 * gamma))
    K2 = math.sqrt(2 * (q + 1) * s / (a * lam1 * (q - 1)))
    return LevelSetBounds(s=s, K1=K1, K2=K2, G=G, gamma=gamma, theta=theta, branch=branch, lambda1=lam1)


@dataclass(frozen=True)
class NehariSample:
    lambda_s: float | None
    Lambda_s: float | None
    fields: list[Field] = field(repr=False)
    J: np.ndarray = field(repr=False)
    draws: int = 0


def sample_nehari_levelset(
    s: float, p: ModelParams, m: Mesh, count: int, seed: int = 0, max_draws: int | None = None, batch: int = 512
) -> NehariSample:
    """Project random directions onto the Nehari manifold and keep those with ``J < s``.

    Draws continue in batches until ``count`` samples are retained or ``max_draws``
    (default ``200 * count``) is reached. An empty result means undersampling.
    """
    if count < 1:
        raise DomainError("count must be >= 1")
    max_draws = max_draws or 200 * count
    rngs_seed = np.random.SeedSequence(seed)
    kept, Js = [], []
    draws = 0
    while len(kept) < count and draws < max_draws:
        nb = min(batch, max_draws - draws)
        rngs = [np.random.default_rng(ss) for ss in rngs_seed.spawn(nb)]
        dirs = [random_direction(m, r) for r in rngs]
        draws += nb
        A = np.array([grad_norm_sq(u) for u in dirs])
        B = np.array([lp_power_sum(u, p.q + 1) for u in dirs])
        lam, *_ = lambda_star_batch(A, B, p)
        for u, l in zip(dirs, lam):
            if not np.isfinite(l):
                continue
            v = float(l) * u
            Av = grad_norm_sq(v)
            Bv = lp_power_sum(v, p.q + 1)
            I = p.a * Av + p.b * Av * Av - Bv
            J = 0.5 * p.a * Av + 0.25 * p.b * Av * Av - Bv / (p.q + 1)
            if abs(I) <= NEHARI_RTOL * max(p.a * Av, Bv) and J < s:
                kept.append(v)
                Js.append(J)
                if len(kept) == count:
                    break
    if not kept:
        return NehariSample(None, None, [], np.array([]), draws)
    norms = [lp_norm(v, 2) for v in kept]
    return NehariSample(min(norms), max(norms), kept, np.array(Js), draws)
