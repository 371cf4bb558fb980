"""Uniform Dirichlet grids, finite-difference operators and discrete norms.

Fields hold nodal values on interior nodes only; boundary values are zero.
All quadratures use the nodal (midpoint) rule with cell measure ``prod(h)``,
which makes the Dirichlet form below equal to ``(-Δu, u)`` exactly.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, MeshMismatchError, NumericalError

CG_RTOL = 1e-12
SOLVE_RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class Mesh:
    """Uniform grid on ``(0, L_1) x ... x (0, L_n)`` with ``n`` in {1, 2}.

    ``nodes[i]`` is the number of interior nodes along axis ``i``; the spacing is
    ``extents[i] / (nodes[i] + 1)``.
    """

    extents: tuple[float, ...]
    nodes: tuple[int, ...]

    def __post_init__(self):
        extents = tuple(float(e) for e in np.atleast_1d(self.extents))
        nodes = tuple(int(n) for n in np.atleast_1d(self.nodes))
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "nodes", nodes)
        if len(extents) not in (1, 2) or len(nodes) != len(extents):
            raise DomainError(f"mesh must be 1D or 2D with one node count per axis, got {extents}, {nodes}")
        if any(not (e > 0 and math.isfinite(e)) for e in extents):
            raise DomainError(f"extents must be positive, got {extents}")
        if any(n < 1 for n in nodes):
            raise DomainError(f"need at least one interior node per axis, got {nodes}")

    @classmethod
    def interval(cls, nodes: int, length: float = 1.0) -> Mesh:
        return cls((length,), (nodes,))

    @classmethod
    def rectangle(cls, nodes: tuple[int, int], extents: tuple[float, float] = (1.0, 1.0)) -> Mesh:
        return cls(tuple(extents), tuple(nodes))

    @property
    def dimension(self) -> int:
        return len(self.nodes)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.nodes

    @property
    def size(self) -> int:
        return int(np.prod(self.nodes))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(e / (n + 1) for e, n in zip(self.extents, self.nodes))

    @property
    def cell_measure(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list[np.ndarray]:
        """Interior node coordinates along each axis."""
        return [h * np.arange(1, n + 1) for h, n in zip(self.spacing, self.nodes)]

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays broadcast to ``shape`` (``indexing='ij'``)."""
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def field(self, values) -> Field:
        return Field(self, values)

    def zeros(self) -> Field:
        return Field(self, np.zeros(self.shape))

    def sample(self, func) -> Field:
        """Evaluate ``func(*coords)`` on the interior nodes."""
        return Field(self, func(*self.coordinates()))


@dataclass(frozen=True, eq=False)
class Field:
    """Nodal values of a grid function vanishing on the boundary. Immutable."""

    mesh: Mesh
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.size != self.mesh.size:
            raise MeshMismatchError(f"expected {self.mesh.size} values, got {vals.size}")
        vals = vals.reshape(self.mesh.shape)
        if not np.all(np.isfinite(vals)):
            raise DomainError("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def _check(self, other: Field) -> None:
        if other.mesh != self.mesh:
            raise MeshMismatchError(f"{self.mesh} vs {other.mesh}")

    def __add__(self, other: Field) -> Field:
        self._check(other)
        return Field(self.mesh, self.values + other.values)

    def __sub__(self, other: Field) -> Field:
        self._check(other)
        return Field(self.mesh, self.values - other.values)

    def __mul__(self, c: float) -> Field:
        return Field(self.mesh, float(c) * self.values)

    __rmul__ = __mul__

    def __truediv__(self, c: float) -> Field:
        return Field(self.mesh, self.values / float(c))

    def __neg__(self) -> Field:
        return Field(self.mesh, -self.values)

    def is_zero(self) -> bool:
        return not np.any(self.values)


def _same_mesh(u: Field, v: Field) -> None:
    if u.mesh != v.mesh:
        raise MeshMismatchError(f"{u.mesh} vs {v.mesh}")


def _laplacian_array(vals: np.ndarray, spacing: tuple[float, ...]) -> np.ndarray:
    out = np.zeros_like(vals)
    for axis, h in enumerate(spacing):
        pad = [(0, 0)] * vals.ndim
        pad[axis] = (1, 1)
        p = np.pad(vals, pad)
        lo = np.take(p, np.arange(0, vals.shape[axis]), axis=axis)
        hi = np.take(p, np.arange(2, vals.shape[axis] + 2), axis=axis)
        out += (lo - 2.0 * vals + hi) / (h * h)
    return out


def laplacian(u: Field) -> Field:
    """Second-order Dirichlet Laplacian (3-point in 1D, 5-point in 2D)."""
    return Field(u.mesh, _laplacian_array(u.values, u.mesh.spacing))


def neg_laplacian_values(u: Field) -> np.ndarray:
    return -_laplacian_array(u.values, u.mesh.spacing)


def grad_norm_sq(u: Field) -> float:
    """Discrete ``||∇u||_2^2``: squared edge differences over every edge, boundary edges included."""
    vals = u.values
    total = 0.0
    for axis, h in enumerate(u.mesh.spacing):
        pad = [(0, 0)] * vals.ndim
        pad[axis] = (1, 1)
        d = np.diff(np.pad(vals, pad), axis=axis) / h
        total += float(np.sum(d * d))
    return total * u.mesh.cell_measure


def lp_power_sum(u: Field, r: float) -> float:
    """``||u||_r^r`` without taking the root."""
    if r < 1:
        raise DomainError(f"L^r norm needs r >= 1, got {r}")
    return float(np.sum(np.abs(u.values) ** r)) * u.mesh.cell_measure


def lp_norm(u: Field, r: float) -> float:
    return lp_power_sum(u, r) ** (1.0 / r)


def inner(u: Field, v: Field) -> float:
    _same_mesh(u, v)
    return float(np.sum(u.values * v.values)) * u.mesh.cell_measure


def first_eigenvalue(mesh: Mesh) -> float:
    """Smallest eigenvalue of the discrete Dirichlet ``-Δ`` (closed form)."""
    return float(
        sum(2.0 / h**2 * (1.0 - math.cos(math.pi / (n + 1))) for h, n in zip(mesh.spacing, mesh.nodes))
    )


def continuum_first_eigenvalue(mesh: Mesh) -> float:
    return float(sum((math.pi / L) ** 2 for L in mesh.extents))


def first_eigenfunction(mesh: Mesh) -> Field:
    """Discrete first Dirichlet eigenvector, normalized to unit L2 norm."""
    e = mesh.sample(lambda *xs: np.prod([np.sin(np.pi * x / L) for x, L in zip(xs, mesh.extents)], axis=0))
    return e / lp_norm(e, 2)


@functools.lru_cache(maxsize=32)
def _neg_laplacian_matrix(mesh: Mesh) -> sp.csr_matrix:
    mats = []
    for h, n in zip(mesh.spacing, mesh.nodes):
        mats.append(sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]) / h**2)
    if mesh.dimension == 1:
        return sp.csr_matrix(mats[0])
    ix, iy = (sp.identity(n) for n in mesh.nodes)
    return sp.csr_matrix(sp.kron(mats[0], iy) + sp.kron(ix, mats[1]))


def solve_shifted(rhs: Field, shift: float = 0.0, scale: float = 1.0) -> Field:
    """Solve ``(shift·I + scale·(-Δ)) φ = rhs`` with zero boundary values.

    1D uses banded elimination; 2D uses conjugate gradients (the operator is SPD
    for ``shift >= 0, scale > 0``).
    """
    mesh = rhs.mesh
    b = rhs.values.ravel()
    if not np.any(b):
        return mesh.zeros()
    if mesh.dimension == 1:
        n = mesh.nodes[0]
        h2 = mesh.spacing[0] ** 2
        ab = np.empty((3, n))
        ab[0, :] = -scale / h2
        ab[1, :] = shift + 2.0 * scale / h2
        ab[2, :] = -scale / h2
        x = scipy.linalg.solve_banded((1, 1), ab, b, check_finite=False)
    else:
        A = scale * _neg_laplacian_matrix(mesh) + shift * sp.identity(mesh.size, format="csr")
        x, info = spla.cg(A, b, rtol=CG_RTOL, atol=0.0, maxiter=20 * mesh.size)
        if info != 0:
            raise NumericalError("conjugate gradient did not converge", {"info": info, "shift": shift, "scale": scale})
    op = scale * _neg_laplacian_matrix(mesh) @ x + shift * x
    res = np.linalg.norm(op - b) / np.linalg.norm(b)
    if not np.isfinite(res) or res > SOLVE_RESIDUAL_TOL:
        raise NumericalError("linear solve residual too large", {"relative_residual": res, "shift": shift})
    return Field(mesh, x)


def solve_poisson(r: Field) -> Field:
    """Return φ with ``-Δφ = r`` and zero boundary values."""
    return solve_shifted(r, 0.0, 1.0)


def h_minus1_norm(r: Field) -> float:
    """Discrete dual norm ``sup_v (r, v) / ||∇v||_2``, realized through a Poisson solve."""
    phi = solve_poisson(r)
    return math.sqrt(max(inner(r, phi), 0.0))


def inverse_power_eigenvalue(mesh: Mesh, tol: float = 1e-10, max_iter: int = 10_000, seed: int = 0) -> float:
    """Smallest eigenvalue of discrete ``-Δ`` by inverse power iteration (closed-form cross-check)."""
    rng = np.random.default_rng(seed)
    u = Field(mesh, rng.random(mesh.shape) + 0.5)
    lam = np.inf
    for _ in range(max_iter):
        w = solve_poisson(u)
        w = w / lp_norm(w, 2)
        new = inner(Field(mesh, neg_laplacian_values(w)), w)
        if abs(new - lam) <= tol * new:
            return new
        lam, u = new, w
    raise NumericalError("inverse power iteration did not converge", {"last": lam})
