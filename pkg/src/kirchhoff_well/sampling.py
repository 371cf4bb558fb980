"""Random smooth and localized fields used as starts and as Nehari samples."""

from __future__ import annotations

import numpy as np

from .discretization import Field, Mesh

MAX_MODES = 16


def sine_series(mesh: Mesh, rng: np.random.Generator, modes: int = MAX_MODES) -> Field:
    """Sine series with Gaussian coefficients decaying like ``k^-2``."""
    axes = mesh.axes()
    if mesh.dimension == 1:
        (x,) = axes
        L = mesh.extents[0]
        k = np.arange(1, modes + 1)
        coef = rng.standard_normal(modes) / k**2
        vals = np.sin(np.pi * np.outer(x, k) / L) @ coef
    else:
        kk = np.arange(1, modes + 1)
        k1, k2 = np.meshgrid(kk, kk, indexing="ij")
        coef = rng.standard_normal(k1.shape) / (k1**2 + k2**2)
        sx = np.sin(np.pi * np.outer(axes[0], kk) / mesh.extents[0])
        sy = np.sin(np.pi * np.outer(axes[1], kk) / mesh.extents[1])
        vals = sx @ coef @ sy.T
    return Field(mesh, vals)


def gaussian_bump(mesh: Mesh, rng: np.random.Generator) -> Field:
    """Gaussian bump with random center and width, tapered to vanish at the boundary."""
    coords = mesh.coordinates()
    r2 = np.zeros(mesh.shape)
    envelope = np.ones(mesh.shape)
    for x, L in zip(coords, mesh.extents):
        c = rng.uniform(0.2, 0.8) * L
        w = rng.uniform(0.04, 0.3) * L
        r2 = r2 + (x - c) ** 2 / w**2
        envelope = envelope * np.sin(np.pi * x / L)
    sign = 1.0 if rng.random() < 0.5 else -1.0
    return Field(mesh, sign * np.exp(-0.5 * r2) * envelope)


def sine_mode(mesh: Mesh, mode: int | tuple[int, ...] = 1) -> Field:
    modes = (mode,) * mesh.dimension if np.isscalar(mode) else tuple(mode)
    return mesh.sample(
        lambda *xs: np.prod([np.sin(k * np.pi * x / L) for k, x, L in zip(modes, xs, mesh.extents)], axis=0)
    )


def random_direction(mesh: Mesh, rng: np.random.Generator, family: str | None = None) -> Field:
    """Draw a nonzero field. ``family`` is ``"sine"``, ``"series"``, ``"bump"`` or None (random mix)."""
    if family is None:
        family = "series" if rng.random() < 0.5 else "bump"
    if family == "sine":
        # first mode plus a small random perturbation
        base = sine_mode(mesh, 1)
        return base + 0.05 * sine_series(mesh, rng)
    if family == "series":
        u = sine_series(mesh, rng)
    elif family == "bump":
        u = gaussian_bump(mesh, rng)
    else:
        raise ValueError(f"unknown family {family!r}")
    if u.is_zero():
        return sine_mode(mesh, 1)
    return u


def spawn_rngs(seed, count: int) -> list[np.random.Generator]:
    """Per-item generators that do not depend on execution order."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]
