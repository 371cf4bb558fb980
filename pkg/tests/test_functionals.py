from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from kirchhoff_well.discretization import Mesh, first_eigenvalue, grad_norm_sq, lp_norm, lp_power_sum
from kirchhoff_well.errors import DegenerateInputError, DomainError, NumericalError
from kirchhoff_well.functionals import (
    ModelParams,
    d0_lower_bound,
    decomposition_check,
    energy_J,
    fiber_lambda_star,
    i_prime_pairing,
    j_prime_residual,
    kirchhoff_energy_E,
    lambda_star_batch,
    nehari_I,
    nehari_project,
    on_nehari,
    sobolev_ratio,
    sobolev_search,
    validate_params,
)
from kirchhoff_well.sampling import random_direction, sine_mode

P = ModelParams(1.0, 1.0, 5.0, 1)
MESH = Mesh.interval(255)


@pytest.fixture(scope="module")
def sine():
    return sine_mode(MESH, 1)


class TestParams:
    @pytest.mark.parametrize(
        "kw", [dict(a=0.0), dict(b=-1.0), dict(q=2.5), dict(n=3), dict(a=float("nan"))]
    )
    def test_invalid(self, kw):
        with pytest.raises(DomainError):
            ModelParams(**{**dict(a=1.0, b=1.0, q=5.0, n=1), **kw})

    def test_q3_gate(self):
        p = ModelParams(1.0, 0.01, 3.0, 1)
        validate_params(p, S=0.5)  # b = 0.01 < S^4 = 0.0625
        with pytest.raises(DomainError, match="S"):
            validate_params(ModelParams(1.0, 0.1, 3.0, 1), S=0.5)

    def test_q3_needs_S(self):
        with pytest.raises(DomainError):
            validate_params(ModelParams(1.0, 0.01, 3.0, 1))

    def test_M(self):
        assert ModelParams(2.0, 3.0, 5.0, 1).M(4.0) == 14.0


class TestValues:
    def test_zero(self):
        z = MESH.zeros()
        assert energy_J(z, P) == nehari_I(z, P) == kirchhoff_energy_E(z, P) == 0.0
        assert j_prime_residual(z, P).is_zero()
        assert decomposition_check(z, P) == (0.0, 0.0)

    def test_sine_continuum_values(self, sine):
        pi2 = np.pi**2
        assert energy_J(sine, P) == pytest.approx(pi2 / 4 + pi2**2 / 16 - 5 / 96, rel=1e-4)
        assert nehari_I(sine, P) == pytest.approx(pi2 / 2 + pi2**2 / 4 - 5 / 16, rel=1e-4)
        assert kirchhoff_energy_E(sine, P) == pytest.approx(pi2 / 4 + pi2**2 / 16, rel=1e-4)

    def test_J_scaling(self, sine):
        A, B = grad_norm_sq(sine), lp_power_sum(sine, 6)
        expect = 0.5 * 4 * A + 0.25 * 16 * A * A - 2**6 * B / 6
        assert energy_J(2 * sine, P) == pytest.approx(expect, rel=1e-13)

    def test_I_prime_on_self(self):
        u = random_direction(MESH, np.random.default_rng(3))
        A, B = grad_norm_sq(u), lp_power_sum(u, 6)
        assert i_prime_pairing(u, u, P) == pytest.approx(2 * A + 4 * A * A - 6 * B, rel=1e-12)
        assert i_prime_pairing(u, MESH.zeros(), P) == 0.0

    def test_I_prime_on_nehari_negative(self, sine):
        w = nehari_project(sine, P)
        A = grad_norm_sq(w)
        expect = -P.a * (P.q - 1) * A - P.b * (P.q - 3) * A * A
        assert i_prime_pairing(w, w, P) == pytest.approx(expect, rel=1e-7)
        assert expect < 0

    def test_decomposition_on_nehari(self, sine):
        w = nehari_project(sine, P)
        A = grad_norm_sq(w)
        q = P.q
        assert energy_J(w, P) == pytest.approx(P.a * (q - 1) / (2 * (q + 1)) * A + P.b * (q - 3) / (4 * (q + 1)) * A * A, rel=1e-8)

    def test_jprime_pairing_random(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            u = 10 ** rng.uniform(-1, 0.5) * random_direction(MESH, rng)
            scale = max(grad_norm_sq(u), lp_power_sum(u, 6))
            r = j_prime_residual(u, P)
            assert abs(float(np.sum(r.values * u.values)) * MESH.cell_measure - nehari_I(u, P)) <= 1e-10 * scale

    def test_even(self):
        u = random_direction(MESH, np.random.default_rng(4))
        assert energy_J(-u, P) == energy_J(u, P)


class TestFiber:
    def test_closed_form_roots(self):
        assert fiber_lambda_star(1.0, 2.0, P).lambda_star == pytest.approx(1.0, rel=1e-12)
        assert fiber_lambda_star(1.0, 1.0, P).lambda_star == pytest.approx(math.sqrt((1 + math.sqrt(5)) / 2), rel=1e-12)

    def test_bisection_oracle(self):
        from scipy.optimize import brentq

        rng = np.random.default_rng(2)
        for _ in range(50):
            p = ModelParams(10 ** rng.uniform(-1, 1), 10 ** rng.uniform(-1, 1), rng.uniform(3.2, 9), 1)
            A, B = 10 ** rng.uniform(-3, 3, size=2)
            g = lambda lam: p.a * A + p.b * lam**2 * A**2 - lam ** (p.q - 1) * B
            hi = 1.0
            while g(hi) > 0:
                hi *= 2
            ref = brentq(g, 0.0, hi, xtol=1e-15, rtol=1e-14)
            assert fiber_lambda_star(A, B, p).lambda_star == pytest.approx(ref, rel=1e-10)

    def test_batch_matches_scalar(self):
        A = np.array([1.0, 1.0, 3.0])
        B = np.array([2.0, 1.0, 0.5])
        lam, *_ = lambda_star_batch(A, B, P)
        for k in range(3):
            assert lam[k] == pytest.approx(fiber_lambda_star(A[k], B[k], P).lambda_star, rel=1e-12)

    @pytest.mark.parametrize("A,B", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0)])
    def test_degenerate(self, A, B):
        with pytest.raises(DegenerateInputError):
            fiber_lambda_star(A, B, P)

    def test_projection_properties(self, sine):
        w = nehari_project(sine, P)
        assert on_nehari(w, P)
        np.testing.assert_allclose(nehari_project(w, P).values, w.values, rtol=1e-10)
        np.testing.assert_allclose(nehari_project(2 * sine, P).values, w.values, rtol=1e-10)
        S = sobolev_search(MESH, 5.0, starts=2).S
        assert energy_J(w, P) >= d0_lower_bound(P, S)

    def test_project_zero_rejected(self):
        with pytest.raises(DegenerateInputError):
            nehari_project(MESH.zeros(), P)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.floats(3.01, 10))
    @example(A=3.0, B=0.0625, q=3.01171875)  # root near 1e158: lam^{q-1} B overflows
    def test_residual_after_projection(self, A, B, q):
        p = ModelParams(1.0, 0.5, q, 1)
        # lam* > (bA^2/B)^{1/(q-3)}
        log_lo = math.log10(p.b * A * A / B) / (q - 3)
        try:
            lam = fiber_lambda_star(A, B, p).lambda_star
        except NumericalError:
            assert log_lo > 308  # allowed only when lam* itself is not representable
            return
        assert math.isfinite(lam) and lam >= 10 ** min(log_lo, 300) * (1 - 1e-12)
        # I(lam u) / lam^4, representable whenever lam is
        h = p.a * A / lam / lam + p.b * A * A - lam ** (q - 3) * B
        assert abs(h) <= 1e-10 * max(p.a * A / lam / lam, lam ** (q - 3) * B)


class TestD0:
    def test_examples(self):
        assert d0_lower_bound(ModelParams(1.0, 1.0, 5.0, 1), 1.0) == pytest.approx(1 / 3, rel=1e-14)
        assert d0_lower_bound(ModelParams(2.0, 1.0, 5.0, 1), 1.0) == pytest.approx(2 * 4 / 12 * math.sqrt(2), rel=1e-14)

    def test_decreasing_in_S(self):
        vals = [d0_lower_bound(P, S) for S in np.linspace(0.1, 2, 20)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_bad_S(self):
        with pytest.raises(DomainError):
            d0_lower_bound(P, 0.0)


class TestSobolev:
    def test_rayleigh_case(self):
        m = Mesh.interval(63)
        assert sobolev_search(m, 1.0, starts=3).S == pytest.approx(1 / math.sqrt(first_eigenvalue(m)), rel=1e-8)

    def test_any_field_is_lower_bound(self):
        est = sobolev_search(MESH, 5.0, starts=4, seed=1)
        rng = np.random.default_rng(8)
        for _ in range(50):
            w = random_direction(MESH, rng)
            assert lp_norm(w, 6) / math.sqrt(grad_norm_sq(w)) <= est.S * (1 + 1e-12)
            assert sobolev_ratio(w, 5.0) <= est.S * (1 + 1e-12)

    def test_multi_start_agreement_and_refinement(self):
        coarse = sobolev_search(Mesh.interval(127), 5.0, starts=4)
        fine = sobolev_search(MESH, 5.0, starts=4)
        assert coarse.spread < 1e-6
        assert abs(coarse.S - fine.S) / fine.S < 0.01
