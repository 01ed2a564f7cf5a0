import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from kmd.errors import InvalidChannel, InvalidDensity, InvalidModel, ShapeError
from kmd.kernels import from_matrix, make_discrete
from kmd.population import (
    Density1D,
    FiniteJointModel,
    adaptive_simpson,
    eta_exact_finite,
    eta_gaussian_location_curve,
    eta_gaussian_scale_curve,
    eta_two_sample_1d,
    model_from_json,
    push_forward,
    verify_convexity_finite,
    verify_dpi_finite,
)


def random_model(rng, m, s):
    p = rng.dirichlet(np.ones(s), size=m)
    return FiniteJointModel(p, rng.dirichlet(np.ones(m) * 2))


def random_kernel(rng, m):
    a = rng.standard_normal((m, m))
    return from_matrix(a @ a.T + 0.05 * np.eye(m))


def test_finite_examples():
    k = make_discrete(3)
    same = FiniteJointModel.uniform_pi([[0.2, 0.8], [0.2, 0.8], [0.2, 0.8]])
    assert eta_exact_finite(same, k) == pytest.approx(0.0, abs=1e-15)
    disjoint = FiniteJointModel.uniform_pi(np.eye(3))
    assert eta_exact_finite(disjoint, k) == pytest.approx(1.0, abs=1e-15)
    setup = FiniteJointModel.uniform_pi([[0.5, 0.5, 0, 0], [0.5, 0.5, 0, 0], [0, 0, 0.5, 0.5]])
    assert eta_exact_finite(setup, k) == pytest.approx(0.5, abs=1e-15)


def test_model_validation():
    with pytest.raises(InvalidModel):
        FiniteJointModel([[0.5, 0.6], [0.5, 0.5]], [0.5, 0.5])
    with pytest.raises(InvalidModel):
        FiniteJointModel([[0.5, 0.5], [0.5, 0.5]], [0.2, 0.5])
    with pytest.raises(ShapeError):
        FiniteJointModel([[0.5, 0.5], [0.5, 0.5]], [1.0])


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_eta_in_unit_interval(seed):
    rng = np.random.default_rng(seed)
    m, s = int(rng.integers(2, 5)), int(rng.integers(2, 7))
    eta = eta_exact_finite(random_model(rng, m, s), random_kernel(rng, m))
    assert -1e-12 <= eta <= 1 + 1e-12


def test_iff_directions():
    rng = np.random.default_rng(4)
    k = random_kernel(rng, 3)
    # a small perturbation of one class moves eta off zero
    p = np.tile([0.25, 0.25, 0.5], (3, 1))
    q = p.copy()
    q[2] = [0.3, 0.2, 0.5]
    assert eta_exact_finite(FiniteJointModel.uniform_pi(q), k) > 1e-6
    # one shared support point moves eta off one
    r = np.array([[0.5, 0.5, 0, 0], [0, 0.5, 0.5, 0], [0, 0, 0, 1.0]])
    assert eta_exact_finite(FiniteJointModel.uniform_pi(r), k) < 1 - 1e-6


def test_dpi_examples():
    rng = np.random.default_rng(1)
    model = random_model(rng, 3, 4)
    k = make_discrete(3)
    before, after = verify_dpi_finite(model, np.eye(4), k)
    assert after == pytest.approx(before, abs=1e-14)
    before, after = verify_dpi_finite(model, np.ones((4, 1)), k)
    assert after == pytest.approx(0.0, abs=1e-14)
    perm = np.eye(4)[[2, 0, 3, 1]]
    before, after = verify_dpi_finite(model, perm, k)
    assert after == pytest.approx(before, abs=1e-14)
    with pytest.raises(InvalidChannel):
        push_forward(model, np.full((4, 4), 0.3))


def test_convexity_examples():
    rng = np.random.default_rng(2)
    k = make_discrete(2)
    p, q = random_model(rng, 2, 5), random_model(rng, 2, 5)
    q = FiniteJointModel(q.probs, p.pi)
    for lam in (0.0, 1.0):
        assert verify_convexity_finite(p, q, lam, k)
    assert verify_convexity_finite(p, p, 0.3, k)
    with pytest.raises(ShapeError):
        verify_convexity_finite(p, random_model(rng, 2, 4), 0.5, k)


def test_adaptive_simpson_against_closed_forms():
    assert adaptive_simpson(math.sin, 0, math.pi, 1e-12) == pytest.approx(2.0, abs=1e-10)
    assert adaptive_simpson(lambda x: math.sqrt(x), 0, 1, 1e-10) == pytest.approx(2 / 3, abs=1e-8)
    assert adaptive_simpson(math.exp, 1, 1) == 0.0


def test_uniform_shift_values():
    u = Density1D.uniform(0, 1)
    assert eta_two_sample_1d(u, u.affine(1, 0.5), 0.5) == pytest.approx(0.5, abs=1e-6)
    assert eta_two_sample_1d(u, u.affine(1, 0.1), 0.5) == pytest.approx(0.1, abs=1e-6)
    assert eta_two_sample_1d(u, u, 0.5) == pytest.approx(0.0, abs=1e-12)
    assert eta_two_sample_1d(u, u.affine(1, 2.0), 0.5) == 1.0


def test_unnormalized_density_rejected():
    with pytest.raises(InvalidDensity):
        eta_two_sample_1d(Density1D(lambda x: 2.0, 0, 1), Density1D.uniform(0, 1), 0.5)
    with pytest.raises(ValueError):
        eta_two_sample_1d(Density1D.uniform(0, 1), Density1D.uniform(0, 1), 1.0)


def _eta_quad(f, g, pi1):
    def h(x):
        s = pi1 * f(x) + (1 - pi1) * g(x)
        return f(x) * g(x) / s if s > 0 else 0.0

    val, _ = integrate.quad(h, -40, 60,
                            epsabs=1e-12, epsrel=1e-12, limit=500, points=[0, 5, 10])
    return 1 - val


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0, 4.0])
@pytest.mark.parametrize("pi1", [0.5, 0.3])
def test_gaussian_location_matches_scipy_quad(lam, pi1):
    want = _eta_quad(stats.norm(0, 1).pdf, stats.norm(lam, 1).pdf, pi1)
    assert eta_gaussian_location_curve([lam], pi1)[0] == pytest.approx(want, abs=1e-7)


def test_gaussian_location_curve_shape():
    vals = eta_gaussian_location_curve([0, 1, 2, 4, 8])
    assert vals[0] == pytest.approx(0.0, abs=1e-8)
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert eta_gaussian_location_curve([20])[0] > 0.999


def test_gaussian_scale_curve_decreasing():
    lams = [0.1, 0.2, 0.4, 0.6, 0.8, 1.0]
    vals = eta_gaussian_scale_curve(lams)
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] == pytest.approx(0.0, abs=1e-8)
    want = _eta_quad(stats.norm(0, 1).pdf, stats.norm(0, 1 / 0.4).pdf, 0.5)
    assert vals[2] == pytest.approx(want, abs=1e-7)


@pytest.mark.parametrize("scale,shift", [(2.0, 0.0), (0.5, 3.0), (-1.5, 1.0)])
def test_affine_invariance(scale, shift):
    f, g = Density1D.normal(0, 1), Density1D.normal(1, 1.5)
    base = eta_two_sample_1d(f, g, 0.4)
    moved = eta_two_sample_1d(f.affine(scale, shift), g.affine(scale, shift), 0.4)
    assert moved == pytest.approx(base, abs=1e-7)


def test_model_from_json():
    model, kern = model_from_json({"probs": [[1, 0], [0, 1]]})
    assert kern is None and np.allclose(model.pi, 0.5)
    model, kern = model_from_json({"probs": [[1, 0], [0, 1]], "pi": [0.25, 0.75], "kernel": [[2, 0], [0, 1]]})
    assert kern.tolist() == [[2, 0], [0, 1]]
