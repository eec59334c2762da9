import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from laplab.conformal import (PolyMap, Trajectory, area, area_quadrature,
                              boundary_points, coeffs_from_boundary,
                              conformal_radius, curvature, curvature_variance,
                              derivative, derivative_on_circle,
                              derivative_winding, evaluate,
                              harmonic_moments, harmonic_moments_exact,
                              is_regular, min_abs_derivative, reduced_modulus)
from laplab.errors import AliasingError, DomainError


def test_evaluate_examples():
    assert evaluate(PolyMap.interior([1]), 1j) == pytest.approx(1j)
    assert evaluate(PolyMap.interior([1, 0.1]), 1.0) == pytest.approx(1.1)
    assert evaluate(PolyMap.exterior([2]), 3.0) == pytest.approx(6.0)


def test_evaluate_wrong_side():
    with pytest.raises(DomainError, match="wrong side of reference circle"):
        evaluate(PolyMap.interior([1, 0.1]), 1.5)
    with pytest.raises(DomainError, match="wrong side of reference circle"):
        evaluate(PolyMap.exterior([1, 0, 0.2]), 0.5)


def test_exterior_normalization_enforced():
    with pytest.raises(ValueError):
        PolyMap.exterior([-1.0])
    with pytest.raises(ValueError):
        PolyMap.exterior([1j])
    with pytest.raises(ValueError):
        PolyMap.interior([0, 1])


def test_json_round_trip():
    f = PolyMap.exterior([1.5, 0.1 - 0.2j, 0.3j])
    text = f.to_json()
    assert json.loads(text)["orientation"] == "exterior"
    assert PolyMap.from_json(text) == f
    tr = Trajectory()
    tr.append(0.0, f)
    tr.append(0.5, PolyMap.exterior([2.0]))
    back = Trajectory.from_dict(json.loads(json.dumps(tr.to_dict())))
    assert back.times == tr.times and back.maps == tr.maps


def test_derivative_on_circle_examples():
    s = derivative_on_circle(PolyMap.interior([1]), 8)
    assert np.allclose(s.derivs, 1.0, atol=1e-15)
    s = derivative_on_circle(PolyMap.interior([1, 0.1]), 16)
    assert np.allclose(s.derivs, 1 + 0.2 * np.exp(1j * s.angles), atol=1e-14)
    s = derivative_on_circle(PolyMap.interior([1, 0.5]), 16)
    j = np.argmin(np.abs(s.derivs))
    assert s.angles[j] == pytest.approx(np.pi)
    assert abs(s.derivs[j]) < 1e-14


def test_derivative_on_circle_aliasing():
    with pytest.raises(AliasingError):
        derivative_on_circle(PolyMap.interior([1, 0.1, 0.1, 0.1]), 4)
    with pytest.raises(AliasingError):
        derivative_on_circle(PolyMap.interior([1]), 12)


def test_samples_consistent_with_horner():
    f = PolyMap.exterior([1.2, 0.1j, 0.2, 0, -0.05 + 0.01j])
    s = derivative_on_circle(f, 32)
    w = np.exp(1j * s.angles)
    assert np.allclose(s.points, evaluate(f, w), rtol=1e-12, atol=1e-14)
    assert np.allclose(s.derivs, derivative(f, w), rtol=1e-12, atol=1e-14)


def test_area_examples():
    assert area(PolyMap.interior([1])) == pytest.approx(np.pi, rel=1e-14)
    assert area(PolyMap.interior([1, 0.1])) == pytest.approx(1.02 * np.pi, rel=1e-14)
    assert area(PolyMap.interior([2])) == pytest.approx(4 * np.pi, rel=1e-14)
    assert area_quadrature(PolyMap.interior([1, 0.1]), 256) == pytest.approx(1.02 * np.pi, rel=1e-12)


def test_area_warns_for_non_univalent():
    with pytest.warns(RuntimeWarning):
        area(PolyMap.interior([1, 0.6]))


def _star_inside(fmap, z, M=4096):
    # boundary of a star-shaped domain as r(phi), interpolated periodically
    b = boundary_points(fmap, M)
    phi = np.angle(b)
    order = np.argsort(phi)
    phi, rb = phi[order], np.abs(b)[order]
    phi = np.concatenate([phi[-1:] - 2 * np.pi, phi, phi[:1] + 2 * np.pi])
    rb = np.concatenate([rb[-1:], rb, rb[:1]])
    return np.abs(z) < np.interp(np.angle(z), phi, rb)


def test_first_moment_monte_carlo_oracle():
    f = PolyMap.interior([1, 0.1])
    rng = np.random.default_rng(7)
    box = 1.15
    total, n = 0.0 + 0.0j, 10_000_000
    for _ in range(10):
        z = rng.uniform(-box, box, n // 10) + 1j * rng.uniform(-box, box, n // 10)
        total += np.sum(z[_star_inside(f, z)])
    C1 = total * (2 * box) ** 2 / n / np.pi
    assert abs(C1 - 0.1) < 1e-3
    assert harmonic_moments(f, 1).C[0] == pytest.approx(0.1, abs=1e-12)


def test_moment_examples():
    m = harmonic_moments(PolyMap.interior([1]), 2)
    assert np.allclose(m.C, 0, atol=1e-14) and m.t0 == pytest.approx(1.0)
    m = harmonic_moments(PolyMap.interior([2]), 1)
    assert abs(m.C[0]) < 1e-13 and m.t0 == pytest.approx(4.0)
    with pytest.raises(DomainError):
        harmonic_moments(PolyMap.interior([1]), 0)


@pytest.mark.parametrize("r", [0.5, 1.0, 3.0])
def test_disk_moments(r):
    m = harmonic_moments(PolyMap.interior([r]), 4)
    assert m.t0 == pytest.approx(r * r, rel=1e-12)
    assert np.allclose(m.C, 0, atol=1e-12 * r ** 6)


def test_moment_c1_formula():
    a, b = 1.3, 0.2 - 0.1j
    m = harmonic_moments_exact(PolyMap.interior([a, b]), 1)
    assert m.C[0] == pytest.approx(a * a * np.conj(b), rel=1e-14)


coef = st.complex_numbers(max_magnitude=0.12, allow_nan=False, allow_infinity=False)


@settings(max_examples=30, deadline=None)
@given(a1=st.floats(0.5, 2.0), rest=st.lists(coef, min_size=0, max_size=3))
def test_moments_quadrature_matches_residue(a1, rest):
    f = PolyMap.interior([a1] + [c * a1 for c in rest])
    quad = harmonic_moments(f, 3)
    exact = harmonic_moments_exact(f, 3)
    scale = np.array([exact.t0 ** (1 + n / 2) for n in range(1, 4)])
    assert quad.t0 == pytest.approx(exact.t0, rel=1e-10)
    assert np.all(np.abs(quad.C - exact.C) <= 1e-8 * scale)


@settings(max_examples=40, deadline=None)
@given(orient=st.sampled_from(["interior", "exterior"]), a1=st.floats(0.5, 2.0),
       rest=st.lists(coef, min_size=1, max_size=5))
def test_area_formula_matches_quadrature(orient, a1, rest):
    f = PolyMap(orient, np.array([a1] + [c * a1 for c in rest]))
    if orient == "exterior":
        f = PolyMap("exterior", np.concatenate([[a1, 0.0], f.coeffs[1:]]))
    if not is_regular(f) or derivative_winding(f) != 0:
        return
    assert area(f) == pytest.approx(area_quadrature(f, 256), rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(rest=st.lists(coef, min_size=1, max_size=6))
def test_fft_reproduces_coefficients(rest):
    f = PolyMap.interior([1.0] + rest)
    s = derivative_on_circle(f, 64)
    c = coeffs_from_boundary(s.points, "interior", f.coeffs.size)
    assert np.allclose(c, f.coeffs, atol=1e-12)


def test_conformal_radius_and_modulus():
    f = PolyMap.exterior([2.0])
    assert conformal_radius(f) == 2.0
    assert reduced_modulus(f) == pytest.approx(-math.log(2) / (2 * np.pi))
    g = PolyMap.interior([1])
    assert conformal_radius(g) == 1.0 and reduced_modulus(g) == 0.0
    assert conformal_radius(PolyMap.exterior([1.0, 0, 0.3])) == 1.0


def test_curvature_of_circle():
    kappa, ds = curvature(PolyMap.interior([2.0]), 64)
    assert np.allclose(kappa, 0.5) and np.allclose(ds, 2.0)
    kappa, _ = curvature(PolyMap.exterior([2.0]), 64)
    assert np.allclose(kappa, 0.5)
    assert curvature_variance(PolyMap.interior([3.0])) < 1e-28


def test_min_abs_derivative():
    assert min_abs_derivative(PolyMap.interior([1, 0.1])) == pytest.approx(0.8)
    assert not is_regular(PolyMap.interior([1, 0.5]), tol=1e-12)
