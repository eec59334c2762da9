import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from laplab.errors import ConfigError, DomainError, NumericalGuardError
from laplab.nrm import (NRMPotential, angular_uniformity, anisotropy, density_histogram,
                        discrete_metropolis, disk_norm_sq, interior_deviation, log_density,
                        metropolis_sample, planar_orthopoly)

DISK = NRMPotential()


def test_log_density_examples():
    assert log_density([0.0, 1.0], DISK, 1.0) == pytest.approx(-1.0)
    z = 0.3 + 0.2j
    assert log_density([z], DISK, 2.0) == pytest.approx(-2.0 * abs(z) ** 2)
    assert log_density([0.5, 0.5], DISK, 1.0) == -math.inf


@settings(max_examples=40, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=2, allow_nan=False, allow_infinity=False),
                min_size=2, max_size=7), st.randoms(use_true_random=False))
def test_log_density_exchangeable(pts, rnd):
    perm = list(pts)
    rnd.shuffle(perm)
    pot = NRMPotential(1.3, (0.1, 0.0))
    assert log_density(perm, pot, 3.0) == log_density(pts, pot, 3.0)


def test_potential_integrability_probe():
    assert DISK.integrable(32, 32)
    assert NRMPotential(1.0, (0.1,)).integrable(32, 32)
    assert not NRMPotential(1.0, (0.6,)).integrable(32, 32)
    # a cubic term always wins over |z|^2 along some ray
    assert not NRMPotential(1.0, (0.0, 0.05)).integrable(32, 32)
    with pytest.raises(DomainError):
        metropolis_sample(NRMPotential(1.0, (0.0, 0.05)), 4, 4, 10, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        NRMPotential(0.0)


def test_detailed_balance_two_states():
    freq = discrete_metropolis([0.0, math.log(3.0)], 2000, np.random.default_rng(11), chains=4096)
    assert freq[1] / freq[0] == pytest.approx(3.0, rel=1e-2)
    assert freq[1] == pytest.approx(0.75, abs=1e-3)


def test_single_eigenvalue_second_moment():
    N = 32
    S = metropolis_sample(DISK, 1, N, 20_000, np.random.default_rng(5), chains=16)
    v = np.array([abs(s.points[0]) ** 2 for s in S]).reshape(-1, 16)
    chain_means = v.mean(axis=0)
    se = chain_means.std(ddof=1) / math.sqrt(16)
    assert abs(v.mean() - 1 / N) <= 3 * se
    assert all(0.1 <= s.meta["acceptance"] <= 0.7 for s in S)


def test_two_eigenvalue_moment_against_quadrature():
    # exact Gauss-Hermite integration of |z1|^2 |z1 - z2|^2 against exp(-N(|z1|^2 + |z2|^2))
    N = 2.0
    x, w = np.polynomial.hermite.hermgauss(6)
    x = x / math.sqrt(N)
    num = den = 0.0
    for (a, wa), (b, wb), (c, wc), (d, wd) in itertools.product(zip(x, w), repeat=4):
        z1, z2 = a + 1j * b, c + 1j * d
        v = abs(z1 - z2) ** 2 * wa * wb * wc * wd
        num += abs(z1) ** 2 * v
        den += v
    ref = num / den
    assert ref == pytest.approx(3 / (2 * N), rel=1e-12)
    S = metropolis_sample(DISK, 2, N, 20_000, np.random.default_rng(8), chains=16)
    vals = np.array([np.mean(np.abs(s.points) ** 2) for s in S]).reshape(-1, 16)
    se = vals.mean(axis=0).std(ddof=1) / math.sqrt(16)
    assert abs(vals.mean() - ref) <= 3 * se


@pytest.fixture(scope="module")
def droplet():
    return metropolis_sample(DISK, 32, 32, 4000, np.random.default_rng(2026), chains=16, thin=5, seed=2026)


def test_droplet_density_flat(droplet):
    H = density_histogram(droplet, 32, bins=20)
    assert H.mass == pytest.approx(1.0, abs=1e-3)
    assert interior_deviation(H, 0.7) <= 0.1 / math.pi
    assert angular_uniformity(droplet).pvalue > 0.01


def test_droplet_max_modulus_matches_independent_radii(droplet):
    # the squared moduli are independent Gamma(k, 1/N), k = 1..n, for this ensemble
    rng = np.random.default_rng(0)
    N = 32
    radii = np.sqrt(rng.gamma(np.arange(1, 33), 1.0, size=(200_000, 32)) / N)
    ref = radii.max(axis=1).mean()
    mx = np.array([np.max(np.abs(s.points)) for s in droplet]).reshape(-1, 16)
    se = mx.mean(axis=0).std(ddof=1) / math.sqrt(16)
    assert abs(mx.mean() - ref) <= 4 * se + 1e-3


def test_droplet_reproducible():
    a = metropolis_sample(DISK, 8, 8, 60, np.random.default_rng(3), chains=2)
    b = metropolis_sample(DISK, 8, 8, 60, np.random.default_rng(3), chains=2)
    assert all(np.array_equal(x.points, y.points) for x, y in zip(a, b))


def test_elongated_droplet_anisotropy_sign():
    S = metropolis_sample(NRMPotential(1.0, (0.15,)), 16, 16, 1500, np.random.default_rng(4), chains=8, thin=5)
    assert anisotropy(S) > 0


def test_histogram_needs_samples():
    with pytest.raises(DomainError):
        density_histogram([], 4)
    with pytest.raises(DomainError):
        metropolis_sample(DISK, 5, 4, 10, np.random.default_rng(0))


# ---------------------------------------------------------------- planar orthogonal polynomials

def test_planar_norm_example():
    r = planar_orthopoly(DISK, 4, 2)
    assert r.norms_sq[2] == pytest.approx(math.pi / 32, rel=1e-12)


def test_planar_norms_closed_form_and_diagonal_gram():
    r = planar_orthopoly(DISK, 32, 32)
    ref = np.array([disk_norm_sq(n, 32) for n in range(33)])
    assert np.max(np.abs(r.norms_sq / ref - 1)) <= 1e-8
    d = np.sqrt(np.real(np.outer(np.diag(r.gram), np.diag(r.gram))))
    off = np.abs(r.gram - np.diag(np.diag(r.gram))) / d
    assert off.max() <= 1e-12


def test_planar_measure_peak():
    r = planar_orthopoly(DISK, 32, 32)
    assert r.radial_peak(16) == pytest.approx(math.sqrt(0.5), abs=0.02)
    assert r.radial_peak(32) == pytest.approx(1.0, abs=0.02)
    # mu_n integrates to one for the orthonormal P_n
    rr = np.linspace(0, 3, 6001)
    assert np.trapezoid(2 * np.pi * rr * r.mu(10, rr), rr) == pytest.approx(1.0, rel=1e-6)


def test_planar_non_radial_orthogonality():
    pot = NRMPotential(1.0, (0.1,))
    r = planar_orthopoly(pot, 8, 8)
    # independent check: the orthonormal P_n are orthonormal on a fine Cartesian grid
    x = np.linspace(-4, 4, 801)
    Z = x[None, :] + 1j * x[:, None]
    w = np.exp(-8 * pot(Z)) * (x[1] - x[0]) ** 2
    P = [np.polyval(r.coefficients(n)[::-1], Z) for n in range(6)]
    G = np.array([[np.sum(P[i] * np.conj(P[j]) * w) for j in range(6)] for i in range(6)])
    assert np.allclose(G, np.eye(6), atol=1e-6)


def test_planar_guard():
    with pytest.raises(NumericalGuardError):
        planar_orthopoly(NRMPotential(1.0, (0.45,)), 32, 32, cond_guard=10.0)
