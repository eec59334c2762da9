import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats
from scipy.spatial.distance import directed_hausdorff

from laplab.block_dla import (BlockModelConfig, apply_step, cell_average_velocity,
                              ensemble_mean_map, make_step, multinomial_sequential,
                              replica_seeds, run_aggregation, run_ensemble,
                              sample_occupation, segment_lengths, segment_midpoints)
from laplab.conformal import PolyMap, area, area_quadrature, derivative, evaluate
from laplab.dbm import DBMConfig, DBMState, dbm_evolve, dbm_rhs
from laplab.errors import DomainError

LG = PolyMap.interior([1.0, 0.1])


def _hausdorff(f, g, M=1024):
    w = np.exp(2j * np.pi * np.arange(M) / M)
    a, b = evaluate(f, w), evaluate(g, w)
    A, B = np.c_[a.real, a.imag], np.c_[b.real, b.imag]
    return max(directed_hausdorff(A, B)[0], directed_hausdorff(B, A)[0])


def test_config_invariants():
    cfg = BlockModelConfig(N=64, K=320, epsilon=1e-4)
    assert cfg.kappa == 5.0
    for bad in (dict(N=4, K=1, epsilon=1.0), dict(N=8, K=0, epsilon=1.0),
                dict(N=8, K=1, epsilon=0.0), dict(N=8, K=1, epsilon=1.0, landing="x")):
        with pytest.raises(DomainError):
            BlockModelConfig(**bad)


@pytest.mark.parametrize("rule", ["midpoint", "arc"])
def test_segment_lengths_circles(rule):
    assert np.allclose(segment_lengths(PolyMap.interior([1.0]), 8, rule), np.pi / 4)
    assert np.allclose(segment_lengths(PolyMap.interior([2.0]), 8, rule), np.pi / 2)


def test_segment_lengths_midpoint_formula():
    l = segment_lengths(LG, 16, "midpoint")
    phi = (np.arange(16) + 0.5) * 2 * np.pi / 16
    assert np.allclose(l, (2 * np.pi / 16) * np.abs(1 + 0.2 * np.exp(1j * phi)), rtol=1e-14)
    assert np.allclose(segment_midpoints(4), [np.pi / 4, 3 * np.pi / 4, 5 * np.pi / 4, 7 * np.pi / 4])


@pytest.mark.parametrize("rule", ["midpoint", "arc"])
def test_segment_lengths_sum_to_perimeter(rule):
    perim, _ = integrate.quad(lambda t: abs(derivative(LG, np.exp(1j * t))), 0, 2 * np.pi,
                              epsabs=1e-13, epsrel=1e-13, limit=200)
    assert abs(segment_lengths(LG, 64, rule).sum() - perim) <= 1e-3


def test_occupation_sums_exactly(rng):
    draws = multinomial_sequential(37, np.full(16, 1 / 16), rng, size=20000)
    assert np.all(draws.sum(axis=1) == 37) and np.all(draws >= 0)
    occ = sample_occupation(segment_lengths(LG, 16), 37, 1e-3, rng)
    assert occ.k.sum() == 37
    assert occ.deposited_area == pytest.approx(37e-3, rel=1e-14)
    assert np.allclose(occ.h * occ.l, 1e-3) and np.allclose(occ.dn, occ.k * occ.h)


def test_occupation_mean_and_variance(rng):
    draws = multinomial_sequential(4, np.full(4, 0.25), rng, size=100_000)
    assert np.all(np.abs(draws.mean(axis=0) - 1.0) <= 0.02)
    assert np.all(np.abs(draws.var(axis=0) - 0.75) <= 0.02)


def test_occupation_chi_square(rng):
    N, K, n = 8, 24, 100_000
    draws = multinomial_sequential(K, np.full(N, 1 / N), rng, size=n)
    # marginal of each cell against Binomial(K, 1/N)
    for i in (0, N // 2, N - 1):
        obs = np.bincount(draws[:, i], minlength=K + 1)
        exp = n * stats.binom.pmf(np.arange(K + 1), K, 1 / N)
        # pool sparse tail bins
        keep = exp >= 5
        o = np.append(obs[keep], obs[~keep].sum())
        e = np.append(exp[keep], exp[~keep].sum())
        assert stats.chisquare(o, e).pvalue > 0.01
    # pairwise joint law of (k_0, k_1) against the trinomial
    joint = np.zeros((K + 1, K + 1))
    np.add.at(joint, (draws[:, 0], draws[:, 1]), 1)
    a, b = np.meshgrid(np.arange(K + 1), np.arange(K + 1), indexing="ij")
    ok = a + b <= K
    pmf = np.zeros_like(joint)
    pmf[ok] = stats.multinomial.pmf(np.stack([a[ok], b[ok], K - a[ok] - b[ok]], axis=1),
                                    K, [1 / N, 1 / N, 1 - 2 / N])
    exp = n * pmf
    keep = exp >= 5
    o = np.append(joint[keep], joint[~keep].sum())
    e = np.append(exp[keep], exp[~keep].sum())
    assert stats.chisquare(o, e * o.sum() / e.sum()).pvalue > 0.01
    cov = np.cov(draws[:, 0], draws[:, 1])[0, 1]
    assert cov == pytest.approx(-K / N ** 2, abs=0.02)


def test_arclength_landing(rng):
    l = segment_lengths(LG, 16)
    draws = np.array([sample_occupation(l, 400, 1e-4, rng, "arclength").k for _ in range(2000)])
    assert np.allclose(draws.mean(axis=0) / 400, l / l.sum(), atol=3e-3)


def test_cell_average_velocity():
    dn = np.arange(8.0)
    v = cell_average_velocity(dn, 64)
    assert np.sum(v) * 8 / 64 == pytest.approx(dn.sum())
    # sample 4 of 64 lies at the centre of segment 0's half... boundary samples mix neighbours
    assert v[8] == pytest.approx(0.5 * (dn[0] + dn[1]))
    assert v[4] == pytest.approx(dn[0])
    assert v[0] == pytest.approx(0.5 * (dn[-1] + dn[0]))


def test_uniform_step_on_circle():
    f = PolyMap.interior([1.0])
    N, kappa, eps = 64, 4, 1e-4
    occ = make_step(np.full(N, kappa), segment_lengths(f, N), eps)
    g = apply_step(f, occ)
    K = N * kappa
    assert np.allclose(g.coeffs[1:], 0, atol=1e-14)
    dr = abs(g.coeffs[0]) - 1.0
    assert dr == pytest.approx(K * eps / (2 * np.pi), rel=K * eps)
    assert area(g) - area(f) == pytest.approx(K * eps, rel=1e-12)
    raw = apply_step(f, occ, area_exact=False)
    assert abs(raw.coeffs[0]) - 1.0 == pytest.approx(K * eps / (2 * np.pi), rel=1e-12)


def test_single_segment_bump():
    N, eps = 64, 1e-4
    k = np.zeros(N, dtype=int)
    k[10] = 256
    occ = make_step(k, segment_lengths(LG, N), eps)
    g = apply_step(LG, occ)
    added = area_quadrature(g, 1024) - area_quadrature(LG, 1024)
    assert added == pytest.approx(256 * eps, rel=1e-3)
    # the bump sits on segment 10
    w = np.exp(1j * segment_midpoints(N))
    disp = np.abs(evaluate(g, w) - evaluate(LG, w))
    assert np.argmax(disp) == 10


def test_mean_displacement_is_lg_velocity(rng):
    N, kappa, c = 256, 100, 0.01
    K = N * kappa
    l = segment_lengths(LG, N)
    draws = multinomial_sequential(K, np.full(N, 1 / N), rng, size=400)
    mean_dn = (c / K) * draws.mean(axis=0) / l
    # normal velocity of the alpha = 2 flow at the segment nodes
    vel = dbm_rhs(DBMState(LG), DBMConfig(alpha=2.0, M=1024))
    w = np.exp(1j * segment_midpoints(N))
    p = np.arange(1, vel.size + 1)
    zft = np.polyval(vel[::-1], w) * w
    zfp = w * derivative(LG, w)
    vn = np.real(zft * np.conj(zfp)) / np.abs(zfp)
    target = c / (2 * np.pi) * vn
    assert np.max(np.abs(mean_dn / target - 1)) <= 0.05
    assert np.allclose(target, c / (2 * np.pi * np.abs(derivative(LG, w))), rtol=1e-10)


def test_area_bookkeeping_100_steps():
    cfg = BlockModelConfig(N=64, K=64 * 256, epsilon=0.016 / (64 * 256), steps=100, seed=11)
    res = run_aggregation(cfg, LG)
    assert res.trajectory.stop_reason == "t_end"
    A100 = area(LG) + 100 * cfg.K * cfg.epsilon
    assert res.area[-1] == pytest.approx(A100, rel=1e-2)
    assert area_quadrature(res.trajectory.maps[-1], 1024) == pytest.approx(A100, rel=1e-2)
    assert np.all(res.k.sum(axis=1) == cfg.K)
    assert res.kappa_ratios().mean() == pytest.approx(1.0)


def test_seed_reproducible():
    cfg = BlockModelConfig(N=32, K=320, epsilon=5e-5, steps=30, seed=123)
    a, b = run_aggregation(cfg, LG), run_aggregation(cfg, LG)
    assert np.array_equal(a.k, b.k)
    assert all(x == y for x, y in zip(a.trajectory.maps, b.trajectory.maps))
    c = run_aggregation(BlockModelConfig(N=32, K=320, epsilon=5e-5, steps=30, seed=124), LG)
    assert not np.array_equal(a.k, c.k)
    assert a.meta["rng"].startswith("numpy.random.Generator(PCG64)")


def test_replica_seeds():
    s = replica_seeds(5, 4)
    assert s == replica_seeds(5, 4) and len(set(s)) == 4
    assert replica_seeds(6, 4) != s


def test_stays_near_lg_envelope():
    N, kappa, c, steps = 64, 50, 0.016, 50
    cfg = BlockModelConfig(N=N, K=N * kappa, epsilon=c / (N * kappa), steps=steps, seed=5)
    res = run_ensemble(cfg, LG, 16)
    T = steps * c / (2 * np.pi)
    ref = dbm_evolve(LG, DBMConfig(alpha=2.0, M=256, dt=1e-3, t_end=T)).maps[-1]
    w = np.exp(2j * np.pi * np.arange(1024) / 1024)
    pts = np.array([evaluate(r.trajectory.maps[-1], w) for r in res])
    sd = np.sqrt(np.mean(np.abs(pts - pts.mean(axis=0)) ** 2, axis=0)).max()
    for r in res:
        assert _hausdorff(r.trajectory.maps[-1], ref) <= 3 * sd


def test_variance_scales_inverse_kappa():
    N, c, steps, R = 64, 0.016, 50, 32
    w = np.exp(2j * np.pi * np.arange(256) / 256)
    var = []
    for kappa in (256, 1024):
        cfg = BlockModelConfig(N=N, K=N * kappa, epsilon=c / (N * kappa), steps=steps, seed=9)
        res = run_ensemble(cfg, LG, R)
        r = np.abs(np.array([evaluate(x.trajectory.maps[-1], w) for x in res]))
        var.append(r.var(axis=0, ddof=1).mean())
    assert var[1] / var[0] == pytest.approx(0.25, abs=0.08)


def test_ensemble_mean_map():
    cfg = BlockModelConfig(N=32, K=3200, epsilon=1e-6, steps=5, seed=1)
    res = run_ensemble(cfg, LG, 3)
    m = ensemble_mean_map(res)
    manual = np.mean([r.trajectory.maps[-1].coeffs[:2] for r in res], axis=0)
    assert np.allclose(m.coeffs[:2], manual)


@settings(max_examples=20, deadline=None)
@given(K=st.integers(1, 500), N=st.integers(8, 40), seed=st.integers(0, 2 ** 32))
def test_constraint_property(K, N, seed):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(N))
    k = multinomial_sequential(K, p, rng, size=50)
    assert np.all(k.sum(axis=1) == K) and np.all(k >= 0)
