"""
Normal-matrix eigenvalue ensembles.

Eigenvalues ``z_1..z_n`` have the unnormalized density

    |Delta(z)|^2 prod_j exp(-N V(z_j)),   V(z) = (|z|^2 - Q(z) - conj(Q(z))) / t0,

with ``Q(z) = sum_k t_k z^k`` (``k >= 2``). Only ratios of the density are
used; the partition function is never estimated.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .errors import ConfigError, DomainError, NumericalGuardError

TARGET_ACCEPT = 0.35


@dataclass(frozen=True)
class NRMPotential:
    t0: float = 1.0
    tk: tuple = ()            # (t_2, t_3, ...)

    def __post_init__(self):
        if not self.t0 > 0:
            raise ConfigError("t0 must be positive")
        object.__setattr__(self, "tk", tuple(float(t) for t in self.tk))

    @property
    def radial(self) -> bool:
        return not any(self.tk)

    def Q(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape, dtype=complex)
        for k, t in enumerate(self.tk, start=2):
            if t:
                out = out + t * z ** k
        return out

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return (np.abs(z) ** 2 - 2 * np.real(self.Q(z))) / self.t0

    def integrable(self, N: float, n_max: int, rays: int = 720) -> bool:
        """Numerical probe that ``int |z|^(2 n_max) e^{-N V}`` converges:
        along every ray ``N V - (2 n_max + 2) log r`` must grow without bound."""
        th = 2 * np.pi * np.arange(rays) / rays
        R = np.array([10.0, 100.0, 1000.0])
        z = R[:, None] * np.exp(1j * th)[None, :]
        with np.errstate(over="ignore", invalid="ignore"):
            g = N * self(z) - (2 * n_max + 2) * np.log(R)[:, None]
        return bool(np.all(np.isfinite(g)) and np.all(np.diff(g, axis=0) > 0) and np.all(g[-1] > 0))

    def check(self, N: float, n_max: int):
        if not self.integrable(N, n_max):
            raise DomainError(f"potential t0={self.t0}, tk={list(self.tk)} is not integrable "
                              "(e^{-NV} does not decay along every ray)")


def log_density(points, potential, N: float) -> float:
    """``sum_{i<j} 2 log|z_i - z_j| - N sum_j V(z_j)``; ``-inf`` for coincident points."""
    z = np.asarray(points, dtype=complex).ravel()
    # canonical order makes the floating-point sum exactly permutation invariant
    z = z[np.lexsort((z.imag, z.real))]
    d = np.abs(z[:, None] - z[None, :])[np.triu_indices(z.size, 1)]
    if np.any(d == 0):
        return -math.inf
    return float(2 * np.sum(np.log(d)) - N * np.sum(potential(z)))


def metropolis_accept(delta, u) -> np.ndarray:
    """Metropolis rule ``u < exp(delta)`` written in log form."""
    return np.log(u) < delta


@dataclass
class EigenSample:
    points: np.ndarray
    logweight: float
    meta: dict = field(default_factory=dict)


def metropolis_sample(potential: NRMPotential, n: int, N: float, sweeps: int,
                      rng: np.random.Generator, chains: int = 8, burn: Optional[int] = None,
                      thin: int = 1, step: Optional[float] = None, seed=None) -> list[EigenSample]:
    """Single-eigenvalue random-walk Metropolis on ``chains`` parallel chains.

    A sweep proposes a Gaussian move for each eigenvalue in turn. The proposal
    scale adapts towards 35% acceptance during the ``burn`` warm-up sweeps
    (default ``sweeps // 4``) and is frozen afterwards. Every ``thin``-th
    post-burn sweep of every chain is returned.
    """
    if n > N:
        raise DomainError("need n <= N")
    if n < 1 or sweeps < 1:
        raise DomainError("need n >= 1 and sweeps >= 1")
    potential.check(N, n)
    burn = sweeps // 4 if burn is None else burn
    if sweeps <= burn:
        raise DomainError("sweeps must exceed burn-in")
    radius = math.sqrt(potential.t0 * n / N)
    z = radius * np.sqrt(rng.uniform(size=(chains, n))) * np.exp(2j * np.pi * rng.uniform(size=(chains, n)))
    step = 0.5 * radius / math.sqrt(max(n, 1)) + 0.3 / math.sqrt(N) if step is None else step
    steps = np.full(chains, step)
    V = potential(z)
    out: list[EigenSample] = []
    acc_count = np.zeros(chains)
    prop_count = 0
    window = np.zeros(chains)
    idx = np.arange(n)
    for sweep in range(sweeps):
        acc_sweep = np.zeros(chains)
        for i in range(n):
            zi = z[:, i]
            zp = zi + steps * (rng.standard_normal(chains) + 1j * rng.standard_normal(chains)) / math.sqrt(2)
            others = z[:, idx != i]
            with np.errstate(divide="ignore"):
                dlog = 2 * np.sum(np.log(np.abs(zp[:, None] - others)) - np.log(np.abs(zi[:, None] - others)), axis=1)
            Vp = potential(zp)
            delta = dlog - N * (Vp - V[:, i])
            ok = metropolis_accept(delta, rng.uniform(size=chains))
            z[ok, i] = zp[ok]
            V[ok, i] = Vp[ok]
            acc_sweep += ok
        if sweep < burn:
            window += acc_sweep
            if (sweep + 1) % 10 == 0:
                steps *= np.exp(window / (10 * n) - TARGET_ACCEPT)
                window[:] = 0
            continue
        acc_count += acc_sweep
        prop_count += n
        if (sweep - burn) % thin == 0:
            for c in range(chains):
                out.append(EigenSample(z[c].copy(), log_density(z[c], potential, N),
                                       {"chain": c, "sweep": sweep}))
    rates = acc_count / max(prop_count, 1)
    for s in out:
        c = s.meta["chain"]
        s.meta.update(acceptance=float(rates[c]), step=float(steps[c]), sweeps=sweeps,
                      burn=burn, seed=seed)
    if np.any((rates < 0.1) | (rates > 0.7)):
        warnings.warn(f"acceptance rates {np.round(rates, 3)} outside [0.1, 0.7]", RuntimeWarning,
                      stacklevel=2)
    return out


def discrete_metropolis(log_weights, steps: int, rng: np.random.Generator,
                        chains: int = 1024) -> np.ndarray:
    """Visit frequencies of a Metropolis chain on a finite state set with
    uniform proposals (uses the same acceptance rule as the eigenvalue sampler)."""
    lw = np.asarray(log_weights, dtype=float)
    K = lw.size
    s = rng.integers(K, size=chains)
    counts = np.zeros(K, dtype=np.int64)
    for _ in range(steps):
        prop = rng.integers(K, size=chains)
        ok = metropolis_accept(lw[prop] - lw[s], rng.uniform(size=chains))
        s = np.where(ok, prop, s)
        counts += np.bincount(s, minlength=K)
    return counts / counts.sum()


# ---------------------------------------------------------------- density estimates

@dataclass
class Histogram2D:
    xedges: np.ndarray
    yedges: np.ndarray
    density: np.ndarray        # shape (len(yedges)-1, len(xedges)-1)
    samples: int

    @property
    def centers(self) -> np.ndarray:
        xc = 0.5 * (self.xedges[1:] + self.xedges[:-1])
        yc = 0.5 * (self.yedges[1:] + self.yedges[:-1])
        return xc[None, :] + 1j * yc[:, None]

    @property
    def cell_area(self) -> float:
        return float(np.diff(self.xedges)[0] * np.diff(self.yedges)[0])

    @property
    def mass(self) -> float:
        return float(self.density.sum() * self.cell_area)


def density_histogram(samples: Sequence[EigenSample], N: float, bounds=(-1.5, 1.5, -1.5, 1.5),
                      bins: int = 30) -> Histogram2D:
    """2D histogram of ``rho_N``, normalized to total mass ``n / N``
    (eigenvalues falling outside ``bounds`` are lost from the mass)."""
    if not samples:
        raise DomainError("no samples")
    pts = np.concatenate([s.points for s in samples])
    n = samples[0].points.size
    xe = np.linspace(bounds[0], bounds[1], bins + 1)
    ye = np.linspace(bounds[2], bounds[3], bins + 1)
    H, _, _ = np.histogram2d(pts.imag, pts.real, bins=[ye, xe])
    area = (xe[1] - xe[0]) * (ye[1] - ye[0])
    dens = H / (len(samples) * area) / N
    return Histogram2D(xe, ye, dens, len(samples))


def interior_deviation(hist: Histogram2D, radius: float, level: float = 1 / math.pi) -> float:
    """Largest ``|rho - level|`` over cells lying entirely inside ``|z| < radius``."""
    xe, ye = hist.xedges, hist.yedges
    corners = np.maximum.reduce([np.abs(xe[None, :-1] + 1j * ye[:-1, None]),
                                 np.abs(xe[None, 1:] + 1j * ye[:-1, None]),
                                 np.abs(xe[None, :-1] + 1j * ye[1:, None]),
                                 np.abs(xe[None, 1:] + 1j * ye[1:, None])])
    inside = corners < radius
    if not inside.any():
        raise DomainError("no cell lies inside the radius")
    return float(np.max(np.abs(hist.density[inside] - level)))


def angular_uniformity(samples: Sequence[EigenSample], bins: int = 16):
    """Chi-square test of the arguments of all sampled eigenvalues against uniform."""
    ang = np.angle(np.concatenate([s.points for s in samples]))
    counts, _ = np.histogram(ang, bins=bins, range=(-math.pi, math.pi))
    return stats.chisquare(counts)


def anisotropy(samples: Sequence[EigenSample]) -> float:
    """``<x^2 - y^2> / <x^2 + y^2>``: positive when the droplet is elongated along the real axis."""
    z = np.concatenate([s.points for s in samples])
    return float(np.mean(z.real ** 2 - z.imag ** 2) / np.mean(np.abs(z) ** 2))


# ---------------------------------------------------------------- planar orthogonal polynomials

@dataclass
class PlanarOrthoResult:
    norms_sq: np.ndarray           # squared norms of the monic P_n, n = 0..n_max
    gram: np.ndarray               # Gram matrix of the monomials
    chol: np.ndarray               # lower factor of the scaled Gram matrix
    scale: np.ndarray
    potential: NRMPotential
    N: float

    def coefficients(self, n: int) -> np.ndarray:
        """Coefficients (ascending powers) of the orthonormal ``P_n``."""
        # rows of L^{-1} D^{-1/2} give orthonormal combinations of monomials
        Linv = np.linalg.inv(self.chol[: n + 1, : n + 1])
        return Linv[n] / self.scale[: n + 1]

    def mu(self, n: int, z) -> np.ndarray:
        """``|P_n(z)|^2 e^{-N V(z)}`` with ``P_n`` orthonormal."""
        z = np.asarray(z, dtype=complex)
        c = self.coefficients(n)
        P = np.polyval(c[::-1], z)
        return np.abs(P) ** 2 * np.exp(-self.N * self.potential(z))

    def radial_peak(self, n: int, theta: float = 0.0, r_max: Optional[float] = None,
                    samples: int = 20001) -> float:
        r_max = r_max or 3 * math.sqrt(self.potential.t0 * max(n, 1) / self.N) + 1
        r = np.linspace(0, r_max, samples)
        return float(r[np.argmax(self.mu(n, r * np.exp(1j * theta)))])


def planar_orthopoly(potential: NRMPotential, N: float, n_max: int, radial_nodes: int = 40,
                     panels: int = 24, angles: Optional[int] = None,
                     cond_guard: float = 1e12) -> PlanarOrthoResult:
    """Orthogonal polynomials for the weight ``e^{-N V}`` on the plane.

    The Gram matrix of ``1, z, ..., z^n_max`` is computed on a polar grid:
    composite Gauss-Legendre panels in ``r`` (truncated where
    ``r^(2 n_max+1) e^{-N V}`` is below ``1e-30`` of its maximum) and the
    trapezoid rule in ``theta`` (exact for the trigonometric degrees present).
    Monic norms come from a Cholesky factorization of the diagonally scaled
    Gram matrix; its condition number is guarded.
    """
    potential.check(N, n_max)
    deg = max(n_max, 1)
    if angles is None:
        d = len(potential.tk) + 1
        angles = 4 * (2 * n_max + 2 * d * (n_max + 8)) if not potential.radial else 4 * n_max + 8
    th = 2 * np.pi * np.arange(angles) / angles
    # radial window
    r = np.linspace(0, 1, 4001)
    Rm = 1.0
    for _ in range(60):
        rr = Rm * r[1:]
        Vmin = np.min(potential(rr[:, None] * np.exp(1j * th[:: max(1, angles // 64)])[None, :]), axis=1)
        h = (2 * deg + 1) * np.log(rr) - N * Vmin
        if h[-1] < h.max() + math.log(1e-30):
            break
        Rm *= 2
    inside = np.flatnonzero(h >= h.max() + math.log(1e-30))
    R = rr[min(inside[-1] + 1, rr.size - 1)]
    xg, wg = np.polynomial.legendre.leggauss(radial_nodes)
    edges = np.linspace(0, R, panels + 1)
    half = np.diff(edges) / 2
    mid = (edges[1:] + edges[:-1]) / 2
    rn = (mid[:, None] + half[:, None] * xg).ravel()
    wr = (half[:, None] * wg).ravel() * rn
    Z = rn[:, None] * np.exp(1j * th)[None, :]
    lw = -N * potential(Z)
    W = wr[:, None] * np.exp(lw) * (2 * np.pi / angles)
    powers = np.arange(n_max + 1)
    # monomials scaled to unit size at the droplet radius to keep the Gram matrix tame
    s0 = math.sqrt(potential.t0 * max(n_max, 1) / N)
    Zs = (Z / s0).ravel()
    Mon = Zs[:, None] ** powers[None, :]
    G = (Mon.T * W.ravel()) @ np.conj(Mon)
    G = G * np.outer(s0 ** powers, s0 ** powers)
    if not np.all(np.isfinite(G)):
        raise NumericalGuardError("Gram matrix is not finite")
    D = np.sqrt(np.real(np.diag(G)))
    S = G / np.outer(D, D)
    cond = np.linalg.cond(S)
    if cond > cond_guard:
        raise NumericalGuardError(f"Gram matrix condition {cond:.2e} above guard; lower n_max")
    L = np.linalg.cholesky(S)
    norms_sq = (D * np.real(np.diag(L))) ** 2
    return PlanarOrthoResult(norms_sq, G, L, D, potential, N)


def disk_norm_sq(n: int, N: float) -> float:
    """``int |z|^{2n} e^{-N|z|^2} d^2z = pi n! / N^(n+1)``."""
    return math.pi * math.exp(math.lgamma(n + 1) - (n + 1) * math.log(N))
