"""
Spectral integrator for the Dielectric Breakdown Model family of conformal flows.

The map evolves by

    df/dt = z f'(z) S(z),   Re S = (|f'|^2 + sigma^2)^(-alpha/2) on |z| = 1,

where ``S`` is the Herglotz (Poisson-Schwarz) extension of the boundary data
into the reference domain of the map. ``alpha = 2`` is Laplacian growth,
``alpha = 0`` a pure dilation ``f(z, t) = phi(e^t z)``.

Maps are carried as truncated coefficient vectors of length ``M/2 - 1``
(interior) or ``M/2`` (exterior) in the :class:`~laplab.conformal.PolyMap`
layout; products are formed by exact linear convolution and truncated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .conformal import (PolyMap, Trajectory, _is_pow2, harmonic_moments_exact)
from .errors import DomainError, ResolutionError

TAIL_GUARD = 1e-10
SINGULAR_FPRIME = 1e-6


@dataclass(frozen=True)
class DBMConfig:
    alpha: float
    sigma: float = 0.0
    M: int = 256
    dt: float = 1e-3
    t_end: float = 1.0
    curvature_cap: float = 1e6
    save_dt: Optional[float] = None
    tail_guard: float = TAIL_GUARD
    max_halvings: int = 12
    # Krasny filter: zero coefficients below this fraction of the leading one
    filter_level: float = 1e-13
    # +1 injection (growth), -1 suction (time-reversed flow)
    direction: int = 1

    def __post_init__(self):
        if not _is_pow2(self.M) or self.M < 8:
            raise DomainError("M must be a power of two >= 8")
        if not self.dt > 0:
            raise DomainError("dt must be positive")
        if self.sigma < 0:
            raise DomainError("sigma must be >= 0")
        if self.direction not in (1, -1):
            raise DomainError("direction must be +1 or -1")


@dataclass(frozen=True)
class DBMState:
    map: PolyMap
    t: float = 0.0


def work_length(orientation: str, M: int) -> int:
    return M // 2 - 1 if orientation == "interior" else M // 2


def _powers(orientation: str, n: int) -> np.ndarray:
    i = np.arange(n)
    return i + 1 if orientation == "interior" else 1 - i


def to_work(fmap: PolyMap, M: int) -> np.ndarray:
    n = work_length(fmap.orientation, M)
    c = fmap.coeffs
    if c.size > n:
        if np.any(np.abs(c[n:]) > 0):
            raise ResolutionError(f"map has {c.size} coefficients; M={M} holds {n}",
                                  suggested_modes=2 * M)
        c = c[:n]
    out = np.zeros(n, dtype=complex)
    out[: c.size] = c
    return out


def from_work(orientation: str, c: np.ndarray) -> PolyMap:
    c = np.array(c, dtype=complex)
    if orientation == "exterior":
        c[0] = c[0].real
    return PolyMap(orientation, c)


def boundary_samples(orientation: str, c: np.ndarray, M: int):
    """Return ``(w, f, w f', w^2 f'')`` at ``M`` equispaced points of the circle."""
    p = _powers(orientation, c.size)
    idx = np.mod(p, M)

    def synth(coef):
        spec = np.zeros(M, dtype=complex)
        np.add.at(spec, idx, coef)
        return M * np.fft.ifft(spec)

    w = np.exp(2j * np.pi * np.arange(M) / M)
    return w, synth(c), synth(p * c), synth(p * (p - 1) * c)


def herglotz_extend(u, M: Optional[int] = None, orientation: str = "interior") -> np.ndarray:
    """Coefficients of the analytic ``S`` with ``Re S = u`` on the circle.

    Interior: ``S(z) = u_0 + 2 sum_{k>=1} u_k z^k`` returned indexed by ``k``.
    Exterior: ``S(z) = u_0 + 2 sum_{k>=1} u_{-k} z^{-k}`` returned indexed by
    ``k`` for the power ``-k``. Positive data then always moves the boundary
    away from the reference circle's centre (interior) or towards infinity
    (exterior).
    """
    u = np.asarray(u)
    if np.iscomplexobj(u):
        if np.any(np.abs(u.imag) > 1e-14 * max(1.0, float(np.max(np.abs(u))))):
            raise DomainError("Herglotz data must be real")
        u = u.real
    u = u.astype(float)
    M = u.size if M is None else M
    if u.size != M:
        raise DomainError("sample count does not match M")
    uh = np.fft.fft(u) / M
    L = M // 2
    S = np.empty(L, dtype=complex)
    S[0] = uh[0].real
    if orientation == "interior":
        S[1:] = 2 * uh[1:L]
    else:
        S[1:] = 2 * np.conj(uh[1:L])
    return S


def herglotz_velocity(orientation: str, c: np.ndarray, u: np.ndarray, M: int,
                      wfp: Optional[np.ndarray] = None) -> tuple[np.ndarray, float]:
    """Coefficients of ``z f'(z) S[u](z)`` truncated to the working length.

    Also returns the relative size of the discarded part of the product.
    """
    n = c.size
    p = _powers(orientation, n)
    S = herglotz_extend(u, M, orientation)
    if orientation == "interior":
        zf = np.concatenate([[0.0], p * c])          # powers 0..n
        prod = np.convolve(zf, S)                    # powers 0..
        vel = prod[1: n + 1]
        dropped = prod[n + 1:]
    else:
        zf = p * c                                   # powers 1, 0, -1, ...
        prod = np.convolve(zf, S)                    # index i <-> power 1 - i
        vel = prod[:n]
        dropped = prod[n:]
    scale = max(float(np.max(np.abs(vel))), 1e-300)
    lost = float(np.max(np.abs(dropped))) / scale if dropped.size else 0.0
    return vel, lost


def tail_ratio(orientation: str, c: np.ndarray) -> float:
    """Largest coefficient in the top eighth of the spectrum over the leading one."""
    n = c.size
    start = n - max(1, n // 8)
    return float(np.max(np.abs(c[start:])) / abs(c[0]))


def _rhs_work(orientation: str, c: np.ndarray, cfg: DBMConfig) -> np.ndarray:
    w, f, wfp, _ = boundary_samples(orientation, c, cfg.M)
    fp2 = np.abs(wfp) ** 2   # |w f'| = |f'| on the circle
    if cfg.alpha == 0:
        u = np.ones(cfg.M)
    else:
        u = (fp2 + cfg.sigma ** 2) ** (-cfg.alpha / 2)
    vel, _ = herglotz_velocity(orientation, c, u, cfg.M)
    return vel if cfg.direction == 1 else -vel


def dbm_rhs(state: DBMState, cfg: DBMConfig) -> np.ndarray:
    """Coefficient velocity of ``z f' S`` in the PolyMap layout of ``state.map``.

    Raises :class:`ResolutionError` when the coefficient tail of the state is
    above the guard.
    """
    c = to_work(state.map, cfg.M)
    tr = tail_ratio(state.map.orientation, c)
    if tr > cfg.tail_guard:
        raise ResolutionError(f"resolution exceeded (tail {tr:.2e}); try M={2 * cfg.M}",
                              suggested_modes=2 * cfg.M)
    return _rhs_work(state.map.orientation, c, cfg)


def _rk4(orientation, c, h, cfg):
    k1 = _rhs_work(orientation, c, cfg)
    k2 = _rhs_work(orientation, c + 0.5 * h * k1, cfg)
    k3 = _rhs_work(orientation, c + 0.5 * h * k2, cfg)
    k4 = _rhs_work(orientation, c + h * k3, cfg)
    return c + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _krasny(c: np.ndarray, level: float) -> np.ndarray:
    if level > 0:
        c = c.copy()
        c[1:][np.abs(c[1:]) < level * abs(c[0])] = 0.0
    return c


def _diagnostics(orientation, c, M):
    _, _, wfp, w2fpp = boundary_samples(orientation, c, M)
    afp = np.abs(wfp)
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = (1.0 + np.real(w2fpp / wfp)) / afp
    return float(np.min(afp)), float(np.max(np.abs(kappa)))


def dbm_evolve(init: PolyMap, cfg: DBMConfig) -> Trajectory:
    """Classical RK4 with step halving on guard trips.

    Coefficients below ``cfg.filter_level`` times the leading one are zeroed
    after every step, so rounding noise cannot seed the high-mode
    instabilities of the flow (interior maps for ``alpha < 1``, exterior maps
    for ``alpha > 1``). A trial step is rejected (and ``dt`` halved) when it produces non-finite
    coefficients, a coefficient tail above ``cfg.tail_guard`` or a curvature
    above ``cfg.curvature_cap``. After ``cfg.max_halvings`` rejections the run
    stops with ``stop_reason`` set to the guard that tripped. Crossing
    ``min|f'| < 1e-6`` stops the run with ``stop_reason='singularity'``.
    """
    orientation = init.orientation
    c = to_work(init, cfg.M)
    traj = Trajectory(meta={"alpha": cfg.alpha, "sigma": cfg.sigma, "M": cfg.M,
                            "dt": cfg.dt, "orientation": orientation,
                            "direction": cfg.direction})
    t = 0.0
    traj.append(t, from_work(orientation, c))
    next_save = cfg.save_dt if cfg.save_dt else None
    h = cfg.dt
    h_min = cfg.dt * 2.0 ** (-cfg.max_halvings)
    eps_t = 1e-12 * max(1.0, cfg.t_end)
    while t < cfg.t_end - eps_t:
        step = min(h, cfg.t_end - t)
        trial = _krasny(_rk4(orientation, c, step, cfg), cfg.filter_level)
        reason = None
        if not np.all(np.isfinite(trial)):
            reason = "non-finite"
        elif tail_ratio(orientation, trial) > cfg.tail_guard:
            reason = "resolution"
        else:
            mfp, kmax = _diagnostics(orientation, trial, cfg.M)
            if kmax > cfg.curvature_cap:
                reason = "curvature"
        if reason is not None:
            h = step / 2
            if h < h_min:
                traj.stop_reason = reason
                break
            continue
        c, t = trial, t + step
        if abs(cfg.t_end - t) <= eps_t:
            t = cfg.t_end
        h = min(cfg.dt, 2 * h)
        if next_save is None or t >= next_save - eps_t or t >= cfg.t_end - eps_t:
            traj.append(t, from_work(orientation, c))
            if next_save is not None:
                while next_save <= t + eps_t:
                    next_save += cfg.save_dt
        if mfp < SINGULAR_FPRIME:
            if traj.times[-1] != t:
                traj.append(t, from_work(orientation, c))
            traj.stop_reason = "singularity"
            break
    traj.meta["t_final"] = t
    return traj


def exact_scaling_radius(alpha: float, t):
    """Conformal radius of the exact solution from ``f = z``."""
    t = np.asarray(t, dtype=float)
    if alpha == 0:
        return np.exp(t)
    return (1.0 + alpha * t) ** (1.0 / alpha)


def _drift_scale(t0: float, k: int, c0: complex) -> float:
    natural = t0 ** (1 + k / 2)
    return abs(c0) if abs(c0) > 1e-12 * natural else natural


def moment_drift(traj: Trajectory, m: int) -> float:
    """Max relative drift of ``C_1..C_m`` over the snapshots.

    Moments that vanish initially are measured against ``t0^(1+k/2)``, the
    natural size of ``C_k`` for a domain of area ``pi t0``.
    """
    ref = harmonic_moments_exact(traj.maps[0], m)
    drift = 0.0
    for fmap in traj.maps[1:]:
        mom = harmonic_moments_exact(fmap, m)
        for k in range(1, m + 1):
            s = _drift_scale(ref.t0, k, ref.C[k - 1])
            drift = max(drift, abs(mom.C[k - 1] - ref.C[k - 1]) / s)
    return float(drift)
