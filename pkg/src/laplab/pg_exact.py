"""
Exact Laplacian growth of low-degree polynomial maps.

A polynomial interior map of degree ``d`` stays polynomial under Laplacian
growth: its harmonic moments ``C_1..C_{d-1}`` are conserved and its area
changes linearly, ``dA/dt = +-2 pi``. Those ``d`` equations determine the
``d`` real coefficients, so each step is a small Newton solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .conformal import (MomentVector, PolyMap, Trajectory, derivative_on_circle,
                        harmonic_moments_exact, min_abs_derivative)
from .errors import ConvergenceError, DomainError, SingularityError

INJECTION = 2 * np.pi
SUCTION = -2 * np.pi

NEWTON_TOL = 1e-12
NEWTON_MAXIT = 50
SINGULAR_FPRIME = 1e-6


@dataclass(frozen=True)
class PGState:
    map: PolyMap
    t: float
    rate: float
    conserved: MomentVector
    area0: float
    degree: int

    @classmethod
    def initial(cls, fmap: PolyMap, rate: float = INJECTION) -> "PGState":
        if fmap.orientation != "interior":
            raise DomainError("exact evolution needs an interior map")
        c = fmap.coeffs
        if np.any(np.abs(c.imag) > 0):
            raise DomainError("exact evolution supports real coefficients only")
        d = c.size
        if d > 3:
            raise DomainError("exact evolution supports degree <= 3")
        if rate not in (INJECTION, SUCTION):
            raise DomainError("rate must be +2*pi (injection) or -2*pi (suction)")
        mom = harmonic_moments_exact(fmap, max(d - 1, 1))
        return cls(fmap, 0.0, float(rate), mom, float(np.pi * mom.t0), d)

    @property
    def coeffs(self) -> np.ndarray:
        a = np.zeros(self.degree)
        c = self.map.coeffs.real
        a[: c.size] = c
        return a

    def target_area(self, t: float) -> float:
        return self.area0 + self.rate * t


def _residual(a: np.ndarray, A: float, Ck: np.ndarray) -> np.ndarray:
    d = a.size
    # area and moments in closed form; scaled so every entry is O(1)
    area = np.pi * np.sum(np.arange(1, d + 1) * a ** 2)
    r = [area / A - 1.0]
    if d > 1:
        mom = harmonic_moments_exact(PolyMap("interior", a.astype(complex)), d - 1).C.real
        scale = A / np.pi
        for k in range(d - 1):
            r.append((mom[k] - Ck[k]) / scale ** (1 + (k + 1) / 2))
    return np.array(r)


def _jacobian(a: np.ndarray, A: float, Ck: np.ndarray) -> np.ndarray:
    d = a.size
    J = np.empty((d, d))
    h = 1e-7 * max(1.0, float(np.max(np.abs(a))))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        J[:, j] = (_residual(a + e, A, Ck) - _residual(a - e, A, Ck)) / (2 * h)
    return J


def _locally_univalent(a: np.ndarray) -> bool:
    """No critical point of f in the closed disk (f' != 0 for |w| <= 1)."""
    dp = a * np.arange(1, a.size + 1)
    # negligible top coefficients put roots near infinity; drop them
    keep = np.flatnonzero(np.abs(dp) > 1e-14 * np.max(np.abs(dp)))
    dp = dp[: keep[-1] + 1]
    if dp.size == 1:
        return dp[0] != 0
    roots = np.roots(dp[::-1])
    return bool(np.all(np.abs(roots) > 1.0))


def _newton(a0: np.ndarray, A: float, Ck: np.ndarray) -> np.ndarray:
    a = a0.copy()
    res = _residual(a, A, Ck)
    for _ in range(NEWTON_MAXIT):
        if np.max(np.abs(res)) < NEWTON_TOL:
            return a
        J = _jacobian(a, A, Ck)
        try:
            step = np.linalg.solve(J, -res)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        while lam > 1e-4:
            trial = a + lam * step
            rt = _residual(trial, A, Ck)
            if np.max(np.abs(rt)) < np.max(np.abs(res)):
                break
            lam *= 0.5
        a, res = trial, rt
    if np.max(np.abs(res)) < NEWTON_TOL:
        return a
    raise ConvergenceError("Newton did not converge", residual=float(np.max(np.abs(res))))


def _solve(state: PGState, t_new: float) -> np.ndarray:
    A = state.target_area(t_new)
    if A <= 0:
        raise SingularityError("domain exhausted", t=t_new)
    a = _newton(state.coeffs, A, state.conserved.C.real[: state.degree - 1])
    if not _locally_univalent(a) or a[0] <= 0:
        raise ConvergenceError("Newton left the univalent branch", residual=0.0)
    return a


def pg_step(state: PGState, dt: float, max_halvings: int = 40) -> PGState:
    """Advance by ``dt`` with Newton continuation.

    A failed solve is retried as two half steps (recursively), which carries
    the continuation up to the fold where the coefficient system loses its
    real solution.
    """
    if dt == 0:
        return state
    if min_abs_derivative(state.map) < SINGULAR_FPRIME:
        raise SingularityError("singularity reached", t=state.t,
                               min_fprime=min_abs_derivative(state.map))
    try:
        a = _solve(state, state.t + dt)
    except ConvergenceError:
        if max_halvings <= 0:
            raise
        half = pg_step(state, dt / 2, max_halvings - 1)
        return pg_step(half, dt / 2, max_halvings - 1)
    return replace(state, map=PolyMap("interior", a.astype(complex)), t=state.t + dt)


def pg_evolve(state: PGState, dt: float, t_end: float,
              stop_fprime: float = SINGULAR_FPRIME, min_dt: float = 1e-12) -> Trajectory:
    """Integrate from ``state`` towards ``t_end``.

    Near a cusp the step is halved until ``min|f'|`` falls below
    ``stop_fprime`` (recorded as ``stop_reason='singularity'``) or the step
    shrinks below ``min_dt``.
    """
    traj = Trajectory(meta={"rate": state.rate, "degree": state.degree})
    traj.append(state.t, state.map)
    h = dt
    while state.t < t_end - 1e-15:
        step = min(h, t_end - state.t)
        try:
            new = pg_step(state, step, max_halvings=0)
        except (ConvergenceError, SingularityError):
            h = step / 2
            if h < min_dt:
                traj.stop_reason = "singularity"
                break
            continue
        state = new
        traj.append(state.t, state.map)
        mf = min_abs_derivative(state.map)
        if mf < stop_fprime:
            traj.stop_reason = "singularity"
            break
        # shrink the step as the fold approaches: min|f'| ~ sqrt(t_c - t)
        h = min(dt, max(min_dt, 0.25 * mf ** 2))
    return traj


class CuspEstimate(NamedTuple):
    time: float
    kind: str   # "cusp", "exhaustion" or "never"


def cusp_time(state: PGState) -> CuspEstimate:
    """Blow-up time of a degree-2 real map ``a w + b w^2``.

    With ``C_1 = a^2 b`` conserved, the (3,2) cusp forms when ``a = 2|b|``;
    the area at that moment fixes the time.
    """
    if state.degree > 2:
        raise DomainError("cusp time is available for degree <= 2 only")
    a = state.coeffs
    b = a[1] if a.size > 1 else 0.0
    if state.rate > 0:
        return CuspEstimate(math.inf, "never")
    if b == 0:
        return CuspEstimate(state.t + state.target_area(state.t) / (2 * np.pi), "exhaustion")
    C1 = float(state.conserved.C[0].real)
    bc = abs(np.cbrt(C1 / 4.0))
    area_c = np.pi * 6 * bc ** 2
    return CuspEstimate(state.t + (state.target_area(state.t) - area_c) / (2 * np.pi), "cusp")


def verify_pg_identity(state: PGState, dt: float, M: int = 64) -> float:
    """Max deviation of ``Im(conj(f_t) f_theta)`` from ``dA/dt / (2 pi)``.

    ``f_t`` is the centered difference of the coefficient trajectory over
    ``[t - dt, t + dt]``; the error is second order in ``dt``.
    """
    s = derivative_on_circle(state.map, M)
    f_theta = 1j * np.exp(1j * s.angles) * s.derivs
    if dt == 0:
        f_t = np.zeros(M, dtype=complex)
    else:
        fwd = pg_step(state, dt)
        bwd = pg_step(state, -dt)
        ft_map = (fwd.coeffs - bwd.coeffs) / (2 * dt)
        w = np.exp(1j * s.angles)
        f_t = sum(c * w ** (k + 1) for k, c in enumerate(ft_map))
    target = state.rate / (2 * np.pi)
    return float(np.max(np.abs(np.imag(np.conj(f_t) * f_theta) - target)))
