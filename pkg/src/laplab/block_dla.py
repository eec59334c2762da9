"""
Multinomial block-deposition growth on conformal boundary segments.

The unit circle is cut into ``N`` equal arcs; their images under the current
map have lengths ``l_i = (2 pi / N) |f'(z_i)|``. Each step ``K`` blocks of area
``epsilon`` land on the segments with multinomial occupation numbers ``k_i``;
a block on segment ``i`` has height ``epsilon / l_i`` so the segment advances
by ``dn_i = epsilon k_i / l_i``. The boundary is then moved by one Euler step
of the Herglotz normal-velocity flow, which keeps the representation conformal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .conformal import PolyMap, Trajectory, area, next_pow2
from .dbm import (_powers, boundary_samples, from_work, herglotz_velocity, tail_ratio,
                  to_work)
from .errors import DomainError, ResolutionError, SingularityError

RNG_ALGORITHM = "numpy.random.Generator(PCG64)"
# Piecewise-constant velocities have slowly decaying spectra, so the tail guard
# here is much looser than for smooth DBM runs.
BLOCK_TAIL_GUARD = 1e-2


@dataclass(frozen=True)
class BlockModelConfig:
    N: int
    K: int
    epsilon: float
    steps: int = 100
    seed: int = 0
    landing: str = "uniform"
    lengths: str = "arc"

    def __post_init__(self):
        if self.N < 8:
            raise DomainError("N must be >= 8")
        if self.K < 1:
            raise DomainError("K must be >= 1")
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive")
        if self.landing not in ("uniform", "arclength"):
            raise DomainError("landing must be 'uniform' or 'arclength'")
        if self.lengths not in ("arc", "midpoint"):
            raise DomainError("lengths must be 'arc' or 'midpoint'")

    @property
    def kappa(self) -> float:
        return self.K / self.N


@dataclass(frozen=True)
class OccupationStep:
    k: np.ndarray
    l: np.ndarray
    h: np.ndarray
    dn: np.ndarray

    @property
    def deposited_area(self) -> float:
        return float(np.sum(self.k * self.h * self.l))


def segment_midpoints(N: int) -> np.ndarray:
    return (np.arange(N) + 0.5) * 2 * np.pi / N


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def segment_lengths(fmap: PolyMap, N: int, rule: str = "midpoint") -> np.ndarray:
    """Lengths of the images of the ``N`` equal arcs.

    ``midpoint``: ``l_i = (2 pi / N) |f'(e^{i phi_i})|`` at the arc midpoints.
    ``arc``: ``int |f'| dphi`` over each arc by 8-point Gauss-Legendre. The
    midpoint rule aliases boundary modes near ``N/2`` onto the segment grid
    with flipped sign, which turns the stabilizing length feedback into an
    instability over many steps; evolution therefore uses ``arc``.
    """
    from .conformal import derivative
    if rule == "midpoint":
        w = np.exp(1j * segment_midpoints(N))
        return (2 * np.pi / N) * np.abs(derivative(fmap, w))
    if rule == "arc":
        phi = (np.arange(N)[:, None] + 0.5 + 0.5 * _GL_X[None, :]) * 2 * np.pi / N
        return (np.abs(derivative(fmap, np.exp(1j * phi))) @ _GL_W) * np.pi / N
    raise DomainError(f"unknown length rule {rule!r}")


def landing_probabilities(lengths: np.ndarray, landing: str = "uniform") -> np.ndarray:
    """Cell probabilities of the multinomial draw.

    ``uniform`` is ``p_i = 1/N``. Because the segments are images of equal
    arcs this is also the harmonic measure seen from the map's centre.
    ``arclength`` weights by physical length, ``p_i ~ l_i`` (no screening).
    """
    N = lengths.size
    if landing == "uniform":
        return np.full(N, 1.0 / N)
    if landing == "arclength":
        return lengths / lengths.sum()
    raise DomainError(f"unknown landing mode {landing!r}")


def multinomial_sequential(K: int, p: np.ndarray, rng: np.random.Generator,
                           size: Optional[int] = None) -> np.ndarray:
    """Multinomial draws by sequential binomial conditioning.

    Cell ``i`` receives ``Binomial(remaining, p_i / sum_{j>=i} p_j)``; the
    last cell takes the remainder, so every row sums to ``K`` exactly.
    """
    p = np.asarray(p, dtype=float)
    N = p.size
    shape = (N,) if size is None else (size, N)
    out = np.zeros(shape, dtype=np.int64)
    remaining = np.full(() if size is None else (size,), K, dtype=np.int64)
    tail = 1.0
    for i in range(N - 1):
        q = min(1.0, max(0.0, p[i] / tail)) if tail > 0 else 0.0
        ki = rng.binomial(remaining, q)
        out[..., i] = ki
        remaining = remaining - ki
        tail -= p[i]
    out[..., N - 1] = remaining
    return out


def make_step(k: np.ndarray, lengths: np.ndarray, epsilon: float) -> OccupationStep:
    h = epsilon / lengths
    return OccupationStep(np.asarray(k), lengths, h, k * h)


def sample_occupation(lengths: np.ndarray, K: int, epsilon: float,
                      rng: np.random.Generator, landing: str = "uniform") -> OccupationStep:
    if K < 1:
        raise DomainError("K must be >= 1")
    k = multinomial_sequential(K, landing_probabilities(lengths, landing), rng)
    return make_step(k, lengths, epsilon)


def cell_average_velocity(dn: np.ndarray, M: int) -> np.ndarray:
    """Average the piecewise-constant segment field over each sample's cell.

    Sample ``j`` sits at ``2 pi j / M`` and represents the window of width
    ``2 pi / M`` centred on it; windows straddling a segment boundary get the
    length-weighted mix of both neighbours.
    """
    N = dn.size
    # cumulative integral of the field in units of segments, periodic
    cum = np.concatenate([[0.0], np.cumsum(dn)])
    total = cum[-1]

    def F(x):
        # x measured in segment units, may be negative or exceed N
        n_wrap = np.floor(x / N)
        xr = x - n_wrap * N
        i = np.minimum(np.floor(xr).astype(int), N - 1)
        return n_wrap * total + cum[i] + (xr - i) * dn[i]

    centre = np.arange(M) * N / M
    half = 0.5 * N / M
    return (F(centre + half) - F(centre - half)) / (2 * half)


def _area_form(orientation: str, n: int) -> np.ndarray:
    return np.pi * _powers(orientation, n)


def _area_exact_scale(orientation: str, c: np.ndarray, vel: np.ndarray, added: float) -> float:
    """Root near 1 of ``area(c + lam vel) = area(c) + added`` (area is quadratic)."""
    w = _area_form(orientation, c.size)
    a = float(np.sum(w * np.abs(vel) ** 2))
    b = float(2 * np.sum(w * np.real(np.conj(c) * vel)))
    if b <= 0:
        return 1.0
    if abs(a) < 1e-300:
        return added / b
    disc = b * b + 4 * a * added
    if disc < 0:
        return 1.0
    # numerically stable form of (-b + sqrt(disc)) / (2a)
    return 2 * added / (b + np.sqrt(disc))


def apply_step(fmap: PolyMap, occ: OccupationStep, M: Optional[int] = None,
               tail_guard: float = BLOCK_TAIL_GUARD, area_exact: bool = True) -> PolyMap:
    """Advance the boundary by the normal displacement field ``occ.dn``.

    One Euler step of ``df = z f' S[dn / |f'|]``. To first order the enclosed
    area grows by ``sum dn_i l_i = K epsilon``; a normal advance of a curved
    boundary also sweeps a second-order area ``(1/2) int kappa dn^2 ds``. With
    ``area_exact`` the step is rescaled by the scalar that makes the added
    area exactly ``sum k_i h_i l_i``.
    """
    N = occ.dn.size
    if M is None:
        M = default_modes(N)
    c = to_work(fmap, M)
    _, _, wfp, _ = boundary_samples(fmap.orientation, c, M)
    v = cell_average_velocity(occ.dn, M)
    vel, _ = herglotz_velocity(fmap.orientation, c, v / np.abs(wfp), M)
    if area_exact:
        vel = vel * _area_exact_scale(fmap.orientation, c, vel, occ.deposited_area)
    new = c + vel
    if not np.all(np.isfinite(new)):
        raise SingularityError("non-finite coefficients after block step")
    tr = tail_ratio(fmap.orientation, new)
    if tr > tail_guard:
        raise ResolutionError(f"resolution exceeded (tail {tr:.2e}); try M={2 * M}",
                              suggested_modes=2 * M)
    _, _, wfp_new, _ = boundary_samples(fmap.orientation, new, M)
    mf = float(np.min(np.abs(wfp_new)))
    if mf < 1e-6:
        raise SingularityError("finite-time singularity approached", min_fprime=mf)
    # critical points crossing the circle show up as a jump in the winding of w f'
    winding = np.sum(np.angle(np.roll(wfp_new, -1) / wfp_new)) / (2 * np.pi)
    if round(winding) != 1:
        raise SingularityError("map lost local univalence", min_fprime=mf)
    return from_work(fmap.orientation, new)


def default_modes(N: int) -> int:
    return max(64, next_pow2(4 * N))


@dataclass
class AggregationResult:
    trajectory: Trajectory
    k: np.ndarray                 # (steps, N) occupation numbers
    area: np.ndarray              # measured area after each step (incl. step 0)
    bookkeeping_area: np.ndarray  # A0 + step * K * epsilon
    min_fprime: np.ndarray
    meta: dict = field(default_factory=dict)

    def kappa_ratios(self) -> np.ndarray:
        """Empirical sample of ``k_i / kappa`` (flattened over steps and segments)."""
        kappa = self.meta["kappa"]
        return (self.k / kappa).ravel()


def run_aggregation(cfg: BlockModelConfig, init: PolyMap, M: Optional[int] = None,
                    save_every: int = 1, rng: Optional[np.random.Generator] = None
                    ) -> AggregationResult:
    """Iterate draw-and-deposit for ``cfg.steps`` steps from ``init``.

    Stops early (``trajectory.stop_reason``) when a numerical guard trips.
    """
    if M is None:
        M = default_modes(cfg.N)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    fmap = init
    traj = Trajectory(meta={"N": cfg.N, "K": cfg.K, "epsilon": cfg.epsilon,
                            "kappa": cfg.kappa, "seed": cfg.seed, "M": M,
                            "landing": cfg.landing,
                            "lengths": cfg.lengths, "rng": RNG_ALGORITHM})
    traj.append(0, fmap)
    A0 = area(fmap)
    ks, areas, mfs = [], [A0], []
    c = to_work(fmap, M)
    _, _, wfp, _ = boundary_samples(fmap.orientation, c, M)
    mfs.append(float(np.min(np.abs(wfp))))
    for step in range(1, cfg.steps + 1):
        lengths = segment_lengths(fmap, cfg.N, cfg.lengths)
        occ = sample_occupation(lengths, cfg.K, cfg.epsilon, rng, cfg.landing)
        try:
            fmap = apply_step(fmap, occ, M)
        except (SingularityError, ResolutionError) as exc:
            traj.stop_reason = type(exc).__name__
            traj.meta["stopped_at"] = step
            break
        ks.append(occ.k)
        areas.append(area(fmap))
        c = to_work(fmap, M)
        _, _, wfp, _ = boundary_samples(fmap.orientation, c, M)
        mfs.append(float(np.min(np.abs(wfp))))
        if step % save_every == 0 or step == cfg.steps:
            traj.append(step, fmap)
    n_done = len(ks)
    k = np.array(ks, dtype=np.int64).reshape(n_done, cfg.N)
    book = A0 + np.arange(n_done + 1) * cfg.K * cfg.epsilon
    return AggregationResult(traj, k, np.array(areas), book, np.array(mfs),
                             meta=dict(traj.meta))


def replica_seeds(master_seed: int, n: int) -> list[int]:
    """Independent per-replica seeds derived from ``(master_seed, index)``."""
    children = np.random.SeedSequence(master_seed).spawn(n)
    return [int(ch.generate_state(1, dtype=np.uint64)[0]) for ch in children]


def run_ensemble(cfg: BlockModelConfig, init: PolyMap, replicas: int,
                 M: Optional[int] = None, save_every: Optional[int] = None) -> list[AggregationResult]:
    from dataclasses import replace
    save_every = cfg.steps if save_every is None else save_every
    return [run_aggregation(replace(cfg, seed=s), init, M, save_every)
            for s in replica_seeds(cfg.seed, replicas)]


def ensemble_mean_map(results: list[AggregationResult], index: int = -1) -> PolyMap:
    """Replica average of the coefficient vectors at snapshot ``index``.

    The boundary is linear in the coefficients, so this is the pointwise mean
    boundary at equal conformal parameter.
    """
    maps = [r.trajectory.maps[index] for r in results]
    n = max(m.coeffs.size for m in maps)
    acc = np.zeros(n, dtype=complex)
    for m in maps:
        acc[: m.coeffs.size] += m.coeffs
    return PolyMap(maps[0].orientation, acc / len(maps))
