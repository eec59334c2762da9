"""
Weak-solution diagnostics: the field

    Psi(z) = exp(V(z) + sum_k w_k log|z - z_k|),

its critical set ``V'(z) + C_mu(z) = 0`` (with ``V' = V_x - i V_y`` and the
Cauchy transform ``C_mu(z) = sum_k w_k / (z - z_k)``), and a field-line
growth step that feeds mass to a discrete measure from a far circle.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree
from skimage import measure

from .errors import DomainError
from .potential import DiscreteMeasure, ExternalField, as_field

SUPPORT_TUBE = 1e-6
LOG_GUARD = 300.0
ARRIVAL_TUBE = 1e-3


def cauchy_transform(mu: DiscreteMeasure, z, guard: float = 1e-12):
    """``C_mu(z) = sum_k w_k / (z - z_k)``."""
    z = np.asarray(z, dtype=complex)
    d = z[..., None] - mu.points
    if np.any(np.abs(d) < guard):
        raise DomainError("evaluation point on the support of the measure")
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.sum(mu.weights / d, axis=-1)
    return out if out.ndim else complex(out)


def disk_area_measure(n: int, r: float = 1.0, mass: float = 1.0,
                      center: complex = 0.0) -> DiscreteMeasure:
    """Equal-weight sunflower discretization of the area measure of a disk."""
    k = np.arange(n) + 0.5
    golden = math.pi * (3.0 - math.sqrt(5.0))
    pts = center + r * np.sqrt(k / n) * np.exp(1j * golden * np.arange(n))
    return DiscreteMeasure.uniform(pts, mass=mass)


# ---------------------------------------------------------------- Psi

@dataclass(frozen=True)
class GridSpec:
    xmin: float
    xmax: float
    ymin: float
    ymax: float
    nx: int = 401
    ny: int = 401

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise DomainError("empty grid box")
        if self.nx < 3 or self.ny < 3:
            raise DomainError("grid needs at least 3 points per axis")

    @property
    def axes(self):
        return np.linspace(self.xmin, self.xmax, self.nx), np.linspace(self.ymin, self.ymax, self.ny)

    @property
    def spacing(self) -> float:
        return max((self.xmax - self.xmin) / (self.nx - 1), (self.ymax - self.ymin) / (self.ny - 1))

    def points(self) -> np.ndarray:
        x, y = self.axes
        return x[None, :] + 1j * y[:, None]      # shape (ny, nx)


@dataclass
class PsiField:
    V: ExternalField
    mu: Optional[DiscreteMeasure]
    grid: GridSpec

    def __post_init__(self):
        self.V = as_field(self.V)

    def valid_mask(self, z=None) -> np.ndarray:
        """Points at distance > 1e-6 from every support point."""
        z = self.grid.points() if z is None else np.asarray(z, dtype=complex)
        if self.mu is None or len(self.mu) == 0:
            return np.ones(z.shape, dtype=bool)
        dist, _ = cKDTree(np.column_stack([self.mu.points.real, self.mu.points.imag])).query(
            np.column_stack([z.real.ravel(), z.imag.ravel()]))
        return (dist > SUPPORT_TUBE).reshape(z.shape)


def log_psi(field: PsiField, z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    val = np.asarray(field.V(z.real, z.imag) if field.V.planar else field.V(z.real), dtype=float)
    if field.mu is not None and len(field.mu):
        with np.errstate(divide="ignore"):
            val = val + np.sum(field.mu.weights * np.log(np.abs(z[..., None] - field.mu.points)), axis=-1)
    return val


def psi_eval(field: PsiField, z):
    """``Psi`` where finite, ``log Psi`` where ``|log Psi| > 300``.

    Returns ``(values, is_log)``; points inside the support tube are NaN.
    """
    z = np.asarray(z, dtype=complex)
    lp = np.asarray(log_psi(field, z), dtype=float)
    ok = field.valid_mask(z)
    is_log = np.abs(lp) > LOG_GUARD
    with np.errstate(over="ignore"):
        vals = np.where(is_log, lp, np.exp(np.where(is_log, 0.0, lp)))
    vals = np.where(ok, vals, np.nan)
    return vals, is_log


def psi_gradient(field: PsiField, z):
    """``V'(z) + C_mu(z)``, equal to ``(d/dx - i d/dy) log Psi``."""
    z = np.asarray(z, dtype=complex)
    g = field.V.complex_gradient(z)
    if field.mu is not None and len(field.mu):
        g = g + cauchy_transform(field.mu, z, guard=0.0)
    return g


@dataclass
class GrowthFrontier:
    polylines: list = field(default_factory=list)     # complex arrays
    closed: list = field(default_factory=list)
    residuals: list = field(default_factory=list)     # max |V' + C| per polyline
    tolerances: list = field(default_factory=list)
    diagnostic: str = ""

    @property
    def count(self) -> int:
        return len(self.polylines)

    def to_rows(self):
        """``(component, closed, x, y)`` rows for CSV output."""
        for i, (pl, c) in enumerate(zip(self.polylines, self.closed)):
            for p in pl:
                yield i, int(c), p.real, p.imag


def _runs(mask: np.ndarray):
    idx = np.flatnonzero(np.diff(np.concatenate([[0], mask.astype(int), [0]])))
    return list(zip(idx[::2], idx[1::2]))


def _refine(field: PsiField, pts: np.ndarray, h: float, iters: int = 6) -> np.ndarray:
    """Gauss-Newton projection of vertices onto the zero set (the 2x2 Jacobian is
    rank one on a zero curve, so the pseudo-inverse step is used)."""
    z = pts.copy()
    e = 1e-7 * max(h, 1e-3)
    with np.errstate(invalid="ignore", divide="ignore"):
        for _ in range(iters):
            g = psi_gradient(field, z)
            jx = (psi_gradient(field, z + e) - g) / e
            jy = (psi_gradient(field, z + 1j * e) - g) / e
            J = np.stack([np.column_stack([jx.real, jy.real]),
                          np.column_stack([jx.imag, jy.imag])], axis=1)
            step = -np.einsum("nij,nj->ni", np.linalg.pinv(J, rcond=1e-8),
                              np.column_stack([g.real, g.imag]))
            z = z + step[:, 0] + 1j * step[:, 1]
    moved = np.abs(z - pts)
    return np.where(np.isfinite(z) & (moved <= 1.5 * h), z, pts)


def _join(pieces, join_tol):
    """Chain polylines whose endpoints meet (marching squares splits curves at saddles)."""
    pieces = [list(p) for p in pieces]
    done = []
    while pieces:
        seg, g, tol = pieces.pop()
        changed = True
        while changed:
            changed = False
            for i, (s2, g2, t2) in enumerate(pieces):
                ends = [(abs(seg[-1] - s2[0]), False, False), (abs(seg[-1] - s2[-1]), False, True),
                        (abs(seg[0] - s2[-1]), True, False), (abs(seg[0] - s2[0]), True, True)]
                dist, prepend, flip = min(ends, key=lambda e: e[0])
                if dist > join_tol:
                    continue
                if flip:
                    s2, g2, t2 = s2[::-1], g2[::-1], t2[::-1]
                if prepend:
                    seg, g, tol = (np.concatenate([s2, seg]), np.concatenate([g2, g]),
                                   np.concatenate([t2, tol]))
                else:
                    seg, g, tol = (np.concatenate([seg, s2]), np.concatenate([g, g2]),
                                   np.concatenate([tol, t2]))
                pieces.pop(i)
                changed = True
                break
        length = float(np.sum(np.abs(np.diff(seg))))
        closed = bool(abs(seg[-1] - seg[0]) <= join_tol and length > 4 * join_tol)
        done.append((seg, g, tol, closed))
    return done


def weak_boundary(field: PsiField, min_vertices: int = 8, tol_factor: float = 1.0,
                  refine: bool = True) -> GrowthFrontier:
    """Zero set of ``V' + C_mu`` on the grid.

    Zero contours of both real components are traced by marching squares;
    vertices are projected onto the zero set by a few Gauss-Newton steps
    (moves beyond 1.5 cells are rejected), and a vertex is kept when
    ``|V' + C_mu|`` there is below ``tol_factor`` times the local grid
    variation of the field, and kept runs of at least
    ``min_vertices`` vertices form the frontier. Curves traced from the
    imaginary part are added only where they do not duplicate curves already
    found from the real part. Pieces meeting end to end are chained; a chain
    is closed when its ends meet.
    """
    grid = field.grid
    Z = grid.points()
    ok = field.valid_mask(Z)
    G = psi_gradient(field, np.where(ok, Z, np.nan))
    h = grid.spacing
    x0, y0 = grid.xmin, grid.ymin
    dx = (grid.xmax - grid.xmin) / (grid.nx - 1)
    dy = (grid.ymax - grid.ymin) / (grid.ny - 1)
    pieces = []
    for part in (np.real, np.imag):
        F = part(G)
        if not np.any(np.isfinite(F)):
            continue
        for cnt in measure.find_contours(np.where(np.isfinite(F), F, np.nan), 0.0):
            pts = (x0 + cnt[:, 1] * dx) + 1j * (y0 + cnt[:, 0] * dy)
            if refine:
                pts = _refine(field, pts, h)
            with np.errstate(invalid="ignore", divide="ignore"):
                g0 = psi_gradient(field, pts)
                gx = psi_gradient(field, pts + h)
                gy = psi_gradient(field, pts + 1j * h)
            tol = tol_factor * np.maximum(np.abs(gx - g0), np.abs(gy - g0))
            good = np.isfinite(g0) & (np.abs(g0) <= tol)
            for a, b in _runs(good):
                if b - a >= 2:
                    pieces.append((part is np.real, pts[a:b], g0[a:b], tol[a:b]))
    # the real-part curves first; imaginary-part pieces only where they add coverage
    kept = []
    for is_re, seg, g, tol in sorted(pieces, key=lambda p: not p[0]):
        if kept and not is_re:
            allp = np.concatenate([k[0] for k in kept])
            d, _ = cKDTree(np.column_stack([allp.real, allp.imag])).query(
                np.column_stack([seg.real, seg.imag]))
            if np.median(d) < 2 * h:
                continue
        kept.append((seg, g, tol))
    out = GrowthFrontier()
    for seg, g, tol, closed in _join(kept, join_tol=4 * h):
        if seg.size < min_vertices:
            continue
        out.polylines.append(seg)
        out.closed.append(closed)
        out.residuals.append(float(np.max(np.abs(g))))
        out.tolerances.append(float(np.max(tol)))
    if not out.polylines:
        out.diagnostic = "no zero crossings of V' + C_mu on the grid"
    return out


# ---------------------------------------------------------------- field-line growth

@dataclass
class ArrivalReport:
    positions: np.ndarray      # arrival points (complex)
    start_angles: np.ndarray   # seeding angle of each arrived tracer
    targets: np.ndarray        # index of the nearest support atom at arrival
    dropped: int
    steps: int
    meta: dict = field(default_factory=dict)


def _check_inside(mu: DiscreteMeasure, R: float):
    if np.max(np.abs(mu.points)) >= R:
        raise DomainError("support must lie inside the seeding circle")


def advect_tracers(mu: DiscreteMeasure, R: float, m: int = 1000, noise: float = 0.0,
                   rng: Optional[np.random.Generator] = None, tube: float = ARRIVAL_TUBE,
                   h_max: float = 0.05, max_steps: int = 20_000) -> ArrivalReport:
    """Advect ``m`` tracers from equispaced points of ``|z| = R`` down the field lines.

    Velocity ``-conj(C_mu)/|C_mu|`` (unit speed towards the charges; the
    gradient of ``sum w log|z - z_k|`` is ``conj(C_mu)`` as a plane vector),
    integrated by the midpoint rule with step ``min(h_max, (d - tube)/2)``
    where ``d`` is the distance to the support. With ``noise > 0`` a Gaussian
    increment of standard deviation ``noise * sqrt(step)`` per component is
    added after each step. A tracer arrives on first entry into the
    ``tube``-neighbourhood of the support; tracers still travelling after
    ``max_steps`` are dropped.
    """
    pts = np.asarray(mu.points, dtype=complex)
    _check_inside(mu, R)
    if noise < 0:
        raise DomainError("noise must be >= 0")
    if noise > 0 and rng is None:
        raise DomainError("noisy advection needs an rng")
    tree = cKDTree(np.column_stack([pts.real, pts.imag]))
    theta = 2 * np.pi * np.arange(m) / m
    z = R * np.exp(1j * theta)
    active = np.ones(m, dtype=bool)
    arrived = np.zeros(m, dtype=bool)
    pos = np.zeros(m, dtype=complex)
    tgt = np.zeros(m, dtype=int)

    def velocity(zz):
        c = np.conj(cauchy_transform(mu, zz, guard=0.0))
        return -c / np.abs(c)

    steps = 0
    for steps in range(1, max_steps + 1):
        ia = np.flatnonzero(active)
        if ia.size == 0:
            break
        za = z[ia]
        d, _ = tree.query(np.column_stack([za.real, za.imag]))
        h = np.minimum(h_max, np.maximum(0.5 * (d - tube), 0.25 * tube))
        mid = za + 0.5 * h * velocity(za)
        zn = za + h * velocity(mid)
        if noise > 0:
            zn = zn + noise * np.sqrt(h) * (rng.standard_normal(ia.size) + 1j * rng.standard_normal(ia.size))
        z[ia] = zn
        d, j = tree.query(np.column_stack([zn.real, zn.imag]))
        hit = d <= tube
        if np.any(hit):
            k = ia[hit]
            arrived[k] = True
            active[k] = False
            pos[k] = zn[hit]
            tgt[k] = j[hit]
        # tracers that escape far beyond the seeding circle cannot return in budget
        far = np.abs(zn) > 10 * R
        active[ia[far]] = False
    dropped = int(m - arrived.sum())
    if dropped:
        warnings.warn(f"{dropped} tracers did not arrive and were dropped", RuntimeWarning, stacklevel=2)
    return ArrivalReport(pos[arrived], theta[arrived], tgt[arrived], dropped, steps,
                         {"R": R, "m": m, "noise": noise, "tube": tube,
                          "construction": "field-line arrival surrogate"})


def _append_arrivals(mu: DiscreteMeasure, rep: ArrivalReport, dt: float, sectors: int) -> DiscreteMeasure:
    if rep.positions.size == 0:
        raise DomainError("no tracer arrived; cannot distribute the mass increment")
    # histogram over (atom reached, arrival direction sector); one new atom per bin
    rel = rep.positions - mu.points[rep.targets]
    sector = np.floor((np.angle(rel) + np.pi) / (2 * np.pi) * sectors).astype(np.int64) % sectors
    key = rep.targets.astype(np.int64) * sectors + sector
    uniq, inv, counts = np.unique(key, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    centers = np.zeros(uniq.size, dtype=complex)
    np.add.at(centers, inv, rep.positions)
    centers /= counts
    w_new = dt * counts / counts.sum()
    return DiscreteMeasure(np.concatenate([mu.points.astype(complex), centers]),
                           np.concatenate([mu.weights, w_new]))


def ito_dla_step(mu: DiscreteMeasure, R: float, dt: float, noise: float,
                 rng: Optional[np.random.Generator], m: int = 1000,
                 tube: float = ARRIVAL_TUBE, sectors: int = 64, **kw) -> DiscreteMeasure:
    """Add mass ``dt`` at the arrival points of noisy field-line tracers.

    Arrivals are binned by the atom they reached and the direction sector
    (``sectors`` per atom) they came in from; each bin becomes a new atom at
    the mean arrival point carrying ``dt`` times its share of the counts.
    Existing atoms are kept unchanged, so supports only grow.
    """
    if dt < 0:
        raise DomainError("dt must be >= 0")
    if dt == 0:
        return mu
    rep = advect_tracers(mu, R, m=m, noise=noise, rng=rng, tube=tube, **kw)
    return _append_arrivals(mu, rep, dt, sectors)


def deterministic_dla_step(mu: DiscreteMeasure, R: float, dt: float, m: int = 1000,
                           tube: float = ARRIVAL_TUBE, sectors: int = 64, **kw) -> DiscreteMeasure:
    """:func:`ito_dla_step` without noise (no random numbers are drawn)."""
    return ito_dla_step(mu, R, dt, 0.0, None, m=m, tube=tube, sectors=sectors, **kw)
