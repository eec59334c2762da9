"""Cross-module analysis: curve distances, trajectory comparison, box counting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats
from scipy.spatial.distance import directed_hausdorff

from .conformal import PolyMap, Trajectory, boundary_points, harmonic_moments_exact
from .errors import DomainError


def hausdorff_points(A, B) -> float:
    """Symmetric Hausdorff distance between two finite planar point sets."""
    a = np.column_stack([np.real(A), np.imag(A)])
    b = np.column_stack([np.real(B), np.imag(B)])
    return max(directed_hausdorff(a, b)[0], directed_hausdorff(b, a)[0])


def _point_to_polygon(P: np.ndarray, Q: np.ndarray, chunk: int = 512) -> np.ndarray:
    # distance from each point of P to the closed polygon through Q
    a = Q
    d = np.roll(Q, -1) - Q
    dd = np.maximum(np.abs(d) ** 2, 1e-300)
    out = np.empty(P.size)
    for lo in range(0, P.size, chunk):
        p = P[lo: lo + chunk, None]
        s = np.clip(np.real((p - a) * np.conj(d)) / dd, 0.0, 1.0)
        out[lo: lo + chunk] = np.min(np.abs(p - (a + s * d)), axis=1)
    return out


def curve_hausdorff(A, B) -> float:
    """Hausdorff distance between two closed polygons given by their vertices.

    Vertices are measured against the segments of the other polygon, so two
    samplings of the same curve are at distance ``O(h^2)`` rather than ``O(h)``.
    """
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    return float(max(_point_to_polygon(A, B).max(), _point_to_polygon(B, A).max()))


def map_hausdorff(f: PolyMap, g: PolyMap, M: int = 2048) -> float:
    return curve_hausdorff(boundary_points(f, M), boundary_points(g, M))


# ---------------------------------------------------------------- trajectories

@dataclass
class ComparisonReport:
    times: np.ndarray
    hausdorff: np.ndarray
    moment_diff: np.ndarray            # max |C_k(a) - C_k(b)| per time
    meta: dict = field(default_factory=dict)

    @property
    def max_hausdorff(self) -> float:
        return float(np.max(self.hausdorff)) if self.hausdorff.size else 0.0

    def to_rows(self):
        for t, h, m in zip(self.times, self.hausdorff, self.moment_diff):
            yield t, h, m


def _padded(fmap: PolyMap, n: int) -> np.ndarray:
    c = np.zeros(n, dtype=complex)
    c[: fmap.coeffs.size] = fmap.coeffs
    return c


def interpolate_map(traj: Trajectory, t: float) -> PolyMap:
    """Linear interpolation of the coefficients between snapshots."""
    times = np.asarray(traj.times, dtype=float)
    if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
        raise DomainError(f"t={t} outside the trajectory")
    j = int(np.searchsorted(times, t))
    if j < times.size and abs(times[j] - t) <= 1e-12:
        return traj.maps[j]
    if j == 0:
        return traj.maps[0]
    if j >= times.size:
        return traj.maps[-1]
    f0, f1 = traj.maps[j - 1], traj.maps[j]
    n = max(f0.coeffs.size, f1.coeffs.size)
    s = (t - times[j - 1]) / (times[j] - times[j - 1])
    return PolyMap(f0.orientation, (1 - s) * _padded(f0, n) + s * _padded(f1, n))


def compare_trajectories(a: Trajectory, b: Trajectory, times: Optional[Sequence[float]] = None,
                         M: int = 2048, moments: int = 3) -> ComparisonReport:
    """Hausdorff distance of the boundaries and moment differences over time.

    The comparison runs on ``times`` (default: the snapshots of ``a`` inside
    the common time range), interpolating either trajectory where needed.
    """
    ta, tb = np.asarray(a.times, dtype=float), np.asarray(b.times, dtype=float)
    lo, hi = max(ta[0], tb[0]), min(ta[-1], tb[-1])
    if lo > hi + 1e-12:
        raise DomainError("trajectories cover disjoint time ranges")
    if times is None:
        times = ta[(ta >= lo - 1e-12) & (ta <= hi + 1e-12)]
    times = np.asarray(times, dtype=float)
    H = np.empty(times.size)
    D = np.empty(times.size)
    for i, t in enumerate(times):
        fa, fb = interpolate_map(a, t), interpolate_map(b, t)
        H[i] = map_hausdorff(fa, fb, M)
        if fa.orientation == fb.orientation:
            ca = harmonic_moments_exact(fa, moments).C
            cb = harmonic_moments_exact(fb, moments).C
            D[i] = float(np.max(np.abs(ca - cb)))
        else:
            D[i] = math.nan
    return ComparisonReport(times, H, D, {"M": M, "moments": moments})


def ensemble_envelope(maps: Sequence[PolyMap], reference: PolyMap, M: int = 1024) -> tuple[float, float]:
    """Distance of the ensemble-mean boundary to ``reference`` and the largest
    pointwise standard deviation of the ensemble boundaries."""
    n = max(f.coeffs.size for f in maps)
    mean = PolyMap(maps[0].orientation, np.mean([_padded(f, n) for f in maps], axis=0))
    pts = np.array([boundary_points(f, M) for f in maps])
    sd = float(np.max(np.sqrt(np.var(pts.real, axis=0, ddof=1) + np.var(pts.imag, axis=0, ddof=1))))
    return map_hausdorff(mean, reference, M), sd


# ---------------------------------------------------------------- box counting

@dataclass
class BoxCountResult:
    dimension: float
    stderr: float
    r_squared: float
    scales: np.ndarray
    counts: np.ndarray
    residuals: np.ndarray

    def interval(self, level: float = 0.95) -> tuple[float, float]:
        q = stats.t.ppf(0.5 + level / 2, max(self.scales.size - 2, 1))
        return self.dimension - q * self.stderr, self.dimension + q * self.stderr


def default_scales(points, count: int = 8) -> np.ndarray:
    """Box sizes ``extent / n`` for integers ``n`` from 1 to ``sqrt(#points)``
    (at most ``count`` of them, geometrically spaced)."""
    P = _as_xy(points)
    extent = float(np.max(np.ptp(P, axis=0)))
    n_max = max(int(math.sqrt(P.shape[0])), 4)
    n = np.unique(np.round(np.logspace(0, math.log10(n_max), count)).astype(int))
    return extent / n


def _as_xy(points) -> np.ndarray:
    P = np.asarray(points)
    if np.iscomplexobj(P) or P.ndim == 1:
        P = np.column_stack([np.real(P), np.imag(P)])
    return P.astype(float)


def box_counting_dimension(points, scales: Optional[Sequence[float]] = None,
                           min_points: int = 1000) -> BoxCountResult:
    """Slope of ``log N(h)`` against ``log(1/h)`` over the box sizes ``scales``.

    Boxes are aligned with the lower-left corner of the bounding box; the
    default sizes divide the bounding box exactly.
    """
    P = _as_xy(points)
    if P.shape[0] < min_points:
        raise DomainError(f"need at least {min_points} points")
    scales = default_scales(P) if scales is None else np.asarray(scales, dtype=float)
    scales = np.unique(scales)
    if scales.size < 4 or np.any(scales <= 0) or math.log10(scales.max() / scales.min()) < 2 - 1e-9:
        raise DomainError("need at least 4 positive scales spanning 2 decades")
    origin = P.min(axis=0)
    # shrink by one ulp-ish so points on the far edge stay in the last box
    Q = (P - origin) * (1 - 1e-12)
    counts = np.array([np.unique(np.floor(Q / h).astype(np.int64), axis=0).shape[0] for h in scales],
                      dtype=float)
    x, y = np.log(1 / scales), np.log(counts)
    fit = stats.linregress(x, y)
    resid = y - (fit.intercept + fit.slope * x)
    return BoxCountResult(float(fit.slope), float(fit.stderr), float(fit.rvalue ** 2), scales,
                          counts, resid)
