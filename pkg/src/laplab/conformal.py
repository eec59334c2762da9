"""
Polynomial and Laurent conformal maps of the unit disk.

Two orientations are supported:

* ``interior``: ``f(w) = sum_{k=1..d} a_k w^k`` maps the closed unit disk onto
  a bounded domain with ``f(0) = 0``. ``coeffs`` holds ``a_1 .. a_d``.
* ``exterior``: ``f(w) = c_1 w + c_0 + sum_{k>=1} c_{-k} w^{-k}`` maps
  ``|w| >= 1`` onto the exterior of a compact set. ``coeffs`` holds
  ``c_1, c_0, c_{-1}, ...`` and ``c_1`` is real and positive.

Geometric functionals (area, harmonic moments, conformal radius) are computed
here and reused by every evolution module.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import AliasingError, DomainError

_SIDE_TOL = 1e-12


def _is_pow2(m: int) -> bool:
    return m >= 1 and (m & (m - 1)) == 0


def next_pow2(m: int) -> int:
    return 1 << max(0, int(math.ceil(math.log2(max(m, 1)))))


@dataclass(frozen=True)
class PolyMap:
    orientation: str
    coeffs: np.ndarray

    def __post_init__(self):
        if self.orientation not in ("interior", "exterior"):
            raise ValueError(f"unknown orientation {self.orientation!r}")
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=complex)).copy()
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coeffs must be a non-empty 1-d sequence")
        if self.orientation == "interior":
            # trailing zeros carry no information; keep at least a_1
            nz = np.flatnonzero(c)
            c = c[: (nz[-1] + 1 if nz.size else 1)]
        if c[0] == 0:
            raise ValueError("leading coefficient must be nonzero")
        if self.orientation == "exterior":
            if abs(c[0].imag) > 1e-14 * abs(c[0]) or c[0].real <= 0:
                raise ValueError("exterior maps need c_1 real and positive")
            c[0] = c[0].real
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def interior(cls, coeffs: Sequence[complex]) -> "PolyMap":
        return cls("interior", np.asarray(coeffs, dtype=complex))

    @classmethod
    def exterior(cls, coeffs: Sequence[complex]) -> "PolyMap":
        return cls("exterior", np.asarray(coeffs, dtype=complex))

    @property
    def powers(self) -> np.ndarray:
        i = np.arange(self.coeffs.size)
        return i + 1 if self.orientation == "interior" else 1 - i

    @property
    def degree(self) -> int:
        """Largest |power| carried by the coefficient vector."""
        return int(np.max(np.abs(self.powers)))

    @property
    def leading(self) -> complex:
        return complex(self.coeffs[0])

    def __call__(self, w):
        return evaluate(self, w)

    def __eq__(self, other):
        if not isinstance(other, PolyMap):
            return NotImplemented
        return (self.orientation == other.orientation
                and self.coeffs.shape == other.coeffs.shape
                and bool(np.all(self.coeffs == other.coeffs)))

    def __hash__(self):
        return hash((self.orientation, self.coeffs.tobytes()))

    def to_dict(self) -> dict:
        return {"orientation": self.orientation,
                "coeffs": [[float(c.real), float(c.imag)] for c in self.coeffs]}

    @classmethod
    def from_dict(cls, d: dict) -> "PolyMap":
        coeffs = []
        for c in d["coeffs"]:
            if isinstance(c, (list, tuple)):
                coeffs.append(complex(c[0], c[1] if len(c) > 1 else 0.0))
            else:
                coeffs.append(complex(c))
        return cls(d.get("orientation", "interior"), np.array(coeffs, dtype=complex))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "PolyMap":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class BoundarySample:
    angles: np.ndarray
    points: np.ndarray
    derivs: np.ndarray

    @property
    def M(self) -> int:
        return self.angles.size


@dataclass(frozen=True)
class MomentVector:
    """``t0`` is area/pi; ``C[k-1]`` is the harmonic moment C_k."""
    t0: float
    C: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate([[self.t0], self.C])


@dataclass
class Trajectory:
    """Time series of maps shared by the evolution modules."""
    times: list = field(default_factory=list)
    maps: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    stop_reason: str = "t_end"

    def append(self, t: float, fmap: PolyMap) -> None:
        self.times.append(float(t))
        self.maps.append(fmap)

    def __len__(self):
        return len(self.times)

    def to_dict(self) -> dict:
        return {"times": list(self.times),
                "maps": [m.to_dict() for m in self.maps],
                "meta": self.meta, "stop_reason": self.stop_reason}

    @classmethod
    def from_dict(cls, d: dict) -> "Trajectory":
        return cls(list(d["times"]), [PolyMap.from_dict(m) for m in d["maps"]],
                   dict(d.get("meta", {})), d.get("stop_reason", "t_end"))


def _check_side(fmap: PolyMap, w: np.ndarray) -> None:
    r = np.abs(w)
    if fmap.orientation == "interior":
        bad = np.any(r > 1 + _SIDE_TOL)
    else:
        bad = np.any(r < 1 - _SIDE_TOL)
    if bad:
        raise DomainError("wrong side of reference circle")


def evaluate(fmap: PolyMap, w):
    """Horner evaluation of ``f(w)``."""
    w = np.asarray(w, dtype=complex)
    _check_side(fmap, w)
    c = fmap.coeffs
    if fmap.orientation == "interior":
        acc = np.zeros_like(w)
        for a in c[::-1]:
            acc = acc * w + a
        out = acc * w
    else:
        u = 1.0 / w
        acc = np.zeros_like(w)
        for a in c[:1:-1]:
            acc = acc * u + a
        out = c[0] * w + (c[1] if c.size > 1 else 0.0) + acc * u
    return out[()] if out.ndim == 0 else out


def derivative(fmap: PolyMap, w):
    """``f'(w)`` by Horner evaluation of the differentiated series."""
    w = np.asarray(w, dtype=complex)
    _check_side(fmap, w)
    p = fmap.powers
    dc = fmap.coeffs * p
    if fmap.orientation == "interior":
        acc = np.zeros_like(w)
        for a in dc[::-1]:
            acc = acc * w + a
        out = acc
    else:
        # f' = c_1 + sum_{k>=1} (-k) c_{-k} w^{-k-1}
        u = 1.0 / w
        acc = np.zeros_like(w)
        for a in dc[:1:-1]:
            acc = acc * u + a
        out = dc[0] + acc * u * u
    return out[()] if out.ndim == 0 else out


def _spectrum(powers: np.ndarray, coeffs: np.ndarray, M: int) -> np.ndarray:
    spec = np.zeros(M, dtype=complex)
    np.add.at(spec, np.mod(powers, M), coeffs)
    return spec


def derivative_on_circle(fmap: PolyMap, M: int) -> BoundarySample:
    """Sample ``f`` and ``f'`` at ``M`` equispaced angles using the FFT.

    Exact (no aliasing) whenever ``M >= 2*degree + 2``.
    """
    M = int(M)
    if not _is_pow2(M):
        raise AliasingError(f"M={M} is not a power of two")
    if M < 2 * fmap.degree + 2:
        raise AliasingError(f"M={M} too small for degree {fmap.degree}; aliasing")
    p = fmap.powers
    theta = 2 * np.pi * np.arange(M) / M
    pts = M * np.fft.ifft(_spectrum(p, fmap.coeffs, M))
    # w f'(w) has the same powers with coefficients p*c_p
    wfp = M * np.fft.ifft(_spectrum(p, p * fmap.coeffs, M))
    derivs = wfp * np.exp(-1j * theta)
    return BoundarySample(theta, pts, derivs)


def coeffs_from_boundary(points: np.ndarray, orientation: str, ncoeffs: int) -> np.ndarray:
    """Recover the coefficient vector from equispaced boundary samples."""
    M = points.size
    spec = np.fft.fft(points) / M
    i = np.arange(ncoeffs)
    p = i + 1 if orientation == "interior" else 1 - i
    return spec[np.mod(p, M)]


def min_abs_derivative(fmap: PolyMap, oversample: int = 4) -> float:
    M = next_pow2(oversample * (2 * fmap.degree + 2))
    M = max(M, 64)
    return float(np.min(np.abs(derivative_on_circle(fmap, M).derivs)))


def is_regular(fmap: PolyMap, tol: float = 0.0) -> bool:
    """Sampled univalence test: ``min |f'| > tol`` on a 4x oversampled circle."""
    return min_abs_derivative(fmap) > tol


def derivative_winding(fmap: PolyMap, M: int = 0) -> int:
    """Winding number of ``f'`` around 0 along the circle.

    By the argument principle this counts critical points of ``f`` in the
    reference domain (inside for interior maps, outside for exterior maps,
    with the sign flipped), so a locally univalent map gives 0.
    """
    M = M or max(256, next_pow2(8 * (2 * fmap.degree + 2)))
    d = derivative_on_circle(fmap, M).derivs
    dphi = np.angle(np.roll(d, -1) / d)
    return int(round(np.sum(dphi) / (2 * np.pi)))


def area(fmap: PolyMap) -> float:
    """Area enclosed by the image of the unit circle.

    For interior maps this is ``pi * sum k |a_k|^2``; for exterior maps it is
    the area of the bounded complement, ``pi * (c_1^2 - sum k |c_{-k}|^2)``.
    """
    if not is_regular(fmap) or derivative_winding(fmap) != 0:
        warnings.warn("map is not locally univalent; "
                      "area counted with multiplicity", RuntimeWarning, stacklevel=2)
    return float(np.pi * np.sum(fmap.powers * np.abs(fmap.coeffs) ** 2))


def area_quadrature(fmap: PolyMap, M: int = 256) -> float:
    """Boundary quadrature ``(1/2) \\oint Im(conj(f) f_theta) dtheta``."""
    s = derivative_on_circle(fmap, M)
    w = np.exp(1j * s.angles)
    f_theta = 1j * w * s.derivs
    return float(0.5 * np.mean(np.imag(np.conj(s.points) * f_theta)) * 2 * np.pi)


def _moment_integrals(fmap: PolyMap, m: int, nr: int, nt: int) -> np.ndarray:
    x, wx = np.polynomial.legendre.leggauss(nr)
    r = 0.5 * (x + 1.0)
    wr = 0.5 * wx
    theta = 2 * np.pi * np.arange(nt) / nt
    w = r[:, None] * np.exp(1j * theta)[None, :]
    f = evaluate(fmap, w)
    jac = np.abs(derivative(fmap, w)) ** 2 * r[:, None]
    weights = wr[:, None] * (2 * np.pi / nt) * jac
    out = np.empty(m + 1, dtype=complex)
    fn = np.ones_like(f)
    for n in range(m + 1):
        out[n] = np.sum(fn * weights) / np.pi
        fn = fn * f
    return out


def harmonic_moments(fmap: PolyMap, m: int, rtol: float = 1e-10,
                     max_refine: int = 8) -> MomentVector:
    """Harmonic moments ``C_n = (1/pi) \\iint_D z^n dx dy`` for ``n = 1..m``.

    The integral is pulled back to the unit disk (Jacobian ``|f'|^2``) and
    evaluated with Gauss-Legendre in ``r`` times the trapezoid rule in
    ``theta``; both resolutions are doubled until successive estimates agree
    to ``rtol`` relative to the moment scale.
    """
    if m < 1:
        raise DomainError("need m >= 1")
    if fmap.orientation != "interior":
        raise DomainError("harmonic moments implemented for interior maps only")
    d = fmap.degree
    nr = max(8, (d * (m + 2)) // 2 + 2)
    nt = next_pow2(2 * d * (m + 2) + 2)
    prev = _moment_integrals(fmap, m, nr, nt)
    for _ in range(max_refine):
        nr, nt = 2 * nr, 2 * nt
        cur = _moment_integrals(fmap, m, nr, nt)
        t0 = abs(cur[0].real)
        scale = np.array([max(abs(cur[n]), t0 ** (1 + n / 2)) for n in range(m + 1)])
        if np.all(np.abs(cur - prev) <= rtol * scale):
            return MomentVector(float(cur[0].real), cur[1:].copy())
        prev = cur
    raise RuntimeError("harmonic moment quadrature failed to converge")


def harmonic_moments_exact(fmap: PolyMap, m: int) -> MomentVector:
    """Closed-form moments of a polynomial interior map.

    ``C_n = Res_{w=0} f^n f' conj(f)(1/w)`` reduces to
    ``sum_k conj(a_k) [w^{k-1}] (f^n f')``; exact up to rounding.
    """
    if fmap.orientation != "interior":
        raise DomainError("harmonic moments implemented for interior maps only")
    a = fmap.coeffs
    d = a.size
    fpoly = np.concatenate([[0.0], a])          # ascending powers of f
    fprime = a * np.arange(1, d + 1)            # ascending powers of f'
    out = np.empty(m + 1, dtype=complex)
    prod = fprime.copy()
    for n in range(m + 1):
        k = np.arange(1, d + 1)
        idx = k - 1
        take = idx < prod.size
        out[n] = np.sum(np.conj(a[take]) * prod[idx[take]])
        # only coefficients up to w^{d-1} are ever needed
        prod = np.convolve(prod, fpoly)[:d]
    return MomentVector(float(out[0].real), out[1:].copy())


def conformal_radius(fmap: PolyMap) -> float:
    return abs(fmap.leading)


def reduced_modulus(fmap: PolyMap) -> float:
    """Reduced modulus at infinity (exterior) or at ``f(0)`` (interior)."""
    R = conformal_radius(fmap)
    sign = -1.0 if fmap.orientation == "exterior" else 1.0
    return sign * math.log(R) / (2 * np.pi)


def curvature(fmap: PolyMap, M: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Signed curvature of the boundary curve and its arclength density.

    ``kappa = (1 + Re(w f''/f')) / |f'|`` on ``|w| = 1``; both orientations
    trace the boundary counterclockwise.
    """
    M = max(M, next_pow2(2 * fmap.degree + 4))
    theta = 2 * np.pi * np.arange(M) / M
    w = np.exp(1j * theta)
    p = fmap.powers
    # w f' and w^2 f'' as Laurent sums
    wfp = np.sum((p * fmap.coeffs)[None, :] * w[:, None] ** p[None, :], axis=1)
    w2fpp = np.sum((p * (p - 1) * fmap.coeffs)[None, :] * w[:, None] ** p[None, :], axis=1)
    kappa = (1.0 + np.real(w2fpp / wfp)) / np.abs(wfp)
    return kappa, np.abs(wfp)


def curvature_variance(fmap: PolyMap, M: int = 256) -> float:
    """Arclength-weighted variance of the boundary curvature."""
    kappa, ds = curvature(fmap, M)
    wts = ds / ds.sum()
    mean = np.sum(wts * kappa)
    return float(np.sum(wts * (kappa - mean) ** 2))


def boundary_points(fmap: PolyMap, M: int = 512) -> np.ndarray:
    theta = 2 * np.pi * np.arange(M) / M
    return evaluate(fmap, np.exp(1j * theta))


def map_from_laurent(orientation: str, powers: np.ndarray, coeffs: np.ndarray) -> PolyMap:
    """Build a PolyMap from (power, coefficient) pairs."""
    if orientation == "interior":
        n = int(powers.max())
        c = np.zeros(n, dtype=complex)
        np.add.at(c, powers - 1, coeffs)
    else:
        n = int(1 - powers.min()) + 1
        c = np.zeros(n, dtype=complex)
        np.add.at(c, 1 - powers, coeffs)
    return PolyMap(orientation, c)
