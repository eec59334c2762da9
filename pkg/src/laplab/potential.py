"""
Logarithmic potential theory on the line and in the plane.

Energy convention: the discrete logarithmic energy sums over ordered pairs,

    W = - sum_{i != j} w_i w_j log|z_i - z_j|,

so unit weights give twice the usual ``sum_{i<j}``. The total energy is
``E = W + 2 sum_i w_i V(z_i)`` and the total potential is
``U(z) = -sum_i w_i log|z - z_i| + V(z)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import sympy
from scipy import linalg, optimize

from .errors import ConfigError, ConvergenceError, DomainError

ENERGY_CONVENTION = "ordered pairs i != j"


# ---------------------------------------------------------------- measures

@dataclass(frozen=True)
class DiscreteMeasure:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.points))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if p.shape != w.shape:
            raise DomainError("points and weights differ in length")
        if np.any(w < 0) or not w.sum() > 0:
            raise DomainError("weights must be nonnegative with positive mass")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points, mass: Optional[float] = None) -> "DiscreteMeasure":
        """Equal weights; unit atoms by default, ``mass / n`` each otherwise."""
        p = np.atleast_1d(np.asarray(points))
        w = np.ones(p.size) if mass is None else np.full(p.size, mass / p.size)
        return cls(p, w)

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def __len__(self):
        return self.points.size


# ---------------------------------------------------------------- external fields

_X, _Y = sympy.symbols("x y", real=True)


@dataclass(frozen=True)
class ExternalField:
    """Real-valued external field on the line (``V(x)``) or plane (``V(x, y)``).

    Build from text with :meth:`from_expression`; ``x``, ``y`` and
    ``z = x + i y`` may appear, e.g. ``"x**2"``, ``"abs(z)**2"``,
    ``"-(x^2 + y^2)/2"``.
    """
    func: Callable
    dx: Optional[Callable] = None
    dxx: Optional[Callable] = None
    dy: Optional[Callable] = None
    planar: bool = False
    expr: Optional[str] = None

    @classmethod
    def from_expression(cls, text: str) -> "ExternalField":
        z = _X + sympy.I * _Y
        try:
            e = sympy.sympify(text.replace("^", "**"),
                              locals={"x": _X, "y": _Y, "z": z, "abs": sympy.Abs,
                                      "re": sympy.re, "im": sympy.im})
        except (sympy.SympifyError, SyntaxError, TypeError) as exc:
            raise ConfigError(f"cannot parse external field {text!r}: {exc}") from None
        e = sympy.simplify(sympy.expand_complex(e))
        extra = e.free_symbols - {_X, _Y}
        if extra:
            raise ConfigError(f"unknown symbols in external field: {sorted(map(str, extra))}")
        if e.has(sympy.I):
            raise ConfigError("external field must be real valued")
        planar = _Y in e.free_symbols
        if planar:
            args = (_X, _Y)
        else:
            args = (_X,)
        lam = lambda ex: sympy.lambdify(args, ex, "numpy")
        return cls(func=_broadcast(lam(e)), dx=_broadcast(lam(sympy.diff(e, _X))),
                   dxx=_broadcast(lam(sympy.diff(e, _X, 2))),
                   dy=_broadcast(lam(sympy.diff(e, _Y))) if planar else None,
                   planar=planar, expr=str(e))

    def __call__(self, x, y=None):
        """Evaluate on real ``x`` (line) or on ``x, y`` / complex ``x`` (plane)."""
        if y is None and np.iscomplexobj(x):
            x, y = np.real(x), np.imag(x)
        if self.planar:
            return self.func(x, 0.0 * np.asarray(x) if y is None else y)
        return self.func(x)

    def derivative(self, x):
        if self.dx is None:
            raise DomainError("field has no derivative")
        return self.dx(x)

    def second_derivative(self, x):
        if self.dxx is None:
            raise DomainError("field has no second derivative")
        return self.dxx(x)

    def complex_gradient(self, z):
        """``dV/dx - i dV/dy`` (twice the Wirtinger derivative ``dV/dz``)."""
        z = np.asarray(z, dtype=complex)
        x, y = z.real, z.imag
        if self.planar:
            return self.dx(x, y) - 1j * self.dy(x, y)
        return self.dx(x) + 0j

    def is_superlogarithmic(self, t: float = 1.0) -> bool:
        """Numerical growth check ``V(x) - t log|x| -> +inf`` along the real axis
        (and the imaginary axis for planar fields)."""
        R = np.array([1e2, 1e3, 1e4])
        rays = [R, -R]
        if self.planar:
            rays += [1j * R, -1j * R]
        with np.errstate(all="ignore"):
            for r in rays:
                g = np.real(self(r)) - t * np.log(np.abs(r))
                if not (np.all(np.isfinite(g)) and np.all(np.diff(g) > 0) and g[-1] > 0):
                    return False
        return True


def _broadcast(fn):
    def wrapped(*args):
        out = fn(*args)
        shape = np.broadcast(*[np.asarray(a) for a in args]).shape
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy() if shape else float(out)
    return wrapped


def as_field(V) -> ExternalField:
    if isinstance(V, ExternalField):
        return V
    if isinstance(V, str):
        return ExternalField.from_expression(V)
    if callable(V):
        return ExternalField(func=V)
    raise ConfigError(f"cannot interpret {V!r} as an external field")


# ---------------------------------------------------------------- energies

def _pair_logs(points: np.ndarray) -> np.ndarray:
    d = np.abs(points[:, None] - points[None, :])
    np.fill_diagonal(d, 1.0)
    with np.errstate(divide="ignore"):
        return np.log(d)


def log_energy(mu: DiscreteMeasure) -> float:
    """``-sum_{i != j} w_i w_j log|z_i - z_j|``; ``+inf`` for coincident atoms."""
    L = _pair_logs(mu.points)
    if np.isneginf(L).any():
        return math.inf
    w = mu.weights
    return float(-(w @ L @ w))


def total_energy(mu: DiscreteMeasure, V) -> float:
    """``W + 2 int V dmu``."""
    W = log_energy(mu)
    if not math.isfinite(W):
        return W
    return W + 2.0 * float(np.sum(mu.weights * np.real(as_field(V)(mu.points))))


def discrete_energy(points, V=None) -> float:
    """Unit-atom energy ``sum_{i != j} log 1/|z_i - z_j| + 2 sum V(z_i)``."""
    mu = DiscreteMeasure.uniform(points)
    return log_energy(mu) if V is None else total_energy(mu, V)


def log_potential(mu: DiscreteMeasure, z) -> np.ndarray:
    """``Phi(z) = -sum_i w_i log|z - z_i|``."""
    z = np.asarray(z)
    with np.errstate(divide="ignore"):
        return -np.sum(mu.weights * np.log(np.abs(z[..., None] - mu.points)), axis=-1)


# ---------------------------------------------------------------- Fekete points

def circle_cloud(m: int, r: float = 1.0, center: complex = 0.0) -> np.ndarray:
    return center + r * np.exp(2j * np.pi * np.arange(m) / m)


def segment_cloud(m: int, a: float = -1.0, b: float = 1.0) -> np.ndarray:
    """Chebyshev-Lobatto nodes on ``[a, b]`` (clustered where Fekete points are)."""
    x = np.cos(np.pi * np.arange(m)[::-1] / (m - 1))
    return (0.5 * (a + b) + 0.5 * (b - a) * x).astype(complex)


@dataclass
class FeketeResult:
    points: np.ndarray
    indices: np.ndarray
    log_delta: float
    history: list = field(default_factory=list)

    @property
    def delta(self) -> float:
        return math.exp(self.log_delta)

    @property
    def measure(self) -> DiscreteMeasure:
        return DiscreteMeasure.uniform(self.points)


def _log_vandermonde(pts: np.ndarray) -> float:
    L = _pair_logs(pts)
    return float(np.sum(np.triu(L, 1)))


def fekete_points(cloud, n: int, max_sweeps: int = 200) -> FeketeResult:
    """Maximize ``prod_{k<j} |z_k - z_j|`` over ``n`` points of a candidate cloud.

    Greedy (Leja-type) initialization followed by exchange ascent: each point in
    turn moves to the candidate maximizing its log-distance sum to the others;
    sweeps repeat until no move improves the product. The objective never
    decreases, so the iteration terminates on the finite cloud.
    """
    cloud = np.asarray(cloud, dtype=complex).ravel()
    m = cloud.size
    if n < 2:
        raise DomainError("need n >= 2")
    if n > m:
        raise DomainError(f"n={n} exceeds the cloud size {m}")
    if m < 4 * n:
        warnings.warn(f"cloud of {m} points is coarse for n={n} (want >= {4 * n})",
                      RuntimeWarning, stacklevel=2)
    with np.errstate(divide="ignore"):
        logd = lambda idx: np.log(np.abs(cloud[:, None] - cloud[idx][None, :]))
        # greedy start: farthest pair, then Leja points
        i0 = int(np.argmax(np.abs(cloud - cloud[0])))
        idx = [i0]
        acc = logd([i0])[:, 0]
        while len(idx) < n:
            acc_masked = acc.copy()
            acc_masked[idx] = -np.inf
            j = int(np.argmax(acc_masked))
            idx.append(j)
            acc = acc + logd([j])[:, 0]
        idx = np.array(idx)
        S = logd(idx)                    # m x n log-distances to current points
        obj = _log_vandermonde(cloud[idx])
        history = [obj]
        for _ in range(max_sweeps):
            improved = False
            for k in range(n):
                others = np.delete(np.arange(n), k)
                score = S[:, others].sum(axis=1)
                score[idx] = -np.inf
                j = int(np.argmax(score))
                cur = S[idx[k], others].sum()
                if score[j] > cur + 1e-13 * max(1.0, abs(cur)):
                    idx[k] = j
                    S[:, k] = np.log(np.abs(cloud - cloud[j]))
                    improved = True
            new = _log_vandermonde(cloud[idx])
            history.append(new)
            obj = new
            if not improved:
                break
    order = np.argsort(np.angle(cloud[idx]) if np.ptp(cloud.imag) > 0 else cloud[idx].real)
    idx = idx[order]
    return FeketeResult(cloud[idx], idx, obj, history)


@dataclass
class TransfiniteResult:
    n: np.ndarray
    d: np.ndarray
    cap: float
    fit: np.ndarray
    monotone: bool
    reference: Optional[float] = None


def transfinite_diameter(cloud, n_max: int = 24, n_min: int = 4, tol: float = 1e-6,
                         reference: Optional[float] = None) -> TransfiniteResult:
    """Sequence ``d_n = Delta_n^{2/(n(n-1))}`` and its extrapolated limit.

    The limit is fitted as ``log d_n = L + (a log n + b)/(n-1) + c/(n-1)^2``
    (exact for the circle, where ``d_n = n^{1/(n-1)}``) and ``cap = e^L``.
    ``reference`` (e.g. a conformal radius or a condenser estimate) is carried
    along for reporting.
    """
    if n_max < 4:
        raise DomainError("need n_max >= 4")
    ns = np.arange(max(2, n_min), n_max + 1)
    d = np.empty(ns.size)
    for i, n in enumerate(ns):
        res = fekete_points(cloud, int(n))
        d[i] = math.exp(2.0 * res.log_delta / (n * (n - 1)))
    monotone = bool(np.all(np.diff(d) <= tol * d[1:]))
    if not monotone:
        warnings.warn("d_n is not monotone; the candidate cloud is under-resolved",
                      RuntimeWarning, stacklevel=2)
    k = ns - 1.0
    A = np.column_stack([np.ones_like(k), np.log(ns) / k, 1 / k, 1 / k ** 2])
    coef, *_ = np.linalg.lstsq(A, np.log(d), rcond=None)
    return TransfiniteResult(ns, d, float(math.exp(coef[0])), coef, monotone, reference)


def condenser_capacity_annulus(R: float) -> float:
    """Capacity ``2 pi / log R`` of the annular condenser ``1 < |w| < R``."""
    if not R > 1 + 1e-12:
        raise DomainError("annulus needs R > 1 (plates touch as R -> 1)")
    return 2 * np.pi / math.log(R)


def capacity_from_condenser(cap_condenser: float, R: float) -> float:
    """Capacity estimate ``R exp(-2 pi / cap C_R)`` from the condenser ``{|z| >= R, K}``."""
    return R * math.exp(-2 * np.pi / cap_condenser)


def pfluger_capacity(fmap, R: float) -> float:
    """Capacity of the compact bounded by an exterior map, via the condenser limit.

    The level curve ``|f(w)| = R`` is approximated by ``|w| = rho`` with
    ``rho`` chosen so that the image circle has mean modulus ``R``; the
    condenser is then the annulus ``1 < |w| < rho``.
    """
    from .conformal import evaluate
    if fmap.orientation != "exterior":
        raise DomainError("condenser estimate needs an exterior map")
    th = 2 * np.pi * np.arange(256) / 256
    g = lambda rho: np.mean(np.log(np.abs(evaluate(fmap, rho * np.exp(1j * th))))) - math.log(R)
    hi = 2.0
    while g(hi) < 0:
        hi *= 2
    rho = optimize.brentq(g, 1.0 + 1e-12, hi, xtol=1e-14)
    return capacity_from_condenser(condenser_capacity_annulus(rho), R)


# ---------------------------------------------------------------- equilibrium on the line

@dataclass
class EnergyReport:
    W: float
    E_total: float
    u_t: float
    cap: Optional[float]
    U_min: float
    U_max: float
    support: tuple
    off_support_min_excess: float
    W_discrete: float
    converged: bool
    residual: float
    iterations: int
    convention: str = ENERGY_CONVENTION

    @property
    def oscillation(self) -> float:
        return self.U_max - self.U_min

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["support"] = list(self.support)
        d["oscillation"] = self.oscillation
        return d


def _G(u):
    # antiderivative of log|u|
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(u == 0, 0.0, u * np.log(np.abs(u)) - u)


def _H(u):
    # antiderivative of _G
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(u == 0, 0.0, 0.5 * u * u * np.log(np.abs(u)) - 0.75 * u * u)


def cell_edges(x: np.ndarray, bounds: Optional[tuple] = None) -> np.ndarray:
    """Voronoi cells of sorted points on the line; outer cells mirror their neighbour."""
    e = np.empty(x.size + 1)
    e[1:-1] = 0.5 * (x[1:] + x[:-1])
    e[0] = x[0] - 0.5 * (x[1] - x[0])
    e[-1] = x[-1] + 0.5 * (x[-1] - x[-2])
    if bounds is not None:
        e[0], e[-1] = max(e[0], bounds[0]), min(e[-1], bounds[1])
    return e


def smoothed_potential(x: np.ndarray, w: np.ndarray, edges: np.ndarray, grid) -> np.ndarray:
    """Log potential of the measure spreading each atom uniformly over its cell."""
    grid = np.asarray(grid, dtype=float)
    dens = w / np.diff(edges)
    a, b = edges[:-1], edges[1:]
    out = np.zeros(grid.shape)
    for lo in range(0, grid.size, 2048):
        g = grid.ravel()[lo: lo + 2048, None]
        out.ravel()[lo: lo + 2048] = -np.sum(dens * (_G(g - a) - _G(g - b)), axis=1)
    return out


def smoothed_energy(w: np.ndarray, edges: np.ndarray) -> float:
    """Energy ``-iint log|x - s|`` of the cell-smoothed measure (self terms included)."""
    dens = w / np.diff(edges)
    a, b = edges[:-1], edges[1:]
    # iint_{[a_i,b_i] x [a_j,b_j]} log|x - s| ds dx
    I = (_H(b[:, None] - a[None, :]) - _H(b[:, None] - b[None, :])
         - _H(a[:, None] - a[None, :]) + _H(a[:, None] - b[None, :]))
    return float(-(dens @ I @ dens))


def _initial_interval(V: ExternalField, t: float) -> tuple:
    # balance x V'(x) = t on each side
    def side(sign):
        f = lambda s: sign * s * V.derivative(sign * s) - t
        hi = 1.0
        for _ in range(60):
            if f(hi) > 0:
                break
            hi *= 2
        else:
            return 1.0
        lo = hi / 2
        while lo > 1e-12 and f(lo) > 0:
            lo /= 2
        return optimize.brentq(f, lo, hi) if f(lo) < 0 else hi
    return -side(-1), side(1)


AIRY_RATIO = 2.338107410459767 / 4.087949444130970   # |a_1| / |a_2|


def soft_edge(x_edge: float, x_next: float) -> float:
    """Extrapolate a soft spectral edge from the two outermost points (Airy spacing)."""
    return (x_edge - AIRY_RATIO * x_next) / (1.0 - AIRY_RATIO)


def equilibrium_measure_1d(V, t: float, n: int, support: Optional[tuple] = None,
                           max_iter: int = 500, tol: float = 1e-10,
                           grid_size: int = 10_000) -> tuple[DiscreteMeasure, EnergyReport]:
    """Weighted equilibrium measure of mass ``t`` on the line by atomic minimization.

    ``n`` atoms of mass ``t/n`` minimize ``W + 2 int V`` (ordered-pair
    convention). The minimization is a damped Newton descent on the atom
    positions from an equispaced start; ordering is preserved by limiting every
    step to half the local gap. With ``support=(a, b)`` the atoms are confined
    to ``[a, b]`` (active-set projection) and ``V`` may be ``0``.

    The report checks the equilibrium condition with the cell-smoothed
    potential: oscillation of ``U`` over the support and the minimum of
    ``U - u_t`` on a ``grid_size`` grid off the support.
    """
    if n < 16:
        raise DomainError("need n >= 16")
    if not t > 0:
        raise DomainError("mass t must be positive")
    if isinstance(V, (int, float)) and V == 0:
        V = ExternalField.from_expression("0*x")
    V = as_field(V)
    if V.planar:
        raise DomainError("line equilibrium needs V(x)")
    if support is None and not V.is_superlogarithmic(t):
        raise DomainError("external field must grow faster than t log|x| without a support constraint")
    q = t / n
    if support is None:
        lo, hi = _initial_interval(V, t)
    else:
        lo, hi = support
    x = np.linspace(lo, hi, n)
    if support is None:
        x = np.linspace(lo, hi, n + 2)[1:-1]

    def energy(x):
        L = _pair_logs(x)
        return float(-q * q * L.sum() + 2 * q * np.sum(V(x)))

    def grad_hess(x):
        d = x[:, None] - x[None, :]
        np.fill_diagonal(d, 1.0)
        inv = 1.0 / d
        np.fill_diagonal(inv, 0.0)
        g = -2 * q * q * inv.sum(axis=1) + 2 * q * V.derivative(x)
        inv2 = inv * inv
        Hm = -2 * q * q * inv2
        np.fill_diagonal(Hm, 2 * q * q * inv2.sum(axis=1) + 2 * q * V.second_derivative(x))
        return g, Hm

    active = np.zeros(n, dtype=bool)
    if support is not None:
        active[[0, -1]] = True
    F = energy(x)
    it, res, converged = 0, math.inf, False
    for it in range(1, max_iter + 1):
        g, Hm = grad_hess(x)
        if support is not None:
            # release bound atoms whose gradient points inwards
            active &= ~(((x <= lo) & (g < 0)) | ((x >= hi) & (g > 0)))
            active |= ((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0))
        free = ~active
        res = float(np.max(np.abs(g[free])) / q) if free.any() else 0.0
        if res < tol:
            converged = True
            break
        step = np.zeros(n)
        try:
            Hf = Hm[np.ix_(free, free)]
            c, low = linalg.cho_factor(Hf)
            step[free] = -linalg.cho_solve((c, low), g[free])
        except linalg.LinAlgError:
            step[free] = -g[free] / np.maximum(np.abs(np.diag(Hm)[free]), 1e-300)
        # keep the ordering: no gap may shrink by more than half
        gaps = np.diff(x)
        dstep = np.diff(step)
        shrink = -dstep / gaps
        lam = min(1.0, 0.5 / shrink.max()) if np.any(shrink > 0) else 1.0
        if support is not None:
            with np.errstate(divide="ignore", invalid="ignore"):
                over = np.where(step > 0, (hi - x) / step, np.where(step < 0, (lo - x) / step, np.inf))
            lam_b = float(np.min(over[free])) if free.any() else 1.0
            lam = min(lam, lam_b)
        while True:
            xn = x + lam * step
            if support is not None:
                xn = np.clip(xn, lo, hi)
            Fn = energy(xn)
            if Fn <= F + 1e-4 * lam * float(g @ step) or lam < 1e-12:
                break
            lam *= 0.5
        x, F = xn, Fn
        if support is not None:
            active |= (x <= lo) | (x >= hi)
    mu = DiscreteMeasure(x.copy(), np.full(n, q))
    report = _equilibrium_report(mu, V, t, support, F, converged, res, it, grid_size)
    if not converged:
        warnings.warn(f"equilibrium descent stopped with residual {res:.2e}", RuntimeWarning,
                      stacklevel=2)
    return mu, report


def _equilibrium_report(mu, V, t, support, F, converged, res, it, grid_size):
    x, w = mu.points.real, mu.weights
    if support is None:
        a, b = soft_edge(x[0], x[1]), soft_edge(x[-1], x[-2])
    else:
        a, b = support
    # outer cells end at the support edges, inner ones at midpoints
    edges = cell_edges(x, (a, b))
    edges[0], edges[-1] = a, b
    W_s = smoothed_energy(w, edges)
    intV = float(np.sum(w * V(x)))
    u_t = (W_s + intV) / t
    span = b - a
    grid = np.linspace(a - span, b + span, grid_size)
    U = smoothed_potential(x, w, edges, grid) + V(grid)
    on = (grid >= x[0]) & (grid <= x[-1])
    off = (grid < a) | (grid > b)
    W_d = log_energy(mu)
    cap = math.exp(-W_s / t ** 2) if np.allclose(V(x), 0) else None
    return EnergyReport(W=W_s, E_total=W_s + 2 * intV, u_t=u_t, cap=cap,
                        U_min=float(U[on].min()), U_max=float(U[on].max()),
                        support=(float(a), float(b)),
                        off_support_min_excess=float((U[off] - u_t).min()) if off.any() else math.inf,
                        W_discrete=W_d, converged=converged, residual=res, iterations=it)


def semicircle_cdf(x, t: float = 1.0):
    """CDF (normalized to 1) of the equilibrium measure of ``V = x^2`` with mass ``t``."""
    a = math.sqrt(t)
    s = np.clip(np.asarray(x, dtype=float) / a, -1, 1)
    return 0.5 + (s * np.sqrt(1 - s * s) + np.arcsin(s)) / np.pi


# ---------------------------------------------------------------- orthogonal polynomials

@dataclass
class OrthoPolyResult:
    alpha: np.ndarray        # recurrence x Q_k = Q_{k+1} + alpha_k Q_k + beta_k Q_{k-1}
    beta: np.ndarray         # beta_0 = total mass of the weight
    log_norms: np.ndarray    # log ||Q_k||, k = 0..n_max
    N: float
    nodes: np.ndarray = field(repr=False, default=None)
    weights: np.ndarray = field(repr=False, default=None)

    def zeros(self, n: int) -> np.ndarray:
        if n < 1:
            return np.array([])
        return linalg.eigh_tridiagonal(self.alpha[:n], np.sqrt(self.beta[1:n]), eigvals_only=True)

    def monic_coeffs(self, n: int) -> np.ndarray:
        """Coefficients of ``Q_n``, highest power first."""
        prev, cur = np.array([0.0]), np.array([1.0])
        for k in range(n):
            nxt = np.polysub(np.polymul([1.0, -self.alpha[k]], cur), self.beta[k] * prev if k else 0 * prev)
            prev, cur = cur, nxt
        return cur

    def scaled_log_norm(self, n: int) -> float:
        return float(self.log_norms[n] / self.N)


def _weight_window(V: ExternalField, N: float, n_max: int, floor: float = 1e-30) -> tuple:
    # region where x^{2 n_max} e^{-2NV} is above floor relative to its maximum
    x = np.linspace(-1.0, 1.0, 2001)
    for _ in range(40):
        with np.errstate(divide="ignore"):
            h = -2 * N * V(x) + 2 * n_max * np.log(np.abs(x) + 1e-300)
        hmax = h.max()
        inside = np.flatnonzero(h > hmax + math.log(floor))
        if inside[0] > 0 and inside[-1] < x.size - 1:
            a, b = x[max(inside[0] - 1, 0)], x[min(inside[-1] + 1, x.size - 1)]
            return a, b, hmax
        x = 2 * x
    raise ConvergenceError("weight does not decay; cannot bound the quadrature window")


def orthopoly_realline(V, N: float, n_max: int, panels: int = 96, order: int = 24) -> OrthoPolyResult:
    """Monic orthogonal polynomials for ``e^{-2 N V(x)} dx`` by the Stieltjes procedure.

    The line is truncated where ``x^{2 n_max} e^{-2NV}`` drops below ``1e-30``
    of its maximum and covered by composite Gauss-Legendre panels. Norms are
    carried in log form so large ``N`` does not underflow.
    """
    V = as_field(V)
    a, b, _ = _weight_window(V, N, n_max)
    xg, wg = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    h = np.diff(edges) / 2
    mid = (edges[1:] + edges[:-1]) / 2
    nodes = (mid[:, None] + h[:, None] * xg[None, :]).ravel()
    lw = -2 * N * V(nodes)
    shift = lw.max()
    wts = (h[:, None] * wg[None, :]).ravel() * np.exp(lw - shift)
    if not np.all(np.isfinite(wts)):
        raise ConvergenceError("quadrature weights are not finite")
    alpha = np.zeros(n_max + 1)
    beta = np.zeros(n_max + 1)
    log_norms = np.zeros(n_max + 1)
    # orthonormal recursion on the nodes
    p_prev = np.zeros_like(nodes)
    norm0 = wts.sum()
    p = np.ones_like(nodes) / math.sqrt(norm0)
    beta[0] = norm0
    log_norms[0] = 0.5 * (math.log(norm0) + shift)
    sqb_prev = 0.0
    for k in range(n_max + 1):
        alpha[k] = np.sum(wts * nodes * p * p)
        if k == n_max:
            break
        q = (nodes - alpha[k]) * p - sqb_prev * p_prev
        nq = math.sqrt(np.sum(wts * q * q))
        if not nq > 0:
            raise ConvergenceError(f"Stieltjes procedure broke down at degree {k + 1}")
        beta[k + 1] = nq * nq
        log_norms[k + 1] = log_norms[k] + math.log(nq)
        p_prev, p, sqb_prev = p, q / nq, nq
    return OrthoPolyResult(alpha, beta, log_norms, N, nodes, wts)


# ---------------------------------------------------------------- Heine average by MCMC

@dataclass
class HeineResult:
    coeffs: np.ndarray      # monic, highest power first
    stderr: np.ndarray
    rhat: np.ndarray
    acceptance: float
    flagged: bool
    samples: int


def _log_density(z: np.ndarray, V: ExternalField, N: float) -> np.ndarray:
    # exp(-E[z, N V]) with the ordered-pair energy: |Vandermonde|^2 e^{-2N sum V}
    n = z.shape[-1]
    out = -2 * N * np.sum(V(z), axis=-1)
    for i in range(n):
        for j in range(i + 1, n):
            with np.errstate(divide="ignore"):
                out = out + 2 * np.log(np.abs(z[..., i] - z[..., j]))
    return out


def gelman_rubin(chains: np.ndarray) -> np.ndarray:
    """Potential scale reduction for draws shaped ``(chains, draws, ...)``."""
    m, s = chains.shape[:2]
    means = chains.mean(axis=1)
    B = s * means.var(axis=0, ddof=1)
    Wv = chains.var(axis=1, ddof=1).mean(axis=0)
    var = (s - 1) / s * Wv + B / s
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.sqrt(np.where(Wv > 0, var / Wv, 1.0))


def batch_means_se(chains: np.ndarray, batches: int = 20) -> np.ndarray:
    """Standard error of the grand mean from per-chain batch means."""
    m, s = chains.shape[:2]
    bs = s // batches
    bm = chains[:, : bs * batches].reshape(m, batches, bs, *chains.shape[2:]).mean(axis=2)
    flat = bm.reshape(m * batches, *chains.shape[2:])
    return flat.std(axis=0, ddof=1) / math.sqrt(m * batches)


def heine_average(V, N: float, n: int, samples: int, rng: np.random.Generator,
                  chains: int = 16, burn: Optional[int] = None, thin: int = 1,
                  step: Optional[float] = None) -> HeineResult:
    """Average of ``prod (x - z_k)`` over the ensemble ``e^{-E[z, N V]}`` on the line.

    Random-walk Metropolis on all ``n`` coordinates, ``chains`` independent
    chains of ``samples // chains`` draws each after ``burn`` warm-up draws
    (step size adapted towards 35% acceptance during warm-up). Standard errors
    come from batch means; chains with R-hat above 1.1 set ``flagged``.
    """
    V = as_field(V)
    per = max(samples // chains, 200)
    burn = per // 2 if burn is None else burn
    lo, hi = _initial_interval(V, max(n / N, 1e-3))
    z = rng.uniform(lo, hi, size=(chains, n))
    z.sort(axis=1)
    lp = _log_density(z, V, N)
    step = 0.5 * (hi - lo) / max(n, 1) if step is None else step
    coeff_draws = np.empty((chains, per, n + 1))
    accepted = 0
    total = 0
    for it in range(burn + per * thin):
        prop = z + step * rng.standard_normal(z.shape)
        lpp = _log_density(prop, V, N)
        acc = np.log(rng.uniform(size=chains)) < lpp - lp
        z[acc], lp[acc] = prop[acc], lpp[acc]
        if it < burn:
            if (it + 1) % 50 == 0:
                rate = acc.mean()
                step *= math.exp(rate - 0.35)
            continue
        accepted += int(acc.sum())
        total += chains
        k = it - burn
        if k % thin == 0:
            coeff_draws[:, k // thin] = np.array([np.poly(row) for row in z])
    rhat = gelman_rubin(coeff_draws)
    se = batch_means_se(coeff_draws)
    return HeineResult(coeff_draws.mean(axis=(0, 1)), se, rhat, accepted / max(total, 1),
                       bool(np.any(rhat > 1.1)), chains * per)
