"""Characteristic curves of intrinsic graphs and the regularity diagnostics.

Projected to the ``(x, t)`` plane and parameterized by ``s = x``, a
characteristic curve solves ``t'(s) = 2 u(s, t(s))``.  Off-grid values of
``u`` come from a bicubic interpolating spline of the grid samples, so the
same smooth interpolant feeds the tracer, the foliation Jacobian and every
along-curve quantity.

At a critical point of the prescribed mean curvature functional the
horizontal data satisfy ``dM/ds = K`` along each characteristic curve;
:func:`regularity_diagnostic` measures how far a discrete graph is from
that identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .geometry import ContactMetric, connection_coefficients, frame, inner
from .graph import SIGNS, IntrinsicGraph, _fields_at, evaluate_points

__all__ = [
    "CurveExitError",
    "CharacteristicCurve",
    "RegularityReport",
    "interpolant",
    "trace",
    "foliation_jacobian",
    "retrace_error",
    "uniqueness_check",
    "along_curve",
    "regularity_diagnostic",
    "curve_frames",
    "mean_curvature_along",
    "geodesic_check",
    "recursion_check",
    "horizontality_defect",
    "convergence_order",
]


class CurveExitError(RuntimeError):
    """The requested start point is outside the graph's domain."""


class GraphInterpolant:
    """Bicubic spline of ``u`` with its first and second derivatives."""

    def __init__(self, graph: IntrinsicGraph):
        d = graph.domain
        self.domain = d
        self.spline = RectBivariateSpline(d.x, d.t, graph.u, kx=3, ky=3, s=0)

    def __call__(self, s, t, ds=0, dt=0):
        return self.spline.ev(s, t, dx=ds, dy=dt)

    def inside(self, s, t, slack=1e-12):
        d = self.domain
        return (d.x0 - slack <= s <= d.x1 + slack) and (d.t0 - slack <= t <= d.t1 + slack)


_CACHE_KEY = "_srpmc_interpolant"


def interpolant(graph: IntrinsicGraph) -> GraphInterpolant:
    """Spline of the graph, cached on the (frozen) graph object."""
    cached = graph.__dict__.get(_CACHE_KEY)
    if cached is None:
        cached = GraphInterpolant(graph)
        object.__setattr__(graph, _CACHE_KEY, cached)
    return cached


@dataclass
class CharacteristicCurve:
    a: float
    b: float
    step: float
    s: np.ndarray
    t: np.ndarray
    q: np.ndarray
    u: np.ndarray
    clipped: bool = False
    M: np.ndarray | None = None
    K: np.ndarray | None = None

    @property
    def points(self):
        """Lifted curve ``(s, u, t - s u)`` in the ambient chart."""
        return np.stack([self.s, self.u, self.t - self.s * self.u], -1)

    @property
    def base_index(self):
        return int(np.argmin(np.abs(self.s - self.a)))


def _rk4_steps(rhs, s0, y0, h, n, keep_going):
    ss = [s0]
    ys = [np.array(y0, dtype=float)]
    s, y = s0, ys[0]
    for _ in range(n):
        k1 = rhs(s, y)
        k2 = rhs(s + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(s + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(s + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        s = s + h
        if not keep_going(s, y):
            return np.array(ss), np.array(ys), True
        ss.append(s)
        ys.append(y)
    return np.array(ss), np.array(ys), False


def _rhs(interp):
    def rhs(s, y):
        # y = (t, q): t' = 2u, q' = 2 u_t q
        return np.array([2.0 * interp(s, y[0]), 2.0 * interp(s, y[0], dt=1) * y[1]])

    return rhs


def _integrate(interp, a, b, r, h, q0=1.0):
    if not interp.inside(a, b):
        raise CurveExitError(f"start point ({a}, {b}) lies outside the domain")
    n = max(1, int(round(r / h)))
    hh = r / n
    rhs = _rhs(interp)
    keep = lambda s, y: interp.inside(s, y[0])
    sf, yf, cf = _rk4_steps(rhs, a, (b, q0), hh, n, keep)
    sb, yb, cb = _rk4_steps(rhs, a, (b, q0), -hh, n, keep)
    s = np.concatenate([sb[::-1], sf[1:]])
    y = np.concatenate([yb[::-1], yf[1:]])
    return s, y[:, 0], y[:, 1], hh, cf or cb


def trace(graph: IntrinsicGraph, start, halfwidth, step) -> CharacteristicCurve:
    """Integrate ``t' = 2u(s, t)`` through ``start = (a, b)`` over ``[a - r, a + r]``.

    Classical fourth-order Runge-Kutta with the step adjusted so that
    ``r / step`` is an integer.  If the curve leaves the domain the trace
    stops there and ``clipped`` is set.
    """
    interp = interpolant(graph)
    a, b = map(float, start)
    s, t, q, h, clipped = _integrate(interp, a, b, float(halfwidth), float(step))
    return CharacteristicCurve(a=a, b=b, step=h, s=s, t=t, q=q, u=interp(s, t), clipped=clipped)


def foliation_jacobian(graph: IntrinsicGraph, curve: CharacteristicCurve):
    """``d t_eps / d eps`` along the curve: ``q' = 2 u_t(s, t(s)) q``, ``q(a) = 1``.

    The variational equation is integrated jointly with the curve by the
    same Runge-Kutta scheme and step.
    """
    interp = interpolant(graph)
    r = max(curve.a - curve.s[0], curve.s[-1] - curve.a)
    s, t, q, _, _ = _integrate(interp, curve.a, curve.b, r, curve.step)
    lo = np.searchsorted(s, curve.s[0] - 0.5 * curve.step)
    return q[lo : lo + len(curve.s)]


def retrace_error(graph: IntrinsicGraph, start, halfwidth, step):
    """Trace forward over ``[a, a + r]`` then back again; distance from ``b``."""
    interp = interpolant(graph)
    a, b = map(float, start)
    n = max(1, int(round(halfwidth / step)))
    h = halfwidth / n
    rhs = _rhs(interp)
    keep = lambda s, y: interp.inside(s, y[0])
    sf, yf, clipped = _rk4_steps(rhs, a, (b, 1.0), h, n, keep)
    if clipped:
        raise CurveExitError("forward trace left the domain")
    _, yb, clipped = _rk4_steps(rhs, sf[-1], yf[-1], -h, n, keep)
    if clipped:
        raise CurveExitError("backward trace left the domain")
    return abs(yb[-1, 0] - b)


def uniqueness_check(graph: IntrinsicGraph, start, halfwidth, step, tol=1e-8):
    """True when the forward/backward retrace returns to ``start`` within ``tol``."""
    return retrace_error(graph, start, halfwidth, step) <= tol


def _along(graph, curve):
    interp = interpolant(graph)
    s, t = curve.s, curve.t
    u = interp(s, t)
    ux = interp(s, t, ds=1)
    ut = interp(s, t, dt=1)
    pts = np.stack([s, u, t - s * u], -1)
    return pts, u, ux, ut


def along_curve(graph: IntrinsicGraph, metric: ContactMetric, f, curve: CharacteristicCurve, sign="-"):
    """Fill ``curve.M`` and ``curve.K`` from the interpolated graph."""
    pts, u, ux, ut = _along(graph, curve)
    w = ux + 2.0 * u * ut
    data = _fields_at(pts, w, metric, f, SIGNS[sign])
    curve.M = data.M
    curve.K = data.K
    return curve


@dataclass
class RegularityReport:
    """Sup-norm of ``dM/ds - K`` along curves, optionally over refinement levels."""

    sup: float
    residuals: list = field(default_factory=list)
    levels: list = field(default_factory=list)
    sups: list = field(default_factory=list)
    orders: list = field(default_factory=list)

    @property
    def order(self):
        """Least-squares slope of log(sup) against log(h) (needs >= 3 levels)."""
        if len(self.sups) < 3:
            return None
        return convergence_order(self.levels, self.sups)


def convergence_order(hs, errors):
    hs = np.asarray(hs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    slope, _ = np.polyfit(np.log(hs), np.log(errors), 1)
    return float(slope)


def _centered(values, h):
    d = np.full(values.shape, np.nan)
    d[1:-1] = (values[2:] - values[:-2]) / (2.0 * h)
    return d


def _interior(n, skip=2):
    mask = np.zeros(n, dtype=bool)
    mask[skip:-skip] = True
    return mask


def regularity_diagnostic(graph: IntrinsicGraph, metric: ContactMetric, f, curves, sign="-"):
    """``sup |dM/ds - K|`` along one or more traced curves.

    ``dM/ds`` is the centered divided difference on the trace samples; two
    samples are dropped at each end of every curve.
    """
    if isinstance(curves, CharacteristicCurve):
        curves = [curves]
    residuals = []
    sup = 0.0
    for c in curves:
        along_curve(graph, metric, f, c, sign)
        res = _centered(c.M, c.step) - c.K
        res[~_interior(len(res))] = np.nan
        residuals.append(res)
        if np.any(np.isfinite(res)):
            sup = max(sup, float(np.nanmax(np.abs(res))))
    return RegularityReport(sup=sup, residuals=residuals)


@dataclass
class CurveFrames:
    points: np.ndarray
    a: np.ndarray
    Z: np.ndarray
    nu: np.ndarray
    step: float


def curve_frames(graph: IntrinsicGraph, metric: ContactMetric, curve: CharacteristicCurve):
    """Unit characteristic field ``Z`` and inner horizontal normal along the lift."""
    pts, u, ux, ut = _along(graph, curve)
    w = ux + 2.0 * u * ut
    g11, g12, g22 = metric.components(pts)
    a = np.sqrt(g22 * w * w + 2.0 * g12 * w + g11)
    sq = np.sqrt(g11 * g22 - g12 * g12)
    X, Y, _ = frame(pts)
    Z = (X + w[:, None] * Y) / a[:, None]
    alpha = (g22 * w + g12) / sq
    beta = -(g12 * w + g11) / sq
    nu = (alpha[:, None] * X + beta[:, None] * Y) / a[:, None]
    return CurveFrames(points=pts, a=a, Z=Z, nu=nu, step=curve.step)


def _nabla_z(fr: CurveFrames, C, V):
    """``nabla_Z V`` for a field sampled along the lift (``Gamma' = a Z``)."""
    dV = np.full(V.shape, np.nan)
    dV[1:-1] = (V[2:] - V[:-2]) / (2.0 * fr.step)
    return dV / fr.a[:, None] + np.einsum("...kij,...i,...j->...k", C, fr.Z, V)


def mean_curvature_along(graph: IntrinsicGraph, metric: ContactMetric, curve: CharacteristicCurve):
    """``H = -<nabla_Z nu_h, Z>`` along the curve (NaN at the two end samples)."""
    fr = curve_frames(graph, metric, curve)
    C = connection_coefficients(metric, fr.points)
    dnu = _nabla_z(fr, C, fr.nu)
    return -inner(metric, fr.points, dnu, fr.Z)


def _along_values(H, n):
    H = np.asarray(H, dtype=float)
    return np.broadcast_to(H, (n,)).copy()


def geodesic_check(graph: IntrinsicGraph, metric: ContactMetric, curve: CharacteristicCurve, H, skip=2):
    """``sup |nabla_Z Z - H nu_h|`` along the curve.

    ``H`` is a constant or an array of along-curve values.
    """
    fr = curve_frames(graph, metric, curve)
    C = connection_coefficients(metric, fr.points)
    H = _along_values(H, len(curve.s))
    acc = _nabla_z(fr, C, fr.Z)
    diff = acc - H[:, None] * fr.nu
    res = np.sqrt(np.abs(inner(metric, fr.points, diff, diff)))
    return float(np.max(res[_interior(len(res), skip)]))


def recursion_check(graph: IntrinsicGraph, metric: ContactMetric, curve: CharacteristicCurve, H, skip=3):
    """``sup |nabla_Z(nabla_Z Z) - (Z(H) nu_h - H^2 Z)|`` along the curve."""
    fr = curve_frames(graph, metric, curve)
    C = connection_coefficients(metric, fr.points)
    H = _along_values(H, len(curve.s))
    acc = _nabla_z(fr, C, fr.Z)
    jerk = _nabla_z(fr, C, acc)
    zh = _centered(H, fr.step) / fr.a
    target = zh[:, None] * fr.nu - (H * H)[:, None] * fr.Z
    diff = jerk - target
    res = np.sqrt(np.abs(inner(metric, fr.points, diff, diff)))
    return float(np.max(res[_interior(len(res), skip)]))


def horizontality_defect(curve: CharacteristicCurve):
    """``max |omega_0(Gamma')|`` with ``Gamma'`` from centered differences of the lift."""
    P = curve.points
    dP = (P[2:] - P[:-2]) / (2.0 * curve.step)
    x, y = P[1:-1, 0], P[1:-1, 1]
    omega = dP[:, 2] + x * dP[:, 1] - y * dP[:, 0]
    return float(np.max(np.abs(omega)))


def curve_table(curve: CharacteristicCurve, residual=None):
    """Columns ``s, t, q, M, K, dM/ds - K`` for export."""
    n = len(curve.s)
    nan = np.full(n, np.nan)
    M = curve.M if curve.M is not None else nan
    K = curve.K if curve.K is not None else nan
    res = residual if residual is not None else nan
    return np.column_stack([curve.s, curve.t, curve.q, M, K, res])
