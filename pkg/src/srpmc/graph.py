"""Intrinsic graphs over the vertical plane ``y = 0``.

A function ``u(x, t)`` on a rectangle ``D`` defines the surface
``(x, t) -> (x, u, t - x u)``.  Its horizontal tangent direction is
``X + w Y`` with ``w = u_x + 2 u u_t`` and the sub-Riemannian area is the
integral over ``D`` of ``a = (g22 w^2 + 2 g12 w + g11)^(1/2)``, metric
components taken at the embedded point.

Grids are indexed ``u[i, j] = u(x_i, t_j)``.  Integrals over ``D`` use the
composite trapezoid rule on the grid nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .expr import ScalarField, as_field
from .geometry import ContactMetric

__all__ = [
    "GraphDomain",
    "IntrinsicGraph",
    "HorizontalData",
    "embed",
    "embedded_points",
    "w_field",
    "horizontal_data",
    "k1_m_k_fields",
    "area",
    "volume",
    "subgraph_integral",
    "pmc_value",
    "first_variation",
    "horizontal_normal",
    "characteristic_frame",
    "trapezoid",
    "SIGNS",
]

# functional = area + SIGNS[sign] * integral of f over the subgraph.
# "-" (the default) gives K = K1 - f det G and critical points of mean
# curvature f; "+" is the opposite convention and flips the sign of f.
SIGNS = {"-": -1.0, "+": 1.0}


@dataclass(frozen=True)
class GraphDomain:
    x0: float
    x1: float
    t0: float
    t1: float
    nx: int
    nt: int

    def __post_init__(self):
        if self.nx < 3 or self.nt < 3:
            raise ValueError("grids need at least 3 nodes per direction")
        if not (self.x1 > self.x0 and self.t1 > self.t0):
            raise ValueError("empty rectangle")

    @classmethod
    def unit(cls, n, nt=None):
        return cls(0.0, 1.0, 0.0, 1.0, n, n if nt is None else nt)

    @property
    def hx(self):
        return (self.x1 - self.x0) / (self.nx - 1)

    @property
    def ht(self):
        return (self.t1 - self.t0) / (self.nt - 1)

    @property
    def x(self):
        return np.linspace(self.x0, self.x1, self.nx)

    @property
    def t(self):
        return np.linspace(self.t0, self.t1, self.nt)

    def mesh(self):
        return np.meshgrid(self.x, self.t, indexing="ij")

    def with_grid(self, nx, nt=None):
        return replace(self, nx=nx, nt=nx if nt is None else nt)

    def boundary_mask(self):
        mask = np.zeros((self.nx, self.nt), dtype=bool)
        mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
        return mask


def trapezoid(domain: GraphDomain, values):
    """Composite trapezoid rule over the grid (fixed summation order)."""
    wx = np.full(domain.nx, domain.hx)
    wx[[0, -1]] *= 0.5
    wt = np.full(domain.nt, domain.ht)
    wt[[0, -1]] *= 0.5
    return float(wx @ np.asarray(values, dtype=float) @ wt)


def _grid_derivatives(domain, values):
    """Second-order central differences inside, second-order one-sided at the edges."""
    dx, dt = np.gradient(values, domain.hx, domain.ht, edge_order=2)
    return dx, dt


@dataclass(frozen=True)
class IntrinsicGraph:
    domain: GraphDomain
    u: np.ndarray
    u_x: np.ndarray
    u_t: np.ndarray

    @classmethod
    def from_samples(cls, domain: GraphDomain, u):
        u = np.array(u, dtype=float)
        if u.shape != (domain.nx, domain.nt):
            raise ValueError(f"expected samples of shape {(domain.nx, domain.nt)}, got {u.shape}")
        if not np.all(np.isfinite(u)):
            raise ValueError("graph samples must be finite")
        u_x, u_t = _grid_derivatives(domain, u)
        return cls(domain, u, u_x, u_t)

    @classmethod
    def from_expression(cls, domain: GraphDomain, u, exact=True):
        """Sample ``u(x, t)`` (``y`` is ignored); ``exact`` uses symbolic derivatives."""
        field = as_field(u)
        X, T = domain.mesh()
        values = np.broadcast_to(field(X, 0.0, T), X.shape).copy()
        if not exact:
            return cls.from_samples(domain, values)
        g = np.broadcast_to(field.grad(X, 0.0, T), X.shape + (3,))
        return cls(domain, values, g[..., 0].copy(), g[..., 2].copy())

    def plus(self, v, s=1.0):
        """The graph of ``u + s v`` with derivatives shifted by the same operator."""
        vv, vx, vt = test_function(self.domain, v)
        return IntrinsicGraph(self.domain, self.u + s * vv, self.u_x + s * vx, self.u_t + s * vt)


def test_function(domain: GraphDomain, v):
    """Values and derivatives ``(v, v_x, v_t)`` of a test function on the grid.

    Expressions are differentiated symbolically; sampled arrays use the same
    finite differences as graph samples.
    """
    if isinstance(v, (np.ndarray, list, tuple)):
        v = np.array(v, dtype=float)
        if v.shape != (domain.nx, domain.nt):
            raise ValueError("test function samples do not match the grid")
        vx, vt = _grid_derivatives(domain, v)
        return v, vx, vt
    field = as_field(v)
    X, T = domain.mesh()
    vals = np.broadcast_to(field(X, 0.0, T), X.shape).copy()
    g = np.broadcast_to(field.grad(X, 0.0, T), X.shape + (3,))
    return vals, g[..., 0].copy(), g[..., 2].copy()


test_function.__test__ = False  # keep pytest from collecting it


def embed(graph: IntrinsicGraph, node):
    """The point ``(x, u, t - x u)`` over grid node ``(i, j)``."""
    i, j = node
    x = graph.domain.x[i]
    t = graph.domain.t[j]
    u = graph.u[i, j]
    return np.array([x, u, t - x * u])


def embedded_points(graph: IntrinsicGraph):
    X, T = graph.domain.mesh()
    return np.stack([X, graph.u, T - X * graph.u], -1)


def w_field(graph: IntrinsicGraph):
    """Y-component of the horizontal tangent ``X + w Y``."""
    return graph.u_x + 2.0 * graph.u * graph.u_t


@dataclass
class HorizontalData:
    w: np.ndarray
    a: np.ndarray
    M: np.ndarray
    K1: np.ndarray
    K: np.ndarray
    g11: np.ndarray
    g12: np.ndarray
    g22: np.ndarray
    det: np.ndarray


def _fields_at(points, w, metric, f=None, sign=-1.0, need_k=True):
    g11, g12, g22 = metric.components(points)
    det = g11 * g22 - g12 * g12
    a2 = g22 * w * w + 2.0 * g12 * w + g11
    a = np.sqrt(a2)
    M = (g22 * w + g12) / a
    if need_k:
        y11, y12, y22 = metric.y_derivatives(points)
        K1 = 0.5 * (y22 * w * w + 2.0 * y12 * w + y11) / a
        if f is None:
            K = K1.copy()
        else:
            fv = np.broadcast_to(evaluate_points(f, points), w.shape)
            K = K1 + sign * fv * det
    else:
        K1 = K = None
    return HorizontalData(w=w, a=a, M=M, K1=K1, K=K, g11=g11, g12=g12, g22=g22, det=det)


def evaluate_points(f, points):
    f = as_field(f)
    return f(points[..., 0], points[..., 1], points[..., 2])


def horizontal_data(graph: IntrinsicGraph, metric: ContactMetric, f=None, sign="-"):
    """Per-node ``w``, ``a``, ``M``, ``K1`` and ``K = K1 -/+ f det(G)``."""
    return _fields_at(embedded_points(graph), w_field(graph), metric, f, SIGNS[sign])


def k1_m_k_fields(graph: IntrinsicGraph, metric: ContactMetric, f=None, sign="-"):
    return horizontal_data(graph, metric, f, sign)


def area(graph: IntrinsicGraph, metric: ContactMetric):
    """Sub-Riemannian area of the graph."""
    data = _fields_at(embedded_points(graph), w_field(graph), metric, need_k=False)
    return trapezoid(graph.domain, data.a)


_GAUSS_CACHE = {}


def _gauss(order):
    if order not in _GAUSS_CACHE:
        _GAUSS_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GAUSS_CACHE[order]


def subgraph_integral(x, t, u, density, order=16):
    """``int_0^u density(x, s, t - x s) ds`` at every sample (signed when u < 0).

    ``density`` maps an array of points ``(..., 3)`` to values.  The inner
    integral uses fixed Gauss-Legendre nodes, which keeps it a smooth
    function of ``u``.
    """
    nodes, weights = _gauss(order)
    x, t, u = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, t, u)))
    s = 0.5 * u[..., None] * (1.0 + nodes)
    pts = np.stack(np.broadcast_arrays(x[..., None], s, t[..., None] - x[..., None] * s), -1)
    vals = np.broadcast_to(density(pts), s.shape)
    return 0.5 * u * (vals @ weights)


def _det_density(metric):
    return lambda pts: metric.det(pts)


def _f_det_density(metric, f):
    f = as_field(f)
    return lambda pts: evaluate_points(f, pts) * metric.det(pts)


def volume(graph: IntrinsicGraph, metric: ContactMetric, order=16):
    """Riemannian volume between the plane ``y = 0`` and the graph (signed)."""
    X, T = graph.domain.mesh()
    inner = subgraph_integral(X, T, graph.u, _det_density(metric), order)
    return trapezoid(graph.domain, inner)


def pmc_value(graph: IntrinsicGraph, metric: ContactMetric, f, sign="-", order=16):
    """Prescribed mean curvature functional ``area -/+ int_subgraph f``."""
    X, T = graph.domain.mesh()
    inner = subgraph_integral(X, T, graph.u, _f_det_density(metric, f), order)
    return area(graph, metric) + SIGNS[sign] * trapezoid(graph.domain, inner)


def first_variation(graph: IntrinsicGraph, metric: ContactMetric, f, v, sign="-", tol=1e-14):
    """Derivative of :func:`pmc_value` in the direction of the test function ``v``.

    ``v`` must vanish on the boundary of the rectangle.
    """
    vv, vx, vt = test_function(graph.domain, v)
    edge = np.abs(vv[graph.domain.boundary_mask()])
    if edge.size and edge.max() > tol:
        raise ValueError(f"test function does not vanish on the boundary (max {edge.max():.3g})")
    data = horizontal_data(graph, metric, f, sign)
    integrand = data.K * vv + data.M * (vx + 2.0 * graph.u * vt + 2.0 * vv * graph.u_t)
    return trapezoid(graph.domain, integrand)


def horizontal_normal(graph: IntrinsicGraph, metric: ContactMetric, node=None):
    """Frame components ``(alpha, beta, gamma)`` of ``E1 x E2``.

    ``E1, E2`` are the images of d/dx and d/dt; the vector points into the
    subgraph.  Without ``node`` the whole grid is returned.
    """
    pts = embedded_points(graph)
    w = w_field(graph)
    u_t = graph.u_t
    if node is not None:
        pts, w, u_t = pts[node], w[node], u_t[node]
    g11, g12, g22 = metric.components(pts)
    det = g11 * g22 - g12 * g12
    sq = np.sqrt(det)
    # G^{-1} (w, -1) sqrt(det) = (g22 w + g12, -g12 w - g11) / sqrt(det)
    alpha = (g22 * w + g12) / sq
    beta = -(g12 * w + g11) / sq
    gamma = sq * u_t
    return alpha, beta, gamma


def characteristic_frame(graph: IntrinsicGraph, metric: ContactMetric, node=None):
    """``(<Z, X>, <Z, Y>)`` for the unit characteristic field ``Z``.

    ``<Z, Y> = M``; ``<Z, X>`` is recovered from ``|Z| = 1`` on the branch
    continuous with ``Z ~ X + w Y`` (always the positive root).
    """
    pts = embedded_points(graph)
    w = w_field(graph)
    if node is not None:
        pts, w = pts[node], w[node]
    d = _fields_at(pts, w, metric, need_k=False)
    zy = d.M
    zx = (d.g12 * zy + np.sqrt(d.det * (d.g22 - zy * zy))) / d.g22
    return zx, zy
