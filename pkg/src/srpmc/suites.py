"""Seeded randomized check suites shared by the command line and the tests.

Each suite draws its cases from ``numpy.random.default_rng(seed)`` and
returns plain records, so a fixed seed reproduces a run exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    ContactMetric,
    connection_coefficients,
    frame,
    heisenberg,
    inner,
    j_operator,
    levi_civita,
    sr_connection,
    tau_operator,
)
from .graph import GraphDomain, IntrinsicGraph, first_variation, pmc_value
from .variation import AmbientField, ParamSurface, first_variation_general, flow_area_derivative

__all__ = [
    "random_polynomial",
    "random_polynomial_metric",
    "random_sin_metric",
    "random_graph_expression",
    "random_test_function",
    "random_ambient_field",
    "VariationCase",
    "graph_variation_suite",
    "geometry_identity_suite",
    "surface_variation_suite",
]


def _c(v):
    return f"{v:.6f}"


def random_polynomial(rng, degree=4, terms=6, scale=1.0):
    """Text of a random polynomial in ``x, y, t`` of total degree at most ``degree``."""
    parts = []
    for _ in range(terms):
        powers = rng.multinomial(int(rng.integers(0, degree + 1)), [1 / 3] * 3)
        mono = "*".join(f"{v}^{k}" if k > 1 else v for v, k in zip("xyt", powers) if k > 0)
        coef = _c(scale * rng.uniform(-1, 1))
        parts.append(f"{coef}*{mono}" if mono else coef)
    return " + ".join(parts).replace("+ -", "- ")


def random_polynomial_metric(rng):
    """Polynomial ``G`` that is positive definite on ``[-1, 1]^3``.

    The diagonal is ``1 +`` squares and ``|g12| <= 0.45`` there.
    """
    def square():
        lin = " + ".join(f"{_c(rng.uniform(-0.4, 0.4))}*{v}" for v in "xyt")
        return f"({lin})^2"

    g11 = f"1 + {square()}"
    g22 = f"1 + {square()}"
    g12 = " + ".join(f"{_c(rng.uniform(-0.15, 0.15))}*{v}" for v in ("x", "y*t", "1"))
    return ContactMetric(g11, g12, g22)


def random_sin_metric(rng, amplitude=0.1):
    """``g_ij = delta_ij + amplitude * sin(...)`` terms."""
    def term():
        a, b, c = rng.uniform(-1.5, 1.5, 3)
        return f"{amplitude * rng.uniform(0.3, 1.0):.6f}*sin({_c(a)}*x + {_c(b)}*y + {_c(c)}*t)"

    return ContactMetric(f"1 + {term()}", f"0.5*{term()}", f"1 + {term()}")


def random_graph_expression(rng, amplitude=0.3):
    a = rng.uniform(-amplitude, amplitude, 6)
    k = rng.uniform(0.5, 2.0, 2)
    return (
        f"{_c(a[0])} + {_c(a[1])}*x + {_c(a[2])}*t + {_c(a[3])}*x*t"
        f" + {_c(a[4])}*sin({_c(k[0])}*x + {_c(k[1])}*t) + {_c(a[5])}*x^2"
    ).replace("+ -", "- ")


def random_test_function(rng, domain: GraphDomain):
    """Smooth function vanishing on the boundary of ``domain``."""
    lx = domain.x1 - domain.x0
    lt = domain.t1 - domain.t0
    c = rng.uniform(-1, 1, 3)
    return (
        f"sin(pi*(x - {domain.x0!r})/{lx!r})*sin(pi*(t - {domain.t0!r})/{lt!r})"
        f"*({_c(c[0])} + {_c(c[1])}*x + {_c(c[2])}*t)"
    )


def random_ambient_field(rng, box):
    """Compactly supported field with random trigonometric frame components."""
    comps = []
    for _ in range(3):
        a, b, c, d = rng.uniform(-1, 1, 4)
        comps.append(f"{_c(a)} + {_c(b)}*sin({_c(2 * c)}*x + {_c(2 * d)}*t + y)")
    return AmbientField(*comps, box=box)


# ---------------------------------------------------------------------------
# graph weak form against finite differences of the functional


@dataclass
class VariationCase:
    label: str
    analytic: float
    oracle: float

    @property
    def error(self):
        return abs(self.analytic - self.oracle)

    @property
    def rel_error(self):
        return self.error / max(abs(self.oracle), 1e-300)


def graph_variation_suite(cases=20, seed=0, n=64, s_step=1e-4, metric=None, f=None, sign="-"):
    """``graph.first_variation`` against ``(J(u + s v) - J(u - s v)) / 2s``.

    Cases alternate between the Heisenberg metric and random ``sin``
    perturbations unless ``metric`` is given; ``f`` defaults to random.
    """
    rng = np.random.default_rng(seed)
    domain = GraphDomain(-0.5, 0.5, -0.5, 0.5, n, n)
    out = []
    for k in range(cases):
        if metric is not None:
            m, mlabel = metric, "given"
        elif k % 2 == 0:
            m, mlabel = heisenberg(), "H1"
        else:
            m, mlabel = random_sin_metric(rng), "sin"
        if f is None:
            a, b = rng.uniform(-1, 1, 2)
            ff = f"{_c(a)} + {_c(0.5 * b)}*cos(x - 2*t + y)"
        else:
            ff = f
        u = random_graph_expression(rng)
        v = random_test_function(rng, domain)
        g = IntrinsicGraph.from_expression(domain, u)
        analytic = first_variation(g, m, ff, v, sign)
        jp = pmc_value(g.plus(v, s_step), m, ff, sign)
        jm = pmc_value(g.plus(v, -s_step), m, ff, sign)
        out.append(VariationCase(f"{k}:{mlabel}", analytic, (jp - jm) / (2 * s_step)))
    return out


# ---------------------------------------------------------------------------
# geometry identities


def _lie_bracket_xy(p):
    """``[X, Y]`` from the coordinate Jacobians of the frame (``-2 T`` in this chart)."""
    X, Y, _ = frame(p)
    DX = np.zeros(p.shape + (3,))
    DY = np.zeros(p.shape + (3,))
    DX[..., 2, 1] = 1.0  # X = (1, 0, y)
    DY[..., 2, 0] = -1.0  # Y = (0, 1, -x)
    return np.einsum("...ij,...j->...i", DY, X) - np.einsum("...ij,...j->...i", DX, Y)


def _curve_compatibility(metric, rng, samples=8, h=1e-5):
    """``d/ds <V, W> - <nabla V, W> - <V, nabla W>`` along a random quadratic curve."""
    c0, c1, c2 = rng.uniform(-0.6, 0.6, (3, 3))
    v0, v1 = rng.uniform(-1, 1, (2, 3))
    w0, w1 = rng.uniform(-1, 1, (2, 3))
    s = np.linspace(-0.5, 0.5, samples)[:, None]

    def gamma(s):
        return c0 + c1 * s + c2 * s * s

    def V(s):
        return v0 + v1 * np.sin(s)

    def W(s):
        return w0 + w1 * s * s

    def product(s):
        return inner(metric, gamma(s), V(s), W(s))

    lhs = (product(s + h) - product(s - h)) / (2 * h)
    p, dg = gamma(s), c1 + 2 * c2 * s
    C = connection_coefficients(metric, p)
    nV = v1 * np.cos(s) + np.einsum("...kij,...i,...j->...k", C, dg, V(s))
    nW = w1 * 2 * s + np.einsum("...kij,...i,...j->...k", C, dg, W(s))
    rhs = inner(metric, p, nV, W(s)) + inner(metric, p, V(s), nW)
    return float(np.max(np.abs(lhs - rhs)))


def geometry_identity_suite(metrics=10, points=100, seed=0):
    """Worst residuals of the contact identities over random metrics and points.

    Keys: ``bracket`` (``2<J V, W> + <[V, W], T>``), ``J_T``, ``tau_T``,
    ``orientation_min`` (smallest ``2 <J v, J v>``), ``nabla_T``,
    ``compatibility``, ``DTT``, ``T_unit`` and ``T_orthogonal``.
    """
    rng = np.random.default_rng(seed)
    worst = dict.fromkeys(
        ["bracket", "J_T", "tau_T", "nabla_T", "compatibility", "DTT", "T_unit", "T_orthogonal"], 0.0
    )
    worst["orientation_min"] = np.inf
    for _ in range(metrics):
        m = random_polynomial_metric(rng)
        p = rng.uniform(-1, 1, (points, 3))
        X, Y, T = frame(p)
        a = rng.uniform(-1, 1, (points, 2))
        b = rng.uniform(-1, 1, (points, 2))
        V = a[:, :1] * X + a[:, 1:] * Y
        W = b[:, :1] * X + b[:, 1:] * Y
        cross_coef = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        bracket = cross_coef[:, None] * _lie_bracket_xy(p)
        r = 2 * inner(m, p, j_operator(m, p, V), W) + inner(m, p, bracket, T)
        worst["bracket"] = max(worst["bracket"], float(np.max(np.abs(r))))
        worst["J_T"] = max(worst["J_T"], float(np.max(np.abs(j_operator(m, p, T)))))
        worst["tau_T"] = max(worst["tau_T"], float(np.max(np.abs(tau_operator(m, p, T)))))
        JV = j_operator(m, p, V)
        worst["orientation_min"] = min(worst["orientation_min"], float(np.min(2 * inner(m, p, JV, JV))))
        v = rng.uniform(-1, 1, (points, 3))
        zero = np.zeros((points, 3, 3))
        worst["nabla_T"] = max(worst["nabla_T"], float(np.max(np.abs(sr_connection(m, p, v, T, zero)))))
        worst["DTT"] = max(worst["DTT"], float(np.max(np.abs(levi_civita(m, p, T, T, zero)))))
        worst["T_unit"] = max(worst["T_unit"], float(np.max(np.abs(inner(m, p, T, T) - 1))))
        orth = max(float(np.max(np.abs(inner(m, p, T, X)))), float(np.max(np.abs(inner(m, p, T, Y)))))
        worst["T_orthogonal"] = max(worst["T_orthogonal"], orth)
        worst["compatibility"] = max(worst["compatibility"], _curve_compatibility(m, rng))
    return worst


# ---------------------------------------------------------------------------
# general first variation against the flow oracle


def surface_variation_suite(surfaces=10, fields=5, seed=0, n=41, s_step=1e-4, metric=None):
    """First variation against the flow oracle on random graph surfaces.

    Surface 0 is the vertical plane ``y = 0``.  Fields are supported in boxes
    strictly inside the parameter square.
    """
    rng = np.random.default_rng(seed)
    grid = np.linspace(-0.5, 0.5, n)
    out = []
    for k in range(surfaces + 1):
        m = metric if metric is not None else (heisenberg() if k % 2 == 0 else random_sin_metric(rng))
        u = "0" if k == 0 else random_graph_expression(rng, 0.2)
        surf = ParamSurface.intrinsic_graph(u, grid, grid)
        for j in range(fields):
            lo = np.array([rng.uniform(-0.4, -0.1), -2.0, rng.uniform(-0.25, -0.05)])
            hi = np.array([rng.uniform(0.1, 0.4), 2.0, rng.uniform(0.05, 0.25)])
            U = random_ambient_field(rng, (lo, hi))
            out.append(
                VariationCase(
                    f"{k}.{j}:{'plane' if k == 0 else 'graph'}",
                    first_variation_general(surf, m, U),
                    flow_area_derivative(surf, m, U, s_step),
                )
            )
    return out

