import numpy as np
import pytest

from srpmc.curves import (
    CurveExitError,
    along_curve,
    curve_table,
    foliation_jacobian,
    horizontality_defect,
    regularity_diagnostic,
    retrace_error,
    trace,
    uniqueness_check,
)
from srpmc.geometry import heisenberg
from srpmc.graph import GraphDomain, IntrinsicGraph

H = heisenberg()


def linear_graph():
    return IntrinsicGraph.from_expression(GraphDomain(-1, 1, -1, 2, 41, 61), "x")


def vertical_graph():
    return IntrinsicGraph.from_expression(GraphDomain(0, 1, 0.1, 2.0, 201, 401), "t")


def test_linear_graph_curves_are_parabolas():
    g = linear_graph()
    a, b = 0.2, 0.3
    c = trace(g, (a, b), 0.5, 1e-3)
    assert not c.clipped
    assert np.max(np.abs(c.t - (b + c.s**2 - a**2))) <= 1e-8


def test_exponential_curves_are_fourth_order():
    g = vertical_graph()
    a, b = 0.5, 0.5
    errors = []
    for h in (0.05, 0.025):
        c = trace(g, (a, b), 0.2, h)
        errors.append(np.max(np.abs(c.t - b * np.exp(2 * (c.s - a)))))
    assert errors[0] / errors[1] >= 12
    c = trace(g, (a, b), 0.2, 1e-3)
    assert np.max(np.abs(c.t - b * np.exp(2 * (c.s - a)))) <= 1e-8


def test_foliation_jacobian_closed_form():
    g = vertical_graph()
    c = trace(g, (0.5, 0.5), 0.2, 1e-3)
    assert np.allclose(c.q, np.exp(2 * (c.s - 0.5)), rtol=1e-8)
    assert np.allclose(foliation_jacobian(g, c), c.q)


def test_foliation_jacobian_matches_neighbouring_traces():
    d = GraphDomain.unit(65)
    g = IntrinsicGraph.from_expression(d, "0.3*sin(2*x + t) + 0.2*t*t")
    a, b, eps = 0.5, 0.5, 1e-5
    c = trace(g, (a, b), 0.3, 1e-3)
    up = trace(g, (a, b + eps), 0.3, 1e-3)
    down = trace(g, (a, b - eps), 0.3, 1e-3)
    fd = (up.t - down.t) / (2 * eps)
    assert np.max(np.abs(fd - c.q) / np.abs(c.q)) <= 1e-5
    assert np.all(c.q > 0)


def test_retrace_and_uniqueness():
    g = IntrinsicGraph.from_expression(GraphDomain.unit(33), "0.3*sin(2*x + t)")
    assert retrace_error(g, (0.3, 0.5), 0.4, 1e-3) <= 1e-10
    assert uniqueness_check(g, (0.3, 0.5), 0.4, 1e-3)


def test_leaving_the_domain_clips_the_curve():
    g = IntrinsicGraph.from_expression(GraphDomain.unit(17), "1")
    c = trace(g, (0.5, 0.5), 0.5, 1e-2)
    assert c.clipped
    assert np.all((c.t >= -1e-12) & (c.t <= 1 + 1e-12))
    with pytest.raises(CurveExitError):
        trace(g, (1.5, 0.5), 0.1, 1e-2)


def test_lift_is_horizontal():
    g = IntrinsicGraph.from_expression(GraphDomain.unit(65), "0.3*sin(2*x + t)")
    c = trace(g, (0.5, 0.5), 0.3, 1e-3)
    assert horizontality_defect(c) <= 1e-6


def test_planes_satisfy_the_regularity_identity_exactly():
    g = IntrinsicGraph.from_expression(GraphDomain.unit(33), "0.3*x + 0.1")
    curves = [trace(g, (0.5, b), 0.3, 1e-3) for b in (0.3, 0.5, 0.7)]
    rep = regularity_diagnostic(g, H, 0.0, curves)
    assert rep.sup <= 1e-10


def test_curve_table_columns():
    g = linear_graph()
    c = along_curve(g, H, 0.0, trace(g, (0.0, 0.5), 0.1, 1e-2))
    tab = curve_table(c)
    assert tab.shape == (len(c.s), 6)
    assert np.all(np.isnan(tab[:, 5]))
