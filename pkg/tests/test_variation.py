import numpy as np
import pytest

from srpmc.expr import parse, substitute
from srpmc.geometry import ContactMetric, contact_form, frame, heisenberg, inner, volume_form
from srpmc.graph import GraphDomain, IntrinsicGraph, area, characteristic_frame, first_variation
from srpmc.io import write_surface_csv
from srpmc.solver import DiscretizedProblem, solve
from srpmc.variation import (
    AmbientField,
    DegenerateImmersionError,
    ParamSurface,
    SingularSupportError,
    first_variation_general,
    flow_area_derivative,
    flow_volume_derivative,
    h0_estimate,
    mean_curvature,
    sr_area,
    surface_frame,
)

H = heisenberg()
PERTURBED = ContactMetric("1 + 0.2*x*x + 0.1*sin(t)", "0.1*y*x", "1 + 0.3*y*y + 0.1*cos(x + t)")
U_GRAPH = "0.3*sin(x)*t + 0.2*x*x - 0.1*t"
GRID = np.linspace(-0.5, 0.5, 41)
INNER_BOX = ([-0.3, -1.0, -0.3], [0.3, 1.0, 0.3])


def horizontal_plane(n=5):
    s = np.linspace(-1, 1, n)
    return ParamSurface(lambda a, b: np.stack(np.broadcast_arrays(a, b, 0 * a), -1), s, s)


def test_vertical_plane_frame():
    fr = surface_frame(ParamSurface.vertical_plane(), H)
    Y = frame(fr.points)[1]
    assert np.allclose(fr.N, -Y)
    assert np.allclose(fr.nh_norm, 1.0)
    assert np.allclose(fr.Z, [1, 0, 0])


def test_horizontal_plane_is_singular_at_origin():
    fr = surface_frame(horizontal_plane(), H)
    assert fr.singular[2, 2]
    assert fr.singular.sum() == 1
    assert np.all(np.isnan(fr.Z[2, 2]))


@pytest.mark.parametrize("metric", [H, PERTURBED])
def test_frame_identities(metric):
    fr = surface_frame(ParamSurface.intrinsic_graph(U_GRAPH, GRID, GRID), metric)
    p = fr.points
    assert np.allclose(inner(metric, p, fr.N, fr.N), 1.0, atol=1e-12)
    assert np.allclose(inner(metric, p, fr.Z, fr.Z), 1.0, atol=1e-12)
    assert np.max(np.abs(inner(metric, p, fr.Z, fr.nu))) <= 1e-10
    assert np.max(np.abs(inner(metric, p, fr.S, fr.N))) <= 1e-10
    assert np.max(np.abs(inner(metric, p, fr.Z, fr.N))) <= 1e-10
    assert np.max(np.abs(contact_form(p, fr.Z))) <= 1e-10
    assert np.all(volume_form(metric, p, fr.nu, fr.Z, frame(p)[2]) > 0)


def test_graph_frame_matches_graph_module():
    d = GraphDomain(-0.5, 0.5, -0.5, 0.5, 41, 41)
    g = IntrinsicGraph.from_expression(d, U_GRAPH)
    fr = surface_frame(ParamSurface.intrinsic_graph(U_GRAPH, d.x, d.t), PERTURBED)
    zx, zy = characteristic_frame(g, PERTURBED)
    X, Y, _ = frame(fr.points)
    assert np.max(np.abs(inner(PERTURBED, fr.points, fr.Z, X) - zx)) <= 1e-10
    assert np.max(np.abs(inner(PERTURBED, fr.points, fr.Z, Y) - zy)) <= 1e-10


def test_areas():
    assert sr_area(ParamSurface.vertical_plane(), H) == pytest.approx(1.0, abs=1e-14)
    d = GraphDomain(-0.5, 0.5, -0.5, 0.5, 41, 41)
    g = IntrinsicGraph.from_expression(d, U_GRAPH)
    surf = ParamSurface.intrinsic_graph(U_GRAPH, d.x, d.t)
    assert sr_area(surf, PERTURBED) == pytest.approx(area(g, PERTURBED), abs=1e-8)
    assert abs(sr_area(surf.rescaled(2.0, 0.25), PERTURBED) - sr_area(surf, PERTURBED)) <= 1e-10


def test_finite_difference_tangents():
    exact = ParamSurface.intrinsic_graph(U_GRAPH, GRID, GRID)
    fd = ParamSurface(exact.func, GRID, GRID)
    assert sr_area(fd, PERTURBED) == pytest.approx(sr_area(exact, PERTURBED), rel=1e-9)


def test_degenerate_immersion():
    s = np.linspace(0, 1, 5)
    flat = ParamSurface(lambda a, b: np.stack(np.broadcast_arrays(a + b, 0 * a, 0 * a), -1), s, s)
    with pytest.raises(DegenerateImmersionError):
        surface_frame(flat, H)


def test_zero_field():
    surf = ParamSurface.vertical_plane()
    assert first_variation_general(surf, H, AmbientField.zero()) == 0.0
    assert flow_area_derivative(surf, H, AmbientField.zero()) == 0.0


def test_field_vanishes_outside_box():
    U = AmbientField("1 + x", "y", "2", box=INNER_BOX)
    p = np.array([[0.31, 0.0, 0.0], [0.0, 0.0, -0.5], [2.0, 2.0, 2.0]])
    val, jac = U.value_and_jacobian(p)
    assert np.max(np.abs(val)) <= 1e-14 and np.max(np.abs(jac)) <= 1e-14


def test_field_jacobian_matches_finite_differences():
    U = AmbientField("sin(x + t)", "x*y", "cos(y)", box=([-1, -1, -1], [1, 1, 1]))
    p = np.array([0.2, -0.3, 0.1])
    J = U.jacobian(p)
    h = 1e-6
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        assert np.allclose(J[:, k], (U.value(p + e) - U.value(p - e)) / (2 * h), atol=1e-8)


def test_planes_are_critical():
    surf = ParamSurface.vertical_plane(-0.5, 0.5, -0.5, 0.5, 41)
    U = AmbientField(0, 1, 0, box=INNER_BOX)
    assert abs(first_variation_general(surf, H, U)) <= 1e-6
    assert abs(flow_area_derivative(surf, H, U)) <= 1e-6


def test_left_translations_preserve_area():
    # X - 2yT and Y + 2xT generate left translations, which are isometries of H
    surf = ParamSurface.intrinsic_graph(U_GRAPH, GRID, GRID)
    for U in (AmbientField(1, 0, "-2*y"), AmbientField(0, 1, "2*x")):
        assert abs(flow_area_derivative(surf, H, U)) <= 1e-9
        assert abs(first_variation_general(surf, H, U)) <= 1e-9


@pytest.mark.parametrize("metric", [H, PERTURBED])
@pytest.mark.parametrize("comps", [(1, 0, 0), (0, 1, 0), (0, 0, 1), ("x*t", "y + 1", "sin(x)")])
def test_first_variation_matches_flow(metric, comps):
    surf = ParamSurface.intrinsic_graph(U_GRAPH, GRID, GRID)
    U = AmbientField(*comps, box=INNER_BOX)
    a = first_variation_general(surf, metric, U)
    b = flow_area_derivative(surf, metric, U)
    assert abs(a - b) <= max(1e-6, 1e-4 * abs(b))


def test_singular_support_is_refused():
    U = AmbientField(1, 0, 0, box=([-0.5, -0.5, -0.5], [0.5, 0.5, 0.5]))
    with pytest.raises(SingularSupportError):
        first_variation_general(horizontal_plane(), H, U)
    far = AmbientField(1, 0, 0, box=([0.4, 0.4, -0.5], [0.9, 0.9, 0.5]))
    assert np.isfinite(first_variation_general(horizontal_plane(), H, far))


def test_criticality_transfer_to_graphs():
    # the flow of v(x, t + xy) Y moves the graph of u to the graph of u + s v
    d = GraphDomain(-0.5, 0.5, -0.5, 0.5, 41, 41)
    g = IntrinsicGraph.from_expression(d, U_GRAPH)
    surf = ParamSurface.intrinsic_graph(U_GRAPH, d.x, d.t)
    v = "sin(pi*(x + 0.5))*sin(pi*(t + 0.5))"
    U = AmbientField(0, substitute(parse(v), {"t": parse("t + x*y")}), 0)
    a = first_variation_general(surf, PERTURBED, U)
    b = first_variation(g, PERTURBED, 0.0, v)
    assert a == pytest.approx(b, rel=1e-5)


def test_mean_curvature_of_plane_and_sign():
    plane = ParamSurface.vertical_plane()
    assert np.nanmax(np.abs(mean_curvature(plane, H))) <= 1e-12
    surf = ParamSurface.intrinsic_graph("0.2*x*x + 0.3*t", GRID, GRID)
    H1 = mean_curvature(surf, H)
    H2 = mean_curvature(surf.flipped(), H)
    assert np.allclose(H1, -H2, atol=1e-8)
    assert np.nanmax(np.abs(H1)) > 0.1


def test_h0_on_plane_and_unusable_field():
    plane = ParamSurface.vertical_plane()
    U = AmbientField(0, 1, 0, box=([0.1, -1, 0.1], [0.9, 1, 0.9]))
    assert abs(h0_estimate(plane, H, U)) <= 1e-8
    tangential = AmbientField(1, 0, 0, box=([0.1, -1, 0.1], [0.9, 1, 0.9]))
    with pytest.raises(ValueError, match="volume derivative"):
        h0_estimate(plane, H, tangential)


def test_volume_derivative_sign():
    # the normal of the y = 0 plane points to y < 0; pushing towards y > 0 grows that side
    plane = ParamSurface.vertical_plane()
    U = AmbientField(0, 1, 0)
    assert flow_volume_derivative(plane, H, U) == pytest.approx(1.0, rel=1e-10)
    assert flow_volume_derivative(plane.flipped(), H, U) == pytest.approx(-1.0, rel=1e-10)


def test_cmc_output_curvature_and_multiplier():
    prob = DiscretizedProblem(GraphDomain.unit(65), 0.0, H, 1.0)
    res = solve(prob)
    surf = ParamSurface.from_graph(res.graph(prob.domain))
    X, T = prob.domain.mesh()
    middle = (np.abs(X - 0.5) <= 0.25) & (np.abs(T - 0.5) <= 0.25)
    assert np.max(np.abs(mean_curvature(surf, H) - 1.0)[middle]) <= 1e-3
    U = AmbientField(0, 1, 0, box=([0.1, -1, 0.1], [0.9, 1, 0.9]))
    assert h0_estimate(surf, H, U) == pytest.approx(1.0, abs=1e-3)


def test_surface_csv_round_trip(tmp_path):
    surf = ParamSurface.intrinsic_graph(U_GRAPH, GRID, GRID)
    path = tmp_path / "surface.csv"
    write_surface_csv(path, surf)
    back = ParamSurface.read_csv(path)
    assert np.array_equal(back.s1, surf.s1)
    assert np.allclose(back.samples()[0], surf.samples()[0], atol=1e-15)
    assert sr_area(back, PERTURBED) == pytest.approx(sr_area(surf, PERTURBED), rel=1e-6)


def test_surface_csv_must_be_a_full_grid(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("s1,s2,x,y,t\n0,0,0,0,0\n0,1,0,0,1\n1,0,1,0,0\n")
    with pytest.raises(ValueError, match="grid"):
        ParamSurface.read_csv(path)
