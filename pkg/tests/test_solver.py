import numpy as np
import pytest

from srpmc.geometry import ContactMetric, heisenberg
from srpmc.graph import GraphDomain
from srpmc.solver import (
    DiscretizedProblem,
    SolverConfig,
    assemble_gradient,
    assemble_residual,
    discrete_functional,
    discrete_volume,
    multiplier_estimates,
    solve,
    volume_constrained_solve,
    volume_gradient,
)

H = heisenberg()
PERTURBED = ContactMetric("1 + 0.1*sin(x + 2*t)", "0.05*sin(x*y - t)", "1 + 0.1*cos(y - x)")


def _grid(n=9, seed=0):
    rng = np.random.default_rng(seed)
    return 0.1 * rng.normal(size=(n, n))


@pytest.mark.parametrize("metric, f", [(H, "1"), (PERTURBED, "0.5 + x*t")])
def test_gradient_is_derivative_of_discrete_functional(metric, f):
    prob = DiscretizedProblem(GraphDomain.unit(9), 0.0, metric, f)
    u = _grid()
    g = assemble_gradient(prob, u)
    h = 1e-6
    for i, j in [(1, 1), (4, 5), (7, 2)]:
        e = np.zeros_like(u)
        e[i, j] = h
        fd = (discrete_functional(prob, u + e) - discrete_functional(prob, u - e)) / (2 * h)
        assert g[i, j] == pytest.approx(fd, rel=1e-6, abs=1e-10)


def test_volume_gradient_is_derivative_of_discrete_volume():
    prob = DiscretizedProblem(GraphDomain.unit(9), 0.0, PERTURBED)
    u = _grid(seed=1)
    g = volume_gradient(prob, u)
    h = 1e-6
    for i, j in [(2, 2), (6, 3)]:
        e = np.zeros_like(u)
        e[i, j] = h
        fd = (discrete_volume(prob, u + e) - discrete_volume(prob, u - e)) / (2 * h)
        assert g[i, j] == pytest.approx(fd, rel=1e-7)


def test_plane_is_already_critical():
    prob = DiscretizedProblem(GraphDomain.unit(17), "0.3*x + 0.1", H)
    res = solve(prob)
    assert res.converged and res.iterations == 0
    assert np.max(np.abs(assemble_residual(prob, res.u))) <= 1e-12


def test_exact_minimal_graph_converges_at_second_order():
    exact = "0.5*x*t/(1 + 0.5*x*x)"
    errors = []
    for n in (17, 33, 65):
        prob = DiscretizedProblem(GraphDomain.unit(n), exact, H)
        res = solve(prob)
        assert res.converged and res.residual <= 1e-10
        X, T = prob.domain.mesh()
        errors.append(np.max(np.abs(res.u - 0.5 * X * T / (1 + 0.5 * X * X))))
    assert errors[0] / errors[1] > 3.5 and errors[1] / errors[2] > 3.5


def test_cmc_problem_converges():
    prob = DiscretizedProblem(GraphDomain.unit(33), 0.0, H, 1.0)
    res = solve(prob)
    assert res.converged and res.residual <= 1e-10
    assert res.history[-1] <= 1e-10
    assert 0.1 < res.u.max() < 0.2


def test_iteration_cap_reports_non_convergence():
    prob = DiscretizedProblem(GraphDomain.unit(33), 0.0, H, 1.0)
    res = solve(prob, SolverConfig(max_iter=1))
    assert not res.converged


def test_volume_constrained_solve():
    prob = DiscretizedProblem(GraphDomain.unit(17), 0.0, H)
    res = volume_constrained_solve(prob, 0.05)
    assert res.converged
    assert res.volume == pytest.approx(0.05, abs=1e-12)
    a, b = res.multipliers
    assert a == pytest.approx(b, rel=1e-10)
    assert a == pytest.approx(res.multiplier, rel=1e-8)
    R = assemble_residual(prob.with_f(res.multiplier), res.u)
    assert np.max(np.abs(R)) <= 1e-10


def test_multiplier_projections_differ_away_from_critical_points():
    prob = DiscretizedProblem(GraphDomain.unit(17), 0.0, H)
    u = np.zeros((17, 17))
    u[1:-1, 1:-1] = _grid(15, seed=3)
    a, b = multiplier_estimates(prob, u)
    assert abs(a - b) > 1e-3
