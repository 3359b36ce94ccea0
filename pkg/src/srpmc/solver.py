"""Discrete critical points of the prescribed mean curvature functional.

The unknown is the nodal vector of a piecewise bilinear function ``u`` on the
grid of a :class:`~srpmc.graph.GraphDomain`.  The discrete functional is

    J_h(u) = sum over cells, 2x2 Gauss points of  weight * (a(u) -/+ F(u))

with ``a`` the area density and ``F(x, t, U)`` the integral of ``f det(G)``
over the segment ``0 <= s <= U`` of the subgraph.  Its gradient at node ``i``
is the weak first variation tested against the hat function of node ``i``;
divided by the cell area it is the residual driven to zero by a damped
Newton iteration whose Jacobian is assembled by colored central differences.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .curves import RegularityReport, regularity_diagnostic, trace, interpolant
from .expr import ScalarField, as_field
from .geometry import ContactMetric
from .graph import SIGNS, GraphDomain, IntrinsicGraph, _fields_at, _gauss, evaluate_points

__all__ = [
    "DiscretizedProblem",
    "SolverConfig",
    "SolveResult",
    "discrete_functional",
    "discrete_volume",
    "assemble_gradient",
    "assemble_residual",
    "volume_gradient",
    "solve",
    "volume_constrained_solve",
    "multiplier_estimates",
    "refine_study",
]

log = logging.getLogger(__name__)

_G = 0.5 / np.sqrt(3.0)
_GAUSS_1D = (0.5 - _G, 0.5 + _G)


@dataclass(frozen=True)
class DiscretizedProblem:
    domain: GraphDomain
    boundary: ScalarField
    metric: ContactMetric
    f: ScalarField
    sign: str = "-"

    def __init__(self, domain, boundary, metric, f=0.0, sign="-"):
        if sign not in SIGNS:
            raise ValueError("sign must be '-' or '+'")
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "boundary", as_field(boundary))
        object.__setattr__(self, "metric", metric)
        object.__setattr__(self, "f", as_field(f))
        object.__setattr__(self, "sign", sign)

    def with_grid(self, nx, nt=None):
        return replace(self, domain=self.domain.with_grid(nx, nt))

    def with_f(self, f):
        return replace(self, f=as_field(f))

    def boundary_grid(self):
        """Boundary data evaluated on the whole grid (the default initial guess)."""
        X, T = self.domain.mesh()
        return np.broadcast_to(self.boundary(X, 0.0, T), X.shape).copy()


@dataclass
class SolverConfig:
    tol: float = 1e-10
    max_iter: int = 100
    damping: bool = True
    max_halvings: int = 20
    armijo: float = 1e-4
    fd_step: float = 1e-6
    vol_tol: float = 1e-12
    quad_order: int = 16


@dataclass
class SolveResult:
    u: np.ndarray
    residual: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)
    multiplier: float | None = None
    volume: float | None = None
    multipliers: tuple | None = None

    def graph(self, domain):
        return IntrinsicGraph.from_samples(domain, self.u)


# ---------------------------------------------------------------------------
# Q1 assembly


class _Cells:
    """Gauss-point geometry for the grid; shared by every assembly call."""

    def __init__(self, domain: GraphDomain):
        self.domain = domain
        hx, ht = domain.hx, domain.ht
        x, t = domain.x, domain.t
        self.weight = 0.25 * hx * ht
        self.points = []
        for xi in _GAUSS_1D:
            for eta in _GAUSS_1D:
                X, T = np.meshgrid(x[:-1] + xi * hx, t[:-1] + eta * ht, indexing="ij")
                N = ((1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta, xi * eta)
                Nx = (-(1 - eta) / hx, (1 - eta) / hx, -eta / hx, eta / hx)
                Nt = (-(1 - xi) / ht, -xi / ht, (1 - xi) / ht, xi / ht)
                self.points.append((X, T, N, Nx, Nt))

    @staticmethod
    def corners(u):
        return u[:-1, :-1], u[1:, :-1], u[:-1, 1:], u[1:, 1:]

    @staticmethod
    def scatter(out, parts):
        out[:-1, :-1] += parts[0]
        out[1:, :-1] += parts[1]
        out[:-1, 1:] += parts[2]
        out[1:, 1:] += parts[3]


_CELLS = {}


def _cells(domain):
    c = _CELLS.get(domain)
    if c is None:
        c = _CELLS[domain] = _Cells(domain)
    return c


def _at_gauss(u, X, T, N, Nx, Nt):
    c = _Cells.corners(u)
    ug = sum(n * ci for n, ci in zip(N, c))
    ux = sum(n * ci for n, ci in zip(Nx, c))
    ut = sum(n * ci for n, ci in zip(Nt, c))
    pts = np.stack([X, ug, T - X * ug], -1)
    return ug, ux, ut, pts


def discrete_functional(problem: DiscretizedProblem, u, order=16):
    """Value of the discrete functional ``J_h`` at the nodal vector ``u``."""
    cells = _cells(problem.domain)
    sgn = SIGNS[problem.sign]
    metric, f = problem.metric, problem.f
    nodes, weights = _gauss(order)
    total = 0.0
    for X, T, N, Nx, Nt in cells.points:
        ug, ux, ut, pts = _at_gauss(u, X, T, N, Nx, Nt)
        d = _fields_at(pts, ux + 2.0 * ug * ut, metric, need_k=False)
        s = 0.5 * ug[..., None] * (1.0 + nodes)
        sub = np.stack(np.broadcast_arrays(X[..., None], s, T[..., None] - X[..., None] * s), -1)
        dens = np.broadcast_to(evaluate_points(f, sub), s.shape) * metric.det(sub)
        F = 0.5 * ug * (dens @ weights)
        total += float(np.sum(cells.weight * (d.a + sgn * F)))
    return total


def discrete_volume(problem: DiscretizedProblem, u, order=16):
    """Riemannian volume of the discrete subgraph (same quadrature as ``J_h``)."""
    cells = _cells(problem.domain)
    metric = problem.metric
    nodes, weights = _gauss(order)
    total = 0.0
    for X, T, N, Nx, Nt in cells.points:
        ug, _, _, _ = _at_gauss(u, X, T, N, Nx, Nt)
        s = 0.5 * ug[..., None] * (1.0 + nodes)
        sub = np.stack(np.broadcast_arrays(X[..., None], s, T[..., None] - X[..., None] * s), -1)
        total += float(np.sum(cells.weight * 0.5 * ug * (metric.det(sub) @ weights)))
    return total


def assemble_gradient(problem: DiscretizedProblem, u, include_f=True):
    """Nodal gradient of ``J_h`` (all nodes, boundary included)."""
    cells = _cells(problem.domain)
    sgn = SIGNS[problem.sign]
    metric = problem.metric
    out = np.zeros(u.shape)
    for X, T, N, Nx, Nt in cells.points:
        ug, ux, ut, pts = _at_gauss(u, X, T, N, Nx, Nt)
        d = _fields_at(pts, ux + 2.0 * ug * ut, metric, problem.f if include_f else None, sgn)
        W = cells.weight
        parts = [W * (d.K * n + d.M * (nx + 2.0 * ug * nt + 2.0 * n * ut)) for n, nx, nt in zip(N, Nx, Nt)]
        _Cells.scatter(out, parts)
    return out


def volume_gradient(problem: DiscretizedProblem, u):
    """Nodal gradient of :func:`discrete_volume`."""
    cells = _cells(problem.domain)
    out = np.zeros(u.shape)
    for X, T, N, Nx, Nt in cells.points:
        ug, _, _, pts = _at_gauss(u, X, T, N, Nx, Nt)
        det = problem.metric.det(pts)
        _Cells.scatter(out, [cells.weight * det * n for n in N])
    return out


def assemble_residual(problem: DiscretizedProblem, u):
    """Interior residual: hat-function first variation divided by the cell area."""
    d = problem.domain
    return assemble_gradient(problem, u)[1:-1, 1:-1] / (d.hx * d.ht)


# ---------------------------------------------------------------------------
# Newton machinery


def _fd_jacobian(fun, u, interior_shape, step):
    """Sparse Jacobian of ``fun`` (interior -> interior) by 9-colored central differences."""
    ni, nj = interior_shape
    rows, cols, vals = [], [], []
    I, Jg = np.meshgrid(np.arange(ni), np.arange(nj), indexing="ij")
    for ci in range(3):
        for cj in range(3):
            mask = (I % 3 == ci) & (Jg % 3 == cj)
            if not mask.any():
                continue
            up = u.copy()
            um = u.copy()
            up[1:-1, 1:-1][mask] += step
            um[1:-1, 1:-1][mask] -= step
            D = (fun(up) - fun(um)) / (2.0 * step)
            pi, pj = I[mask], Jg[mask]
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    ri, rj = pi + di, pj + dj
                    ok = (ri >= 0) & (ri < ni) & (rj >= 0) & (rj < nj)
                    rows.append(ri[ok] * nj + rj[ok])
                    cols.append(pi[ok] * nj + pj[ok])
                    vals.append(D[ri[ok], rj[ok]])
    n = ni * nj
    return sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )


def _linear_solve(A, b):
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            x = spla.spsolve(A.tocsc(), b)
        except (RuntimeError, spla.MatrixRankWarning):
            return None
    return x if np.all(np.isfinite(x)) else None


def _newton(fun, jac, z0, merit, cfg: SolverConfig, project=None):
    """Damped Newton on ``fun`` with a steepest-descent fallback.

    ``fun`` maps the unknown vector to the residual vector, ``jac`` returns
    the sparse Jacobian and ``merit`` the scalar that accepted steps must not
    increase.
    """
    z = z0.copy()
    r = fun(z)
    m = merit(z, r)
    history = [m]
    it = 0
    for it in range(1, cfg.max_iter + 1):
        if project is not None and project(z, r):
            it -= 1
            break
        A = jac(z)
        dz = _linear_solve(A, -r)
        accepted = False
        if dz is not None:
            lam = 1.0
            for _ in range(cfg.max_halvings + 1):
                zn = z + lam * dz
                rn = fun(zn)
                mn = merit(zn, rn)
                if np.isfinite(mn) and (mn <= (1.0 - cfg.armijo * lam) * m or (not cfg.damping and lam == 1.0)):
                    accepted = True
                    break
                lam *= 0.5
        if not accepted:
            # steepest descent on 0.5 |r|^2
            g = A.T @ r
            gn = np.linalg.norm(g)
            if gn == 0.0:
                break
            d = -g / gn * max(np.max(np.abs(r)), 1e-16)
            lam = 1.0
            for _ in range(cfg.max_halvings + 1):
                zn = z + lam * d
                rn = fun(zn)
                mn = merit(zn, rn)
                if np.isfinite(mn) and mn < m:
                    accepted = True
                    break
                lam *= 0.5
            if not accepted:
                log.info("solver stagnated at merit %.3e", m)
                break
            log.debug("fallback step accepted")
        z, r, m = zn, rn, mn
        history.append(m)
    return z, r, m, it, history


def _interior(u):
    return u[1:-1, 1:-1].ravel()


def _with_interior(u_full, vec):
    out = u_full.copy()
    out[1:-1, 1:-1] = vec.reshape(out[1:-1, 1:-1].shape)
    return out


def _starting_grid(problem, initial):
    u = problem.boundary_grid()
    if initial is not None:
        init = np.asarray(initial, dtype=float)
        if init.shape != u.shape:
            raise ValueError("initial guess does not match the grid")
        u[1:-1, 1:-1] = init[1:-1, 1:-1]
    return u


def solve(problem: DiscretizedProblem, config: SolverConfig | None = None, initial=None) -> SolveResult:
    """Damped Newton for ``assemble_residual(problem, u) = 0`` with Dirichlet data.

    Returns the best iterate; ``converged`` is set when the sup-norm of the
    residual is at most ``config.tol``.
    """
    cfg = config or SolverConfig()
    u0 = _starting_grid(problem, initial)
    shape = (problem.domain.nx - 2, problem.domain.nt - 2)

    def fun(z):
        return assemble_residual(problem, _with_interior(u0, z)).ravel()

    def jac(z):
        full = _with_interior(u0, z)
        return _fd_jacobian(lambda v: assemble_residual(problem, v), full, shape, cfg.fd_step)

    def merit(z, r):
        return float(np.max(np.abs(r)))

    done = lambda z, r: float(np.max(np.abs(r))) <= cfg.tol
    z, r, m, it, history = _newton(fun, jac, _interior(u0), merit, cfg, project=done)
    return SolveResult(
        u=_with_interior(u0, z),
        residual=m,
        iterations=it,
        converged=m <= cfg.tol,
        history=history,
    )


def multiplier_estimates(problem: DiscretizedProblem, u, seed=0):
    """Two independent projections of the area gradient onto the volume gradient.

    At a constrained critical point the area gradient is parallel to the
    volume gradient, so both ratios return the same constant curvature.
    """
    area_problem = problem.with_f(0.0)
    gA = assemble_gradient(area_problem, u)[1:-1, 1:-1].ravel()
    gV = volume_gradient(problem, u)[1:-1, 1:-1].ravel()
    rng = np.random.default_rng(seed)
    phi = rng.uniform(0.5, 1.5, size=gV.shape)
    return float(gA @ gV / (gV @ gV)), float(gA @ phi / (gV @ phi))


def volume_constrained_solve(
    problem: DiscretizedProblem, target_volume, config: SolverConfig | None = None, initial=None, seed=0
) -> SolveResult:
    """Critical point of ``J_h`` among grids with ``discrete_volume == target_volume``.

    Newton on the bordered system ``(R(u) - lam gV(u), V(u) - target)``.
    ``multiplier`` is ``lam``; ``multipliers`` holds the two projection
    estimates of the constant mean curvature.
    """
    cfg = config or SolverConfig()
    u0 = _starting_grid(problem, initial)
    d = problem.domain
    cell = d.hx * d.ht
    shape = (d.nx - 2, d.nt - 2)
    n = shape[0] * shape[1]

    def parts(z):
        full = _with_interior(u0, z[:n])
        lam = z[n]
        gV = volume_gradient(problem, full)[1:-1, 1:-1] / cell
        R = assemble_residual(problem, full) - lam * gV
        return full, R, gV

    def fun(z):
        full, R, _ = parts(z)
        return np.concatenate([R.ravel(), [discrete_volume(problem, full, cfg.quad_order) - target_volume]])

    def jac(z):
        full, _, gV = parts(z)
        lam = z[n]

        def g(v):
            return assemble_residual(problem, v) - lam * volume_gradient(problem, v)[1:-1, 1:-1] / cell

        A = _fd_jacobian(g, full, shape, cfg.fd_step)
        col = sp.csc_matrix(-gV.reshape(n, 1))
        row = sp.csr_matrix(gV.reshape(1, n) * cell)
        return sp.bmat([[A, col], [row, None]], format="csc")

    def merit(z, r):
        return max(float(np.max(np.abs(r[:n]))), abs(r[n]) / max(cfg.vol_tol, 1e-300) * cfg.tol)

    def done(z, r):
        return float(np.max(np.abs(r[:n]))) <= cfg.tol and abs(r[n]) <= cfg.vol_tol

    R0 = assemble_residual(problem, u0).ravel()
    gV0 = volume_gradient(problem, u0)[1:-1, 1:-1].ravel() / cell
    lam0 = float(R0 @ gV0 / (gV0 @ gV0))
    z0 = np.concatenate([_interior(u0), [lam0]])
    z, r, m, it, history = _newton(fun, jac, z0, merit, cfg, project=done)
    u = _with_interior(u0, z[:n])
    vol = discrete_volume(problem, u, cfg.quad_order)
    res = float(np.max(np.abs(r[:n])))
    return SolveResult(
        u=u,
        residual=res,
        iterations=it,
        converged=res <= cfg.tol and abs(vol - target_volume) <= cfg.vol_tol,
        history=history,
        multiplier=float(z[n]),
        volume=vol,
        multipliers=multiplier_estimates(problem, u, seed),
    )


def _prolong(result_u, coarse: GraphDomain, fine: GraphDomain):
    g = IntrinsicGraph.from_samples(coarse, result_u)
    X, T = fine.mesh()
    return interpolant(g)(X, T)


def refine_study(
    problem: DiscretizedProblem,
    levels,
    starts,
    halfwidth,
    step=1e-3,
    config: SolverConfig | None = None,
    frozen=None,
):
    """Solve on each grid size in ``levels`` and run the regularity diagnostic.

    ``starts`` are the curve base points.  With ``frozen`` (an expression
    for ``u``) the solver is skipped and the frozen graph is diagnosed on
    every level, which serves as a negative control.

    Returns ``(report, results)`` where ``report.levels`` holds the grid
    spacings and ``report.sups`` the diagnostic per level.
    """
    levels = list(levels)
    if len(levels) < 3:
        raise ValueError("a refinement study needs at least three levels")
    cfg = config or SolverConfig()
    report = RegularityReport(sup=0.0)
    results = []
    prev = None
    for n in levels:
        prob = problem.with_grid(n)
        if frozen is not None:
            graph = IntrinsicGraph.from_expression(prob.domain, frozen, exact=False)
            res = None
        else:
            initial = None if prev is None else _prolong(prev[1].u, prev[0], prob.domain)
            res = solve(prob, cfg, initial=initial)
            if not res.converged:
                raise RuntimeError(f"solver did not converge on the {n}x{n} grid (residual {res.residual:.3e})")
            graph = res.graph(prob.domain)
            prev = (prob.domain, res)
        curves = [trace(graph, s, halfwidth, step) for s in starts]
        diag = regularity_diagnostic(graph, prob.metric, prob.f, curves, prob.sign)
        report.levels.append(prob.domain.hx)
        report.sups.append(diag.sup)
        results.append((prob, res, graph, curves))
    report.sup = report.sups[-1]
    report.orders = [
        float(np.log(report.sups[k] / report.sups[k + 1]) / np.log(report.levels[k] / report.levels[k + 1]))
        for k in range(len(report.sups) - 1)
    ]
    return report, results
