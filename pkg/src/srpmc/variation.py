"""Parameterized test surfaces and the general first variation of area.

A surface is an immersion ``F(s1, s2)`` sampled on a rectangular parameter
grid.  Its frame (unit normal, horizontal normal, characteristic field) and
sub-Riemannian area are computed pointwise; the first variation along an
ambient vector field is compared against an independent oracle that flows the
sample points and tangents and differentiates the area numerically.

Orientation: ``orientation=+1`` takes ``N`` along ``F1 x F2``.  ``N`` is
treated as the inner normal of the enclosed region, so the enclosed volume
changes at rate ``-int <U, N>`` and the multiplier of a volume-constrained
critical point equals the prescribed curvature.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .expr import ScalarField, as_field
from .geometry import (
    ContactMetric,
    ambient_metric,
    contact_form,
    cross,
    frame,
    inner,
    j_operator,
    sr_connection,
    tau_operator,
    volume_form,
)

__all__ = [
    "EPS_SINGULAR",
    "DegenerateImmersionError",
    "SingularSupportError",
    "ParamSurface",
    "SurfaceFrame",
    "AmbientField",
    "surface_frame",
    "sr_area",
    "first_variation_general",
    "flow_area_derivative",
    "flow_volume_derivative",
    "mean_curvature",
    "h0_estimate",
]

EPS_SINGULAR = 1e-8
GRAM_TOL = 1e-12


class DegenerateImmersionError(ValueError):
    """Tangent vectors are (numerically) dependent somewhere on the surface."""


class SingularSupportError(ValueError):
    """A singular point of the surface lies inside the support of the variation."""


def _weights(s):
    h = np.diff(s)
    w = np.zeros_like(s)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


class ParamSurface:
    """Immersion ``F(s1, s2) -> (x, y, t)`` on the grid ``s1 x s2``.

    ``func(S1, S2)`` returns points of shape ``S1.shape + (3,)``.  ``jac``
    returns the pair ``(F1, F2)`` of parameter derivatives; without it central
    differences with step ``fd_step`` are used.
    """

    def __init__(self, func, s1, s2, jac=None, orientation=1, fd_step=1e-5):
        if orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")
        self.func = func
        self.s1 = np.asarray(s1, dtype=float)
        self.s2 = np.asarray(s2, dtype=float)
        if self.s1.ndim != 1 or self.s2.ndim != 1 or len(self.s1) < 2 or len(self.s2) < 2:
            raise ValueError("parameter grids must be 1-d with at least two nodes")
        self._jac = jac
        self.orientation = orientation
        self.fd_step = fd_step

    def mesh(self):
        return np.meshgrid(self.s1, self.s2, indexing="ij")

    def weights(self):
        """Trapezoid weights on the parameter grid."""
        return np.outer(_weights(self.s1), _weights(self.s2))

    def evaluate(self, S1, S2):
        """Points and tangents ``(P, F1, F2)`` at arbitrary parameters."""
        S1 = np.asarray(S1, dtype=float)
        S2 = np.asarray(S2, dtype=float)
        P = np.asarray(self.func(S1, S2), dtype=float)
        if self._jac is not None:
            F1, F2 = self._jac(S1, S2)
        else:
            h = self.fd_step
            F1 = (self.func(S1 + h, S2) - self.func(S1 - h, S2)) / (2 * h)
            F2 = (self.func(S1, S2 + h) - self.func(S1, S2 - h)) / (2 * h)
        shape = np.broadcast_shapes(S1.shape, S2.shape) + (3,)
        return (
            np.broadcast_to(P, shape),
            np.broadcast_to(np.asarray(F1, dtype=float), shape),
            np.broadcast_to(np.asarray(F2, dtype=float), shape),
        )

    def samples(self):
        return self.evaluate(*self.mesh())

    def flipped(self):
        """Same immersion with the opposite normal."""
        return ParamSurface(self.func, self.s1, self.s2, self._jac, -self.orientation, self.fd_step)

    def rescaled(self, c1, c2):
        """Reparameterize by ``s -> (s1 / c1, s2 / c2)``; the image is unchanged."""
        func, jac = self.func, self._jac

        def f(S1, S2):
            return func(S1 / c1, S2 / c2)

        def j(S1, S2):
            if jac is None:
                _, F1, F2 = self.evaluate(S1 / c1, S2 / c2)
            else:
                F1, F2 = jac(S1 / c1, S2 / c2)
            return np.asarray(F1) / c1, np.asarray(F2) / c2

        return ParamSurface(f, self.s1 * c1, self.s2 * c2, j, self.orientation, self.fd_step)

    # constructors

    @classmethod
    def intrinsic_graph(cls, u, s1, s2, orientation=1):
        """Embedded graph ``(x, u, t - x u)`` of an expression ``u(x, t)``.

        With ``orientation=+1`` the normal points into the subgraph.
        """
        field = as_field(u)

        def f(X, T):
            U = np.broadcast_to(field(X, 0.0, T), np.broadcast_shapes(np.shape(X), np.shape(T)))
            return np.stack(np.broadcast_arrays(X, U, T - X * U), -1)

        def j(X, T):
            shape = np.broadcast_shapes(np.shape(X), np.shape(T))
            X = np.broadcast_to(X, shape)
            U = np.broadcast_to(field(X, 0.0, T), shape)
            g = np.broadcast_to(field.grad(X, 0.0, T), shape + (3,))
            ux, ut = g[..., 0], g[..., 2]
            one, zero = np.ones(shape), np.zeros(shape)
            F1 = np.stack([one, ux, -U - X * ux], -1)
            F2 = np.stack([zero, ut, 1.0 - X * ut], -1)
            return F1, F2

        return cls(f, s1, s2, j, orientation)

    @classmethod
    def from_graph(cls, graph, orientation=1):
        """Embedded intrinsic graph from gridded samples (bicubic spline of ``u``)."""
        from .curves import interpolant

        sp = interpolant(graph)
        d = graph.domain

        def f(X, T):
            X, T = np.broadcast_arrays(np.asarray(X, float), np.asarray(T, float))
            U = sp(X, T)
            return np.stack([X, U, T - X * U], -1)

        def j(X, T):
            X, T = np.broadcast_arrays(np.asarray(X, float), np.asarray(T, float))
            U, ux, ut = sp(X, T), sp(X, T, ds=1), sp(X, T, dt=1)
            one, zero = np.ones_like(X), np.zeros_like(X)
            return np.stack([one, ux, -U - X * ux], -1), np.stack([zero, ut, 1.0 - X * ut], -1)

        return cls(f, d.x, d.t, j, orientation)

    @classmethod
    def vertical_plane(cls, x0=0.0, x1=1.0, t0=0.0, t1=1.0, n=33, orientation=1):
        """The square ``{y = 0}`` over ``[x0, x1] x [t0, t1]``."""
        return cls.intrinsic_graph(0.0, np.linspace(x0, x1, n), np.linspace(t0, t1, n), orientation)

    @classmethod
    def from_grid(cls, s1, s2, points, orientation=1):
        """Interpolate sampled points of shape ``(len(s1), len(s2), 3)`` by bicubic splines."""
        s1 = np.asarray(s1, dtype=float)
        s2 = np.asarray(s2, dtype=float)
        points = np.asarray(points, dtype=float)
        if points.shape != (len(s1), len(s2), 3):
            raise ValueError("points must have shape (len(s1), len(s2), 3)")
        k1, k2 = min(3, len(s1) - 1), min(3, len(s2) - 1)
        splines = [RectBivariateSpline(s1, s2, points[..., c], kx=k1, ky=k2, s=0) for c in range(3)]

        def f(A, B):
            A, B = np.broadcast_arrays(np.asarray(A, float), np.asarray(B, float))
            return np.stack([sp.ev(A, B) for sp in splines], -1)

        def j(A, B):
            A, B = np.broadcast_arrays(np.asarray(A, float), np.asarray(B, float))
            F1 = np.stack([sp.ev(A, B, dx=1) for sp in splines], -1)
            F2 = np.stack([sp.ev(A, B, dy=1) for sp in splines], -1)
            return F1, F2

        return cls(f, s1, s2, j, orientation)

    @classmethod
    def read_csv(cls, path, orientation=1):
        """Read rows ``s1, s2, x, y, t`` (one header line) covering a full grid."""
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValueError(f"{path}: empty surface file")
        try:
            data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
        except ValueError as exc:
            raise ValueError(f"{path}: {exc}") from None
        if data.ndim != 2 or data.shape[1] != 5:
            raise ValueError(f"{path}: expected 5 columns s1,s2,x,y,t")
        s1 = np.unique(data[:, 0])
        s2 = np.unique(data[:, 1])
        if len(s1) * len(s2) != len(data):
            raise ValueError(f"{path}: samples do not form a full parameter grid")
        pts = np.full((len(s1), len(s2), 3), np.nan)
        pts[np.searchsorted(s1, data[:, 0]), np.searchsorted(s2, data[:, 1])] = data[:, 2:]
        if np.isnan(pts).any():
            raise ValueError(f"{path}: duplicate parameter pairs")
        return cls.from_grid(s1, s2, pts, orientation)


@dataclass
class SurfaceFrame:
    points: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    N: np.ndarray
    N_h: np.ndarray
    nh_norm: np.ndarray
    nu: np.ndarray
    Z: np.ndarray
    S: np.ndarray
    dA: np.ndarray
    singular: np.ndarray


def _gram_det(metric, P, F1, F2):
    g = ambient_metric(metric, P)
    a = np.einsum("...i,...ij,...j->...", F1, g, F1)
    b = np.einsum("...i,...ij,...j->...", F1, g, F2)
    c = np.einsum("...i,...ij,...j->...", F2, g, F2)
    return a * c - b * b


def _frame_from(metric, P, F1, F2, orientation=1, eps=EPS_SINGULAR):
    gram = _gram_det(metric, P, F1, F2)
    if np.any(~(gram > GRAM_TOL)):
        raise DegenerateImmersionError(f"Gram determinant {np.nanmin(gram):.3g} <= {GRAM_TOL:g}")
    c = cross(metric, P, F1, F2)
    dA = np.sqrt(inner(metric, P, c, c))
    N = orientation * c / dA[..., None]
    _, _, T = frame(P)
    nt = contact_form(P, N)  # <N, T>
    N_h = N - nt[..., None] * T
    nh = np.sqrt(np.maximum(inner(metric, P, N_h, N_h), 0.0))
    singular = nh < eps
    safe = np.where(singular, 1.0, nh)
    nu = N_h / safe[..., None]
    Jn = j_operator(metric, P, nu)
    jn = np.sqrt(inner(metric, P, Jn, Jn))
    Z = Jn / np.where(singular, 1.0, jn)[..., None]
    S = nt[..., None] * nu - nh[..., None] * T
    nan = np.where(singular, np.nan, 1.0)[..., None]
    return SurfaceFrame(P, F1, F2, N, N_h, nh, nu * nan, Z * nan, S * nan, dA, singular)


def surface_frame(surface: ParamSurface, metric: ContactMetric, eps=EPS_SINGULAR) -> SurfaceFrame:
    """Frame fields on the parameter grid; ``nu``, ``Z``, ``S`` are NaN at singular samples."""
    P, F1, F2 = surface.samples()
    return _frame_from(metric, P, F1, F2, surface.orientation, eps)


def _area_density(metric, P, F1, F2):
    """``|N_h| dA = |(F1 x F2)_h|``."""
    c = cross(metric, P, F1, F2)
    _, _, T = frame(P)
    ch = c - contact_form(P, c)[..., None] * T
    return np.sqrt(np.maximum(inner(metric, P, ch, ch), 0.0))


def sr_area(surface: ParamSurface, metric: ContactMetric) -> float:
    """Sub-Riemannian area ``int |N_h| dA`` by the trapezoid rule in parameters."""
    P, F1, F2 = surface.samples()
    if np.any(~(_gram_det(metric, P, F1, F2) > GRAM_TOL)):
        raise DegenerateImmersionError("surface is not immersed at every sample")
    return float(np.sum(surface.weights() * _area_density(metric, P, F1, F2)))


# ---------------------------------------------------------------------------
# ambient variation fields


def _bump(s):
    """``exp(1 - 1/(1 - s^2))`` on ``|s| < 1``, zero outside; value and derivative."""
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    q = np.where(inside, 1.0 - s * s, 1.0)
    b = np.where(inside, np.exp(1.0 - 1.0 / q), 0.0)
    db = np.where(inside, b * (-2.0 * s / (q * q)), 0.0)
    return b, db


class AmbientField:
    """Vector field ``U = phi (a X + b Y + c T)``.

    ``a, b, c`` are scalar fields (expressions or constants).  With a
    ``box = (lo, hi)`` the cutoff ``phi`` is a product of smooth bumps that
    equals one at the box centre and vanishes identically outside the box;
    without a box ``phi = 1``.
    """

    def __init__(self, a=0.0, b=0.0, c=0.0, box=None):
        self.components = tuple(as_field(v) for v in (a, b, c))
        if box is not None:
            lo, hi = (np.asarray(v, dtype=float) for v in box)
            if lo.shape != (3,) or hi.shape != (3,) or np.any(hi <= lo):
                raise ValueError("box must be a pair of 3-vectors with lo < hi")
            box = (lo, hi)
        self.box = box

    @classmethod
    def zero(cls):
        return cls()

    def is_zero(self):
        return all(f.value == 0.0 for f in self.components)

    def _cutoff(self, P):
        shape = P.shape[:-1]
        if self.box is None:
            return np.ones(shape), np.zeros(shape + (3,))
        lo, hi = self.box
        centre, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        b, db = _bump((P - centre) / half)
        phi = np.prod(b, axis=-1)
        grad = np.stack(
            [db[..., k] / half[k] * np.prod(np.delete(b, k, axis=-1), axis=-1) for k in range(3)], -1
        )
        return phi, grad

    def _raw(self, P):
        x, y = P[..., 0], P[..., 1]
        shape = P.shape[:-1]
        vals = [np.broadcast_to(f(P[..., 0], P[..., 1], P[..., 2]), shape) for f in self.components]
        grads = [np.broadcast_to(f.grad(P[..., 0], P[..., 1], P[..., 2]), shape + (3,)) for f in self.components]
        a, b, c = vals
        ga, gb, gc = grads
        V = np.stack([a, b, y * a - x * b + c], -1)
        ex = np.zeros(shape + (3,))
        ex[..., 0] = 1.0
        ey = np.zeros(shape + (3,))
        ey[..., 1] = 1.0
        row2 = y[..., None] * ga + a[..., None] * ey - x[..., None] * gb - b[..., None] * ex + gc
        DV = np.stack([ga, gb, row2], -2)
        return V, DV

    def value(self, P):
        return self.value_and_jacobian(P)[0]

    def jacobian(self, P):
        return self.value_and_jacobian(P)[1]

    def value_and_jacobian(self, P):
        """Coordinate components ``U`` and Jacobian ``DU[..., i, j] = d_j U^i``."""
        P = np.asarray(P, dtype=float)
        V, DV = self._raw(P)
        phi, dphi = self._cutoff(P)
        U = phi[..., None] * V
        DU = phi[..., None, None] * DV + V[..., :, None] * dphi[..., None, :]
        return U, DU


# ---------------------------------------------------------------------------
# first variation


def _variation_integrand(metric, fr: SurfaceFrame, U, DU):
    P = fr.points
    x, y = P[..., 0], P[..., 1]
    phi_t = contact_form(P, U)  # <U, T>
    grad_t = DU[..., 2, :] + x[..., None] * DU[..., 1, :] - y[..., None] * DU[..., 0, :]
    grad_t[..., 0] += U[..., 1]
    grad_t[..., 1] -= U[..., 0]
    S_phi = np.einsum("...j,...j->...", grad_t, fr.S)
    JU = j_operator(metric, P, U)
    nzu = sr_connection(metric, P, fr.Z, U, DU)
    tz = tau_operator(metric, P, fr.Z)
    return (
        -S_phi
        - 2.0 * inner(metric, P, JU, fr.S)
        + fr.nh_norm * inner(metric, P, nzu, fr.Z)
        + fr.nh_norm * phi_t * inner(metric, P, tz, fr.Z)
    )


def first_variation_general(surface: ParamSurface, metric: ContactMetric, U: AmbientField) -> float:
    """First variation of the sub-Riemannian area along ``U``.

    Raises ``SingularSupportError`` if ``U`` or its derivative is nonzero at a
    singular sample.
    """
    if U.is_zero():
        return 0.0
    fr = surface_frame(surface, metric)
    Uv, DU = U.value_and_jacobian(fr.points)
    active = (np.abs(Uv).max(axis=-1) > 0) | (np.abs(DU).max(axis=(-2, -1)) > 0)
    bad = fr.singular & active
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise SingularSupportError(
            f"{int(bad.sum())} singular sample(s) inside the support, first at parameter index {idx}"
        )
    vals = np.zeros(fr.dA.shape)
    ok = ~fr.singular
    with np.errstate(invalid="ignore"):
        integrand = _variation_integrand(metric, fr, Uv, DU)
    vals[ok] = integrand[ok] * fr.dA[ok]
    return float(np.sum(surface.weights() * vals))


def _flow(metric, U: AmbientField, P, F1, F2, s, substeps):
    """Advect points and tangents to time ``s``; also returns the swept volume per sample."""
    weights_shape = P.shape[:-1]

    def rhs(state):
        p, f1, f2 = state[..., 0:3], state[..., 3:6], state[..., 6:9]
        u, du = U.value_and_jacobian(p)
        vol = volume_form(metric, p, f1, f2, u)
        return np.concatenate(
            [u, np.einsum("...ij,...j->...i", du, f1), np.einsum("...ij,...j->...i", du, f2), vol[..., None]],
            -1,
        )

    y = np.concatenate([P, F1, F2, np.zeros(weights_shape + (1,))], -1)
    h = s / substeps
    for _ in range(substeps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y[..., 0:3], y[..., 3:6], y[..., 6:9], y[..., 9]


def _flowed(surface, metric, U, s, substeps):
    P, F1, F2 = surface.samples()
    P, F1, F2, vol = _flow(metric, U, P, F1, F2, s, substeps)
    if np.any(~(_gram_det(metric, P, F1, F2) > GRAM_TOL)):
        raise DegenerateImmersionError(f"immersion lost under the flow at s = {s:g}")
    return P, F1, F2, vol


def flow_area_derivative(surface: ParamSurface, metric: ContactMetric, U: AmbientField, s_step=1e-4, substeps=2):
    """Centered difference ``(A(phi_s) - A(phi_-s)) / 2s`` of the flowed area."""
    if U.is_zero():
        return 0.0
    w = surface.weights()
    areas = []
    for s in (s_step, -s_step):
        P, F1, F2, _ = _flowed(surface, metric, U, s, substeps)
        areas.append(np.sum(w * _area_density(metric, P, F1, F2)))
    return float((areas[0] - areas[1]) / (2.0 * s_step))


def flow_volume_derivative(surface: ParamSurface, metric: ContactMetric, U: AmbientField, s_step=1e-4, substeps=2):
    """Rate of change of the volume on the side the normal points into.

    The swept volume ``int_0^s eta(F1, F2, U)`` is integrated along the flow and
    differenced at ``+-s``; moving along ``N`` shrinks the enclosed region.
    """
    if U.is_zero():
        return 0.0
    w = surface.weights()
    swept = []
    for s in (s_step, -s_step):
        vol = _flowed(surface, metric, U, s, substeps)[3]
        swept.append(np.sum(w * vol))
    return float(-surface.orientation * (swept[0] - swept[1]) / (2.0 * s_step))


def h0_estimate(surface: ParamSurface, metric: ContactMetric, U0: AmbientField, s_step=1e-4, tol=1e-10):
    """Volume-constraint multiplier ``A'(U0) / V'(U0)``."""
    den = flow_volume_derivative(surface, metric, U0, s_step)
    if abs(den) < tol:
        raise ValueError(f"volume derivative {den:.3g} is too small; choose another test field")
    return first_variation_general(surface, metric, U0) / den


# ---------------------------------------------------------------------------
# mean curvature


def mean_curvature(surface: ParamSurface, metric: ContactMetric, delta=None):
    """``H = -<nabla_Z nu_h, Z>`` per sample; NaN on the singular set.

    ``nabla_Z`` differentiates ``nu_h`` along the parameter direction mapped
    onto ``Z``, by a centered difference of step ``delta`` (default a tenth of
    the finer grid spacing) plus the connection term.
    """
    fr = surface_frame(surface, metric)
    if delta is None:
        delta = 0.1 * min(np.min(np.diff(surface.s1)), np.min(np.diff(surface.s2)))
    ok = ~fr.singular
    H = np.full(fr.dA.shape, np.nan)
    if not ok.any():
        return H
    F = np.stack([fr.F1[ok], fr.F2[ok]], -1)  # (n, 3, 2)
    Z = fr.Z[ok]
    FtF = np.einsum("nki,nkj->nij", F, F)
    zbar = np.linalg.solve(FtF, np.einsum("nki,nk->ni", F, Z)[..., None])[..., 0]
    S1, S2 = surface.mesh()
    a, b = S1[ok], S2[ok]
    nus = []
    for sgn in (1.0, -1.0):
        P, F1, F2 = surface.evaluate(a + sgn * delta * zbar[:, 0], b + sgn * delta * zbar[:, 1])
        nus.append(_frame_from(metric, P, F1, F2, surface.orientation, eps=0.0).nu)
    dnu = (nus[0] - nus[1]) / (2.0 * delta)
    P = fr.points[ok]
    nabla = sr_connection(metric, P, Z, fr.nu[ok], np.zeros(P.shape + (3,))) + dnu
    H[ok] = -inner(metric, P, nabla, Z)
    return H
