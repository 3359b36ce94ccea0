"""Contact sub-Riemannian kernel in the Darboux chart of the Heisenberg model.

The chart is fixed: the contact form is ``dt + x dy - y dx``, the horizontal
frame is ``X = d/dx + y d/dt``, ``Y = d/dy - x d/dt`` and the Reeb field is
``T = d/dt``.  A manifold is described by the horizontal metric ``G`` in the
frame ``{X, Y}``; ``G`` is extended to a Riemannian metric by declaring ``T``
a unit vector orthogonal to the horizontal plane.

All vectors are coordinate vectors ``(v_x, v_y, v_t)`` and every function
accepts points with arbitrary leading batch dimensions, ``p.shape == (..., 3)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expr import ScalarField, as_field

__all__ = [
    "DegenerateMetricError",
    "ContactMetric",
    "PointFrame",
    "heisenberg",
    "frame",
    "reeb",
    "contact_form",
    "dcontact_form",
    "ambient_metric",
    "ambient_metric_derivatives",
    "christoffels",
    "levi_civita",
    "d_reeb",
    "j_matrix",
    "tau_matrix",
    "j_operator",
    "tau_operator",
    "torsion",
    "connection_coefficients",
    "sr_connection",
    "inner",
    "norm",
    "cross",
    "volume_form",
    "point_frame",
]


class DegenerateMetricError(ValueError):
    """The horizontal metric is not positive definite at some queried point."""


def _split(p):
    p = np.asarray(p, dtype=float)
    return p[..., 0], p[..., 1], p[..., 2]


@dataclass(frozen=True)
class ContactMetric:
    """Horizontal metric ``G = [[g11, g12], [g12, g22]]`` in the frame {X, Y}."""

    g11: ScalarField
    g12: ScalarField
    g22: ScalarField

    def __init__(self, g11, g12, g22):
        object.__setattr__(self, "g11", as_field(g11))
        object.__setattr__(self, "g12", as_field(g12))
        object.__setattr__(self, "g22", as_field(g22))

    @property
    def is_constant(self):
        return self.g11.is_constant and self.g12.is_constant and self.g22.is_constant

    def components(self, p, check=True):
        """``(g11, g12, g22)`` at ``p`` as arrays of the batch shape."""
        x, y, t = _split(p)
        g11 = np.broadcast_to(self.g11(x, y, t), x.shape)
        g12 = np.broadcast_to(self.g12(x, y, t), x.shape)
        g22 = np.broadcast_to(self.g22(x, y, t), x.shape)
        if check:
            det = g11 * g22 - g12 * g12
            if not (np.all(g11 > 0) and np.all(det > 0)):
                raise DegenerateMetricError("horizontal metric is not positive definite")
        return g11, g12, g22

    def matrix(self, p, check=True):
        g11, g12, g22 = self.components(p, check)
        return np.stack([np.stack([g11, g12], -1), np.stack([g12, g22], -1)], -2)

    def det(self, p, check=True):
        g11, g12, g22 = self.components(p, check)
        return g11 * g22 - g12 * g12

    def gradients(self, p):
        """Coordinate gradients of g11, g12, g22, each of shape (..., 3)."""
        x, y, t = _split(p)
        shape = x.shape + (3,)
        return tuple(np.broadcast_to(g.grad(x, y, t), shape) for g in (self.g11, self.g12, self.g22))

    def y_derivatives(self, p):
        """``Y(g_ij) = dg/dy - x dg/dt`` for the three components."""
        x = np.asarray(p, dtype=float)[..., 0]
        return tuple(d[..., 1] - x * d[..., 2] for d in self.gradients(p))


def heisenberg():
    """The first Heisenberg group: ``G`` is the identity."""
    return ContactMetric(1.0, 0.0, 1.0)


# ---------------------------------------------------------------------------
# frame and contact structure


def frame(p):
    """Coordinate components of ``X``, ``Y``, ``T`` at ``p``."""
    x, y, t = _split(p)
    one, zero = np.ones_like(x), np.zeros_like(x)
    X = np.stack([one, zero, y], -1)
    Y = np.stack([zero, one, -x], -1)
    T = np.stack([zero, zero, one], -1)
    return X, Y, T


def reeb(p):
    """The Reeb field; in this chart it is ``d/dt`` everywhere."""
    return frame(p)[2]


def contact_form(p, v):
    """``omega_0(v) = v_t + x v_y - y v_x``."""
    x, y, _ = _split(p)
    v = np.asarray(v, dtype=float)
    return v[..., 2] + x * v[..., 1] - y * v[..., 0]


def dcontact_form(p, v, w):
    """``d omega_0 = 2 dx ^ dy`` evaluated on ``(v, w)``."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    return 2.0 * (v[..., 0] * w[..., 1] - v[..., 1] * w[..., 0])


def _coframe(p):
    """Matrix ``A`` with rows ``dx, dy, omega_0`` in coordinate covectors."""
    x, y, _ = _split(p)
    one, zero = np.ones_like(x), np.zeros_like(x)
    return np.stack(
        [
            np.stack([one, zero, zero], -1),
            np.stack([zero, one, zero], -1),
            np.stack([-y, x, one], -1),
        ],
        -2,
    )


def _block(g11, g12, g22):
    zero, one = np.zeros_like(g11), np.ones_like(g11)
    return np.stack(
        [
            np.stack([g11, g12, zero], -1),
            np.stack([g12, g22, zero], -1),
            np.stack([zero, zero, one], -1),
        ],
        -2,
    )


def ambient_metric(metric: ContactMetric, p):
    """Coordinate components of the Riemannian extension ``g``.

    ``g = A^T diag(G, 1) A`` where ``A`` maps coordinates to the coframe.
    """
    A = _coframe(p)
    B = _block(*metric.components(p))
    return np.einsum("...ai,...ab,...bj->...ij", A, B, A)


def ambient_metric_derivatives(metric: ContactMetric, p):
    """``dg[..., k, i, j] = d_k g_ij`` from the symbolic partials of G."""
    A = _coframe(p)
    B = _block(*metric.components(p))
    d11, d12, d22 = metric.gradients(p)
    out = []
    for k in range(3):
        dB = _block(d11[..., k], d12[..., k], d22[..., k])
        dB[..., 2, 2] = 0.0
        # only the omega_0 row of A depends on position: d_x -> (0,1,0), d_y -> (-1,0,0)
        dA = np.zeros(A.shape)
        if k == 0:
            dA[..., 2, 1] = 1.0
        elif k == 1:
            dA[..., 2, 0] = -1.0
        term = np.einsum("...ai,...ab,...bj->...ij", dA, B, A)
        out.append(term + np.swapaxes(term, -1, -2) + np.einsum("...ai,...ab,...bj->...ij", A, dB, A))
    return np.stack(out, -3)


def christoffels(metric: ContactMetric, p):
    """Levi-Civita symbols ``Gamma[..., k, i, j]`` of the ambient metric."""
    g = ambient_metric(metric, p)
    dg = ambient_metric_derivatives(metric, p)
    ginv = np.linalg.inv(g)
    # lowered symbols: Gamma_{l i j} = (d_i g_jl + d_j g_il - d_l g_ij) / 2
    low = 0.5 * (
        np.einsum("...ijl->...lij", dg)
        + np.einsum("...jil->...lij", dg)
        - dg
    )
    return np.einsum("...kl,...lij->...kij", ginv, low)


def levi_civita(metric: ContactMetric, p, v, w, dw):
    """``D_v W`` for a field ``W`` with value ``w`` and Jacobian ``dw[..., i, j] = d_j W^i``."""
    gam = christoffels(metric, p)
    return np.einsum("...ij,...j->...i", dw, v) + np.einsum("...kij,...i,...j->...k", gam, v, w)


def d_reeb(metric: ContactMetric, p):
    """Matrix of ``v -> D_v T``; ``T`` has constant coordinates, so this is ``Gamma[k, i, t]``."""
    return christoffels(metric, p)[..., :, :, 2]


def _adjoint(g, B):
    """Metric adjoint ``g^{-1} B^T g``."""
    return np.linalg.solve(g, np.einsum("...ji,...jk->...ik", B, g))


def j_matrix(metric: ContactMetric, p):
    """Antisymmetric part of ``v -> D_v T`` with respect to ``g``."""
    g = ambient_metric(metric, p)
    B = d_reeb(metric, p)
    return 0.5 * (B - _adjoint(g, B))


def tau_matrix(metric: ContactMetric, p):
    """Symmetric part of ``v -> D_v T`` (the contact torsion)."""
    g = ambient_metric(metric, p)
    B = d_reeb(metric, p)
    return 0.5 * (B + _adjoint(g, B))


def j_operator(metric: ContactMetric, p, v):
    return np.einsum("...ij,...j->...i", j_matrix(metric, p), v)


def tau_operator(metric: ContactMetric, p, v):
    return np.einsum("...ij,...j->...i", tau_matrix(metric, p), v)


def inner(metric: ContactMetric, p, v, w):
    return np.einsum("...i,...ij,...j->...", v, ambient_metric(metric, p), w)


def norm(metric: ContactMetric, p, v):
    return np.sqrt(inner(metric, p, v, v))


def _torsion_tensor(g, J, tau):
    """``tor[..., c, a, b]`` = c-component of tor(e_a, e_b) for coordinate e_a, e_b."""
    theta = g[..., 2, :]  # g(T, .) since T = e_t
    Jg = np.einsum("...ca,...cb->...ab", J, g)  # <J e_a, e_b>
    tor = np.einsum("...a,...cb->...cab", theta, tau) - np.einsum("...b,...ca->...cab", theta, tau)
    tor = tor.copy()
    tor[..., 2, :, :] += 2.0 * Jg
    return tor


def torsion(metric: ContactMetric, p, v, w):
    """``tor(v, w) = <v,T> tau(w) - <w,T> tau(v) + 2 <J(v), w> T``."""
    g = ambient_metric(metric, p)
    tor = _torsion_tensor(g, j_matrix(metric, p), tau_matrix(metric, p))
    return np.einsum("...cab,...a,...b->...c", tor, v, w)


def connection_coefficients(metric: ContactMetric, p):
    """Coefficients ``C[..., k, i, j]`` with ``nabla_v W = dW v + C(v, w)``.

    ``C`` is the Levi-Civita part plus the contorsion of the prescribed
    torsion, ``g(K(a,b), z) = (tor_abz - tor_bza + tor_zab) / 2``.
    """
    g = ambient_metric(metric, p)
    gam = christoffels(metric, p)
    B = gam[..., :, :, 2]
    J = 0.5 * (B - _adjoint(g, B))
    tau = 0.5 * (B + _adjoint(g, B))
    tor = _torsion_tensor(g, J, tau)
    low = np.einsum("...zc,...cab->...abz", g, tor)  # low[a, b, z] = g(tor(e_a, e_b), e_z)
    kl = 0.5 * (low - np.einsum("...bza->...abz", low) + np.einsum("...zab->...abz", low))
    K = np.einsum("...kz,...abz->...kab", np.linalg.inv(g), kl)
    return gam + K


def sr_connection(metric: ContactMetric, p, v, w, dw):
    """Sub-Riemannian connection ``nabla_v W``.

    ``w`` is the value of ``W`` at ``p`` and ``dw[..., i, j] = d_j W^i`` its
    coordinate Jacobian.
    """
    C = connection_coefficients(metric, p)
    return np.einsum("...ij,...j->...i", dw, v) + np.einsum("...kij,...i,...j->...k", C, v, w)


def volume_form(metric: ContactMetric, p, u, v, w):
    """Riemannian volume form with ``eta(X, Y, T) > 0``."""
    sq = np.sqrt(metric.det(p))
    m = np.stack(np.broadcast_arrays(u, v, w), -1)
    return sq * np.linalg.det(m)


def cross(metric: ContactMetric, p, u, v):
    """Cross product defined by ``g(w, u x v) = eta(w, u, v)``."""
    g = ambient_metric(metric, p)
    sq = np.sqrt(metric.det(p))
    c = np.cross(u, v) * sq[..., None]
    return np.linalg.solve(g, c[..., None])[..., 0]


@dataclass
class PointFrame:
    """Snapshot of the pointwise geometry at one or more points."""

    X: np.ndarray
    Y: np.ndarray
    T: np.ndarray
    metric: np.ndarray
    christoffels: np.ndarray
    J: np.ndarray
    tau: np.ndarray


def point_frame(metric: ContactMetric, p) -> PointFrame:
    X, Y, T = frame(p)
    g = ambient_metric(metric, p)
    gam = christoffels(metric, p)
    B = gam[..., :, :, 2]
    return PointFrame(
        X=X,
        Y=Y,
        T=T,
        metric=g,
        christoffels=gam,
        J=0.5 * (B - _adjoint(g, B)),
        tau=0.5 * (B + _adjoint(g, B)),
    )
