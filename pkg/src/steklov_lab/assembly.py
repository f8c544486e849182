"""
P1 assembly of the metric Dirichlet form and the boundary mass form.

The stiffness matrix realizes ``int_M sqrt|g| g^{ij} d_i phi_a d_j phi_b dx``.
Its directional derivative in a metric direction ``h`` uses the integrand

    d/dt [sqrt|g_t| g_t^{-1}] = sqrt|g| (1/2 tr(g^{-1} h) g^{-1} - g^{-1} h g^{-1})

which follows from ``D(g^{-1}) = -g^{-1} h g^{-1}`` and ``D sqrt|g| = 1/2 sqrt|g| tr(g^{-1} h)``.
The boundary mass uses the length element ``sqrt(g(tau, tau))`` with derivative
``h(tau, tau) / (2 sqrt(g(tau, tau)))``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .fields import (Metric, PerturbationDirection, ScalarField, min_eigenvalues,
                     require_spd)
from .mesh import Mesh, edge_gauss


class SolverError(RuntimeError):
    """Factorization or solve failure."""


# --------------------------------------------------------------------------
# quadrature
# --------------------------------------------------------------------------

_A4, _B4 = 0.44594849091596489, 0.09157621350977073
_W4A, _W4B = 0.22338158967801147, 0.10995174365531187

# barycentric points and weights (weights sum to 1, multiply by area)
TRIANGLE_RULES = {
    1: (np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])),
    2: (np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
        np.full(3, 1 / 3)),
    4: (np.array([[1 - 2 * _A4, _A4, _A4], [_A4, 1 - 2 * _A4, _A4], [_A4, _A4, 1 - 2 * _A4],
                  [1 - 2 * _B4, _B4, _B4], [_B4, 1 - 2 * _B4, _B4], [_B4, _B4, 1 - 2 * _B4]]),
        np.array([_W4A] * 3 + [_W4B] * 3)),
}
TRIANGLE_RULES[3] = TRIANGLE_RULES[4]


def triangle_rule(order: int):
    try:
        return TRIANGLE_RULES[order]
    except KeyError:
        raise ValueError(f"quadrature order must be 1..4, got {order}") from None


def quadrature_points(mesh: Mesh, order: int = 2) -> np.ndarray:
    """Physical quadrature points, shape ``(T, Q, 2)``."""
    bary, _ = triangle_rule(order)
    return np.einsum("qa,tad->tqd", bary, mesh.vertices[mesh.triangles])


@dataclass(frozen=True)
class SPDReport:
    """Smallest metric eigenvalue over quadrature points and vertices."""

    min_eigenvalue: float
    where: str            # "quadrature" or "vertex"
    index: int
    failed: bool

    def to_record(self) -> dict:
        return {"min_eigenvalue": self.min_eigenvalue, "where": self.where,
                "index": self.index, "failed": self.failed}


def validate_spd(metric: Metric, mesh: Mesh, quad_order: int = 4) -> SPDReport:
    """Report instead of raise; ``failed`` is set when any eigenvalue is ``<= 0``."""
    q = quadrature_points(mesh, quad_order).reshape(-1, 2)
    lq = min_eigenvalues(metric.eval(q))
    lv = min_eigenvalues(metric.eval(mesh.vertices))
    iq, iv = int(np.argmin(lq)), int(np.argmin(lv))
    if lq[iq] <= lv[iv]:
        lam, where, idx = float(lq[iq]), "quadrature", iq
    else:
        lam, where, idx = float(lv[iv]), "vertex", iv
    return SPDReport(lam, where, idx, not lam > 0)


def p1_gradients(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Constant Euclidean gradients of the three hat functions per triangle.

    Returns ``grads (T, 3, 2)`` and ``areas (T,)``.
    """
    p = mesh.vertices[mesh.triangles]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    # inverse-transpose of the affine Jacobian, columns d1, d2
    g1 = np.stack([d2[:, 1], -d2[:, 0]], axis=1) / det[:, None]
    g2 = np.stack([-d1[:, 1], d1[:, 0]], axis=1) / det[:, None]
    grads = np.stack([-g1 - g2, g1, g2], axis=1)
    return grads, 0.5 * det


# --------------------------------------------------------------------------
# matrices
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StiffnessMatrix:
    """Sparse symmetric matrix over all vertices with interior/boundary partition.

    ``boundary`` follows the concatenated loop order of the mesh, which is also
    the row order of every boundary matrix and boundary vector in the package.
    """

    matrix: sp.csr_matrix
    interior: np.ndarray
    boundary: np.ndarray
    quad_order: int

    def block(self, rows: str, cols: str) -> sp.csr_matrix:
        r = self.interior if rows == "i" else self.boundary
        c = self.interior if cols == "i" else self.boundary
        return self.matrix[r][:, c]


@dataclass(frozen=True, eq=False)
class BoundaryMassMatrix:
    """Sparse symmetric 1D mass matrix over boundary DOFs (loop order)."""

    matrix: sp.csr_matrix
    kind: str
    weight: ScalarField | None = None

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    n = len(mesh.vertices)
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def _metric_at_quadrature(mesh: Mesh, metric: Metric, order: int):
    xq = quadrature_points(mesh, order)
    T, Q, _ = xq.shape
    g = metric.eval(xq.reshape(-1, 2))
    require_spd(g)
    return xq, g.reshape(T, Q, 2, 2)


def _assemble_tensor_form(mesh: Mesh, coeff: np.ndarray, order: int) -> sp.csr_matrix:
    """Assemble ``sum_q w_q |T| grad phi_a . C_q grad phi_b`` for a coefficient ``C (T, Q, 2, 2)``."""
    _, w = triangle_rule(order)
    grads, area = p1_gradients(mesh)
    cbar = np.einsum("q,tqij->tij", w, coeff) * area[:, None, None]
    local = np.einsum("tai,tij,tbj->tab", grads, cbar, grads)
    return _scatter(mesh, local)


def _stiffness(mesh, K, order) -> StiffnessMatrix:
    return StiffnessMatrix(K, mesh.interior_vertices, mesh.boundary_vertices, order)


def assemble_stiffness(mesh: Mesh, metric: Metric, quad_order: int = 2,
                       weight: ScalarField | None = None) -> StiffnessMatrix:
    """Stiffness matrix of ``int sqrt|g| g^{ij} u_i w_j dx`` (optionally times a weight)."""
    xq, g = _metric_at_quadrature(mesh, metric, quad_order)
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    coeff = np.sqrt(det)[..., None, None] * np.linalg.inv(g)
    if weight is not None:
        coeff = coeff * weight.value(xq.reshape(-1, 2)).reshape(xq.shape[:2])[..., None, None]
    return _stiffness(mesh, _assemble_tensor_form(mesh, coeff, quad_order), quad_order)


def assemble_stiffness_derivative(mesh: Mesh, metric: Metric, h: PerturbationDirection,
                                  quad_order: int = 2) -> StiffnessMatrix:
    """Exact derivative ``DK`` of :func:`assemble_stiffness` in direction ``h``."""
    xq, g = _metric_at_quadrature(mesh, metric, quad_order)
    T, Q = xq.shape[:2]
    hq = h.tensor(metric, xq.reshape(-1, 2)).reshape(T, Q, 2, 2)
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    ginv = np.linalg.inv(g)
    ghg = ginv @ hq @ ginv
    tr = np.einsum("tqij,tqji->tq", ginv, hq)
    coeff = np.sqrt(det)[..., None, None] * (0.5 * tr[..., None, None] * ginv - ghg)
    return _stiffness(mesh, _assemble_tensor_form(mesh, coeff, quad_order), quad_order)


def _edge_rule(kind: str, n_gauss: int):
    if kind == "lumped":
        return np.array([0.0, 1.0]), np.array([0.5, 0.5])
    if kind == "consistent":
        return edge_gauss(n_gauss)
    raise ValueError(f"mass kind must be 'consistent' or 'lumped', got {kind!r}")


def _boundary_form(mesh: Mesh, metric: Metric, density, kind: str, n_gauss: int,
                   weight: ScalarField | None) -> sp.csr_matrix:
    """Assemble ``int phi_a phi_b rho ds`` where ``rho = density(tau, g, x)``."""
    xq, wq = _edge_rule(kind, n_gauss)
    nb = len(mesh.boundary_vertices)
    rows, cols, vals = [], [], []
    offset = 0
    for k, lp in enumerate(mesh.boundary_loops):
        m = len(lp)
        e = mesh.loop_edges(k)
        pa, pb = mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]]
        tau = pb - pa
        pts = (pa[:, None, :] + xq[None, :, None] * tau[:, None, :]).reshape(-1, 2)
        rho = density(tau, pts).reshape(m, len(xq))
        if weight is not None:
            rho = rho * weight.value(pts).reshape(m, len(xq))
        phi = np.stack([1.0 - xq, xq])          # (2, Q)
        local = np.einsum("aq,bq,eq,q->eab", phi, phi, rho, wq)
        ia = offset + np.arange(m)
        ib = offset + (np.arange(m) + 1) % m
        idx = np.stack([ia, ib], axis=1)
        rows.append(np.repeat(idx, 2, axis=1).ravel())
        cols.append(np.tile(idx, (1, 2)).ravel())
        vals.append(local.ravel())
        offset += m
    return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(nb, nb)).tocsr()


def assemble_boundary_mass(mesh: Mesh, metric: Metric, weight: ScalarField | None = None,
                           kind: str = "lumped", n_gauss: int = 4) -> BoundaryMassMatrix:
    """Boundary mass matrix with length element ``sqrt(g(tau, tau))``.

    ``kind="lumped"`` uses the vertex (trapezoid) rule on every edge, which gives a
    diagonal matrix and makes pointwise multiplication by a weight exact:
    ``M^sigma = diag(sigma(x_a)) M``.  ``kind="consistent"`` uses ``n_gauss``
    Gauss points per edge.
    """
    def density(tau, pts):
        g = metric.eval(pts)
        require_spd(g, "boundary quadrature point")
        t = np.repeat(tau, len(pts) // len(tau), axis=0)
        return np.sqrt(np.einsum("pi,pij,pj->p", t, g, t))

    return BoundaryMassMatrix(_boundary_form(mesh, metric, density, kind, n_gauss, weight),
                              kind, weight)


def assemble_boundary_mass_derivative(mesh: Mesh, metric: Metric, h: PerturbationDirection,
                                      kind: str = "lumped", n_gauss: int = 4) -> BoundaryMassMatrix:
    """Exact derivative ``DM_b`` of :func:`assemble_boundary_mass` in direction ``h``."""
    def density(tau, pts):
        g = metric.eval(pts)
        require_spd(g, "boundary quadrature point")
        hh = h.tensor(metric, pts)
        t = np.repeat(tau, len(pts) // len(tau), axis=0)
        gtt = np.einsum("pi,pij,pj->p", t, g, t)
        htt = np.einsum("pi,pij,pj->p", t, hh, t)
        return 0.5 * htt / np.sqrt(gtt)

    return BoundaryMassMatrix(_boundary_form(mesh, metric, density, kind, n_gauss, None), kind)


# --------------------------------------------------------------------------
# Dirichlet solves
# --------------------------------------------------------------------------

class InteriorSolver:
    """Factorization of ``K_ii``, computed once and reused for every right-hand side.

    SuperLU with symmetric-mode options (no diagonal pivoting, ``A + A^T``
    column ordering) which for an SPD matrix amounts to a sparse LDL^T.
    """

    def __init__(self, K: StiffnessMatrix):
        Kii = K.block("i", "i").tocsc()
        try:
            self._lu = splu(Kii, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                            options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise SolverError(f"interior factorization failed: {exc}") from exc
        self.size = Kii.shape[0]
        if self.size and np.any(self._lu.U.diagonal() <= 0):
            raise SolverError("interior stiffness block is not positive definite")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.size == 0:
            return np.zeros_like(rhs)
        x = self._lu.solve(np.ascontiguousarray(rhs))
        if not np.all(np.isfinite(x)):
            raise SolverError("non-finite interior solution")
        return x


@dataclass(frozen=True, eq=False)
class InteriorField:
    """Nodal values over all vertices."""

    values: np.ndarray
    harmonic: bool
    residual: float = 0.0


def harmonic_extension(K: StiffnessMatrix, f: np.ndarray,
                       solver: InteriorSolver | None = None) -> InteriorField:
    """Discrete harmonic extension: ``K_ii u_i = -K_ib f``, ``u_b = f``."""
    solver = solver or InteriorSolver(K)
    f = np.asarray(f, dtype=float)
    Kib = K.block("i", "b")
    rhs = -(Kib @ f)
    ui = solver.solve(rhs)
    u = np.empty(K.matrix.shape[0])
    u[K.interior] = ui
    u[K.boundary] = f
    res = np.linalg.norm(K.block("i", "i") @ ui - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if np.linalg.norm(rhs) == 0:
        res = float(np.linalg.norm(ui))
    return InteriorField(u, True, float(res))
