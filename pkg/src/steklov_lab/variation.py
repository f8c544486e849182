"""
Metric variations of the harmonic extension and of the DtN map.

The production path differentiates the discrete weak form.  With ``u`` the
harmonic extension of ``f``,

    K_ii v_i = -(DK u)_i,   v_b = 0                       (variation of u)
    M_b dLf  = DK_bb f + DK_bi u_i + K_bi v_i - DM_b Lambda f

which is the exact derivative of ``g -> M_b(g)^{-1} S(g) f``.  The continuum
coordinate formula for ``D_g(Delta) u`` is evaluated separately on analytic
fields by :func:`evaluate_dg_laplacian`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import (InteriorField, assemble_boundary_mass,
                       assemble_boundary_mass_derivative, assemble_stiffness,
                       assemble_stiffness_derivative, quadrature_points, triangle_rule,
                       p1_gradients)
from .fields import (Metric, MetricError, PerturbationDirection, PerturbedMetric,
                     ScalarField)
from .mesh import Mesh
from .steklov import DtnOperator, PreconditionError, build_dtn, mass_solve


class StepTooLargeError(ValueError):
    """``g +- t h`` is not positive definite on the mesh."""


@dataclass(frozen=True, eq=False)
class VariationResult:
    """``v = D_g u`` and ``dLf = (D_g Lambda)(h) f`` with the three discrete contributions."""

    v: InteriorField
    dLf: np.ndarray
    direction: PerturbationDirection
    decomposition: dict = field(default_factory=dict)


def _derivative_matrices(dtn: DtnOperator, h: PerturbationDirection):
    if dtn.mesh is None or dtn.metric is None:
        raise PreconditionError("DtN operator was built without its mesh and metric")
    DK = assemble_stiffness_derivative(dtn.mesh, dtn.metric, h, dtn.K.quad_order)
    DM = assemble_boundary_mass_derivative(dtn.mesh, dtn.metric, h, kind=dtn.mass.kind)
    return DK, DM


def variation_of_harmonic_extension(dtn: DtnOperator, h: PerturbationDirection,
                                    f: np.ndarray, DK=None) -> InteriorField:
    """Solve ``K_ii v_i = -(DK u)_i`` with ``v_b = 0``."""
    if DK is None:
        DK = assemble_stiffness_derivative(dtn.mesh, dtn.metric, h, dtn.K.quad_order)
    u = dtn.extend(np.asarray(f, dtype=float))
    rhs = -(DK.matrix @ u)[dtn.K.interior]
    vi = dtn.solver.solve(rhs)
    v = np.zeros_like(u)
    v[dtn.K.interior] = vi
    r = dtn.K.block("i", "i") @ vi - rhs
    nr = np.linalg.norm(rhs)
    return InteriorField(v, False, float(np.linalg.norm(r) / nr) if nr > 0 else float(np.linalg.norm(vi)))


def dtn_variation(dtn: DtnOperator, h: PerturbationDirection, f: np.ndarray) -> VariationResult:
    """Exact derivative of the discrete DtN map applied to ``f`` in direction ``h``."""
    f = np.asarray(f, dtype=float)
    DK, DM = _derivative_matrices(dtn, h)
    v = variation_of_harmonic_extension(dtn, h, f, DK)
    u = dtn.extend(f)
    K = dtn.K
    stiff = (DK.matrix @ u)[K.boundary]
    flux = K.block("b", "i") @ v.values[K.interior]
    measure = -(DM.matrix @ dtn.apply(f))
    parts = {
        "interior_flux": mass_solve(dtn.mass, flux),
        "stiffness_boundary": mass_solve(dtn.mass, stiff),
        "measure": mass_solve(dtn.mass, measure),
    }
    dLf = parts["interior_flux"] + parts["stiffness_boundary"] + parts["measure"]
    return VariationResult(v, dLf, h, parts)


def conformal_reconstruction(dtn: DtnOperator, sigma: ScalarField, f: np.ndarray) -> np.ndarray:
    """``v_n - (sigma / 2) Lambda f`` with ``v_n`` the weak flux of ``v = D_g u``.

    Only meaningful with lumped boundary mass, where nodal multiplication by
    ``sigma`` is the discrete multiplication operator.
    """
    h = PerturbationDirection.conformal(sigma)
    DK = assemble_stiffness_derivative(dtn.mesh, dtn.metric, h, dtn.K.quad_order)
    v = variation_of_harmonic_extension(dtn, h, f, DK)
    u = dtn.extend(f)
    vn = mass_solve(dtn.mass, dtn.K.block("b", "i") @ v.values[dtn.K.interior]
                    + (DK.matrix @ u)[dtn.K.boundary])
    sig = sigma.value(dtn.mesh.vertices[dtn.K.boundary])
    return vn - 0.5 * sig * dtn.apply(f)


def pencil_derivative(dtn: DtnOperator, h: PerturbationDirection) -> tuple[np.ndarray, np.ndarray]:
    """Dense ``(DS, DM_b)``; ``DS`` is the derivative of the Schur complement."""
    DK, DM = _derivative_matrices(dtn, h)
    X = dtn.extension
    A = DK.matrix
    Kb, Ki = dtn.K.boundary, dtn.K.interior
    Dbb = A[Kb][:, Kb].toarray()
    Dbi = A[Kb][:, Ki]
    Dii = A[Ki][:, Ki]
    DbiX = np.asarray(Dbi @ X)
    DS = Dbb - DbiX - DbiX.T + X.T @ np.asarray(Dii @ X)
    return 0.5 * (DS + DS.T), DM.dense()


# --------------------------------------------------------------------------
# finite-difference oracle
# --------------------------------------------------------------------------

def _rebuild(mesh, metric, quad_order, mass_kind):
    try:
        return build_dtn(mesh, metric, quad_order, mass_kind)
    except MetricError as exc:
        raise StepTooLargeError(str(exc)) from exc


def finite_difference_dtn(mesh: Mesh, metric: Metric, h: PerturbationDirection,
                          f: np.ndarray, t: float = 1e-4, quad_order: int = 2,
                          mass_kind: str = "lumped") -> np.ndarray:
    """Central difference ``[Lambda(g + t h) f - Lambda(g - t h) f] / (2 t)``."""
    if t <= 0:
        raise ValueError("step must be positive")
    if h.is_zero():
        return np.zeros(len(f))
    plus = _rebuild(mesh, PerturbedMetric(metric, h, t), quad_order, mass_kind)
    minus = _rebuild(mesh, PerturbedMetric(metric, h, -t), quad_order, mass_kind)
    return (plus.apply(f) - minus.apply(f)) / (2.0 * t)


@dataclass(frozen=True)
class FDStudy:
    steps: tuple[float, ...]
    mismatch: tuple[float, ...]      # relative, M_b norm
    orders: tuple[float, ...]        # between consecutive steps


def fd_convergence(dtn: DtnOperator, h: PerturbationDirection, f: np.ndarray,
                   steps=(1e-3, 5e-4, 2.5e-4)) -> FDStudy:
    """Mismatch of the FD oracle against :func:`dtn_variation` over a step list."""
    exact = dtn_variation(dtn, h, f).dLf
    M = dtn.M
    nrm = lambda x: float(np.sqrt(max(x @ M @ x, 0.0)))
    scale = nrm(exact)
    mism = []
    for t in steps:
        fd = finite_difference_dtn(dtn.mesh, dtn.metric, h, f, t, dtn.K.quad_order, dtn.mass.kind)
        mism.append(nrm(fd - exact) / scale if scale > 0 else nrm(fd))
    orders = tuple(float(np.log(mism[i] / mism[i + 1]) / np.log(steps[i] / steps[i + 1]))
                   if mism[i + 1] > 0 else float("nan") for i in range(len(steps) - 1))
    return FDStudy(tuple(steps), tuple(mism), orders)


# --------------------------------------------------------------------------
# continuum coordinate formulas
# --------------------------------------------------------------------------

def _setup(metric: Metric, x: np.ndarray):
    g = metric.eval(x)
    dg = metric.derivatives(x)
    ginv = np.linalg.inv(g)
    return g, dg, ginv


def laplace_beltrami(metric: Metric, u: ScalarField, x) -> np.ndarray:
    """``g^{ij} u_ij + d_i(g^{ij}) u_j + 1/2 tr(g^{-1} d_i g) g^{ij} u_j`` at points ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    g, dg, ginv = _setup(metric, x)
    du, ddu = u.gradient(x), u.hessian(x)
    dginv = -np.einsum("pab,pkbc,pcd->pkad", ginv, dg, ginv)
    trlog = np.einsum("pab,pkba->pk", ginv, dg)
    return (np.einsum("pij,pij->p", ginv, ddu)
            + np.einsum("piij,pj->p", dginv, du)
            + 0.5 * np.einsum("pi,pij,pj->p", trlog, ginv, du))


def evaluate_dg_laplacian(metric: Metric, h: PerturbationDirection, u: ScalarField,
                          x, n: int | None = None):
    """Pointwise ``D_g(Delta) u`` from the coordinate expansion

        h^{ij} u_ij + d_i(h^{ij}) u_j + 1/2 tr(h^{-1} d_i g + g^{-1} d_i h) g^{ij} u_j
                    + 1/2 tr(g^{-1} d_i g) h^{ij} u_j

    where ``h^{ij}`` are the components of ``D(g^{-1}) = -g^{-1} h g^{-1}``.
    ``x`` is a point or an array of points of dimension ``n``.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if n is not None and x.shape[1] != n:
        raise ValueError(f"points have dimension {x.shape[1]}, expected n={n}")
    g, dg, ginv = _setup(metric, x)
    hh = h.tensor(metric, x)
    dh = h.derivatives(metric, x)
    hup = -ginv @ hh @ ginv
    # d_k(h^{ij}) = g^-1 dg_k g^-1 h g^-1 - g^-1 dh_k g^-1 + g^-1 h g^-1 dg_k g^-1
    gi_dg_gi = np.einsum("pab,pkbc,pcd->pkad", ginv, dg, ginv)
    gi_dh_gi = np.einsum("pab,pkbc,pcd->pkad", ginv, dh, ginv)
    dhup = (np.einsum("pkab,pbc->pkac", gi_dg_gi, hh @ ginv)
            - gi_dh_gi
            + np.einsum("pab,pkbc->pkac", ginv @ hh, gi_dg_gi))
    du, ddu = u.gradient(x), u.hessian(x)
    t1 = np.einsum("pij,pij->p", hup, ddu)
    t2 = np.einsum("piij,pj->p", dhup, du)
    tr_var = (np.einsum("pab,pkba->pk", hup, dg) + np.einsum("pab,pkba->pk", ginv, dh))
    t3 = 0.5 * np.einsum("pi,pij,pj->p", tr_var, ginv, du)
    trlog = np.einsum("pab,pkba->pk", ginv, dg)
    t4 = 0.5 * np.einsum("pi,pij,pj->p", trlog, hup, du)
    out = t1 + t2 + t3 + t4
    return float(out[0]) if single else out


def conformal_dg_laplacian(metric: Metric, sigma: ScalarField, u: ScalarField, x,
                           n: int | None = None):
    """Closed form ``-(sigma Delta u + (1 - n/2) <grad sigma, grad u>_g)`` for ``h = sigma g``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    n = x.shape[1] if n is None else n
    ginv = np.linalg.inv(metric.eval(x))
    inner = np.einsum("pi,pij,pj->p", sigma.gradient(x), ginv, u.gradient(x))
    out = -(sigma.value(x) * laplace_beltrami(metric, u, x) + (1.0 - n / 2.0) * inner)
    return float(out[0]) if single else out


def weak_strong_consistency(mesh: Mesh, metric: Metric, h: PerturbationDirection,
                            u: ScalarField, phi: ScalarField, quad_order: int = 4):
    """Compare the weak-form metric derivative with the coordinate expansion.

    Returns ``(weak, strong)`` where, for ``phi`` vanishing on the boundary,

        weak   = int d/dt[sqrt|g| g^{ij}] u_j phi_i dx
        strong = -int phi sqrt|g| (1/2 tr(g^{-1} h) Delta_g u + D_g(Delta) u) dx

    agree up to quadrature error.
    """
    xq = quadrature_points(mesh, quad_order).reshape(-1, 2)
    _, w = triangle_rule(quad_order)
    _, area = p1_gradients(mesh)
    wts = (area[:, None] * w[None, :]).ravel()
    g = metric.eval(xq)
    ginv = np.linalg.inv(g)
    hh = h.tensor(metric, xq)
    sq = np.sqrt(np.linalg.det(g))
    tr = np.einsum("pij,pji->p", ginv, hh)
    B = sq[:, None, None] * (0.5 * tr[:, None, None] * ginv - ginv @ hh @ ginv)
    weak = np.sum(wts * np.einsum("pi,pij,pj->p", phi.gradient(xq), B, u.gradient(xq)))
    lap = laplace_beltrami(metric, u, xq)
    dlap = evaluate_dg_laplacian(metric, h, u, xq)
    strong = -np.sum(wts * phi.value(xq) * sq * (0.5 * tr * lap + dlap))
    return float(weak), float(strong)


# --------------------------------------------------------------------------
# integral identity from the density argument
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DensityIdentity:
    lhs: float
    rhs: float
    residual: float
    scale: float


def density_identity_residual(dtn: DtnOperator, lam: float, f: np.ndarray, psi: np.ndarray,
                              sigma: ScalarField, n: int = 2) -> DensityIdentity:
    """Residual of

        int psi (D_g Lambda)(sigma g) f dA
            = -lam (n-1)/2 int sigma psi f dA - (1 - n/2) int sigma <grad u~, grad u> dV

    for an eigenpair ``(lam, f)`` and test function ``psi`` (``u~`` its harmonic
    extension).  The mesh is planar, so only ``n = 2`` is a genuine identity.
    """
    if lam <= 0:
        raise PreconditionError("the identity needs a nonzero eigenvalue")
    f = np.asarray(f, dtype=float)
    psi = np.asarray(psi, dtype=float)
    res = dtn_variation(dtn, PerturbationDirection.conformal(sigma), f)
    M = dtn.M
    lhs = float(psi @ M @ res.dLf)
    Ms = assemble_boundary_mass(dtn.mesh, dtn.metric, weight=sigma, kind=dtn.mass.kind).matrix
    boundary = float(psi @ (Ms @ f))
    rhs = -lam * (n - 1) / 2.0 * boundary
    if n != 2:
        Ks = assemble_stiffness(dtn.mesh, dtn.metric, dtn.K.quad_order, weight=sigma).matrix
        rhs -= (1.0 - n / 2.0) * float(dtn.extend(psi) @ (Ks @ dtn.extend(f)))
    sup = np.max(np.abs(sigma.value(dtn.mesh.vertices))) if sigma.terms else 0.0
    scale = lam * np.sqrt(psi @ M @ psi) * np.sqrt(f @ M @ f) * max(sup, 1e-300)
    return DensityIdentity(lhs, rhs, abs(lhs - rhs), float(scale))
