"""
Discrete Dirichlet-to-Neumann operator and the Steklov pencil ``S f = lambda M_b f``.

``S = K_bb - K_bi K_ii^{-1} K_ib`` is the weak normal flux of the harmonic
extension; ``M_b^{-1} S`` is the discrete DtN map.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .assembly import (BoundaryMassMatrix, InteriorSolver, SolverError, StiffnessMatrix,
                       assemble_boundary_mass, assemble_stiffness)
from .fields import EuclideanMetric, Metric
from .mesh import Mesh, boundary_arclength

DEFAULT_GAP_TOL = 1e-6


class PreconditionError(ValueError):
    """An input violates an operation's documented precondition."""


@dataclass(frozen=True, eq=False)
class DtnOperator:
    """Dense Schur complement with everything needed to differentiate it.

    Attributes
    ----------
    S : (nb, nb) symmetric Schur complement
    mass : boundary mass matrix
    K : full stiffness matrix
    solver : factorization of ``K_ii``
    extension : ``X = K_ii^{-1} K_ib`` so that the harmonic extension of ``f``
        has interior values ``-X f``
    """

    S: np.ndarray
    mass: BoundaryMassMatrix
    K: StiffnessMatrix
    solver: InteriorSolver
    extension: np.ndarray
    mesh: Mesh | None = None
    metric: Metric | None = None

    @property
    def M(self) -> np.ndarray:
        return self.mass.dense()

    def apply(self, f: np.ndarray) -> np.ndarray:
        """``Lambda f = M_b^{-1} S f``."""
        return mass_solve(self.mass, self.S @ f)

    def extend(self, f: np.ndarray) -> np.ndarray:
        """Harmonic extension of ``f`` as nodal values over all vertices."""
        u = np.empty(self.K.matrix.shape[0])
        u[self.K.interior] = -(self.extension @ f)
        u[self.K.boundary] = f
        return u


def mass_solve(mass: BoundaryMassMatrix, rhs: np.ndarray) -> np.ndarray:
    if mass.kind == "lumped":
        d = mass.matrix.diagonal()
        return rhs / (d if rhs.ndim == 1 else d[:, None])
    return la.cho_solve(la.cho_factor(mass.dense()), rhs)


def dtn_schur(K: StiffnessMatrix, M_b: BoundaryMassMatrix, mesh: Mesh | None = None,
              metric: Metric | None = None) -> DtnOperator:
    """Form ``S = K_bb - K_bi K_ii^{-1} K_ib`` by one solve per boundary DOF."""
    solver = InteriorSolver(K)
    Kib = K.block("i", "b").toarray()
    X = solver.solve(Kib)
    S = K.block("b", "b").toarray() - K.block("b", "i") @ X
    S = 0.5 * (S + S.T)
    return DtnOperator(S, M_b, K, solver, X, mesh, metric)


def build_dtn(mesh: Mesh, metric: Metric | None = None, quad_order: int = 2,
              mass_kind: str = "lumped") -> DtnOperator:
    """Assemble and form the DtN operator for a mesh and metric."""
    metric = metric or EuclideanMetric()
    K = assemble_stiffness(mesh, metric, quad_order)
    M = assemble_boundary_mass(mesh, metric, kind=mass_kind)
    return dtn_schur(K, M, mesh, metric)


# --------------------------------------------------------------------------
# spectrum
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SteklovSpectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray          # columns, M_b-orthonormal
    clusters: tuple[tuple[int, int], ...]
    gap_tol: float
    residuals: np.ndarray             # |S psi - lambda M psi| / (|S| |psi|)
    mass: np.ndarray = field(repr=False)

    def cluster_of(self, index: int) -> tuple[int, int]:
        for c in self.clusters:
            if c[0] <= index < c[1]:
                return c
        raise IndexError(index)

    def zero_modes(self) -> np.ndarray:
        """Indices of the (numerically) zero cluster."""
        lam = self.eigenvalues
        scale = max(1.0, float(np.max(np.abs(lam))))
        c = self.clusters[0]
        if abs(lam[c[0]]) <= 1e-8 * scale:
            return np.arange(*c)
        return np.arange(0)


def cluster_multiplicities(eigenvalues, gap_tol: float = DEFAULT_GAP_TOL) -> tuple[tuple[int, int], ...]:
    """Group sorted eigenvalues into maximal runs with
    ``lam[i+1] - lam[i] <= gap_tol * max(1, lam[i])``.

    Returns half-open index ranges.
    """
    lam = np.asarray(getattr(eigenvalues, "eigenvalues", eigenvalues), dtype=float)
    out = []
    start = 0
    for i in range(len(lam) - 1):
        if lam[i + 1] - lam[i] > gap_tol * max(1.0, abs(lam[i])):
            out.append((start, i + 1))
            start = i + 1
    if len(lam):
        out.append((start, len(lam)))
    return tuple(out)


def _pick_node(Q: np.ndarray) -> int:
    rn = np.linalg.norm(Q, axis=1)
    return int(np.flatnonzero(rn >= 0.5 * rn.max())[0])


def canonical_basis(Q: np.ndarray) -> np.ndarray:
    """Deterministic orthogonal re-rotation of an eigenspace basis.

    The first vector is the unit combination with the largest value at the
    lowest-index node where the space is substantially nonzero; the rest are
    chosen the same way inside the orthogonal complement.  The result depends
    only on the subspace, not on the input basis.
    """
    m = Q.shape[1]
    if m == 0:
        return Q
    p = _pick_node(Q)
    r = Q[p] / np.linalg.norm(Q[p])
    first = Q @ r
    if m == 1:
        return first[:, None]
    # orthonormal complement of r in R^m (Householder reflector)
    e = np.zeros(m)
    e[0] = 1.0
    v = r - e if r[0] < 1 - 1e-15 else np.zeros(m)
    H = np.eye(m) if not v.any() else np.eye(m) - 2.0 * np.outer(v, v) / (v @ v)
    rest = canonical_basis(Q @ H[:, 1:])
    return np.column_stack([first, rest])


def steklov_eigs(dtn: DtnOperator, count: int | None = None,
                 gap_tol: float = DEFAULT_GAP_TOL) -> SteklovSpectrum:
    """First ``count`` eigenpairs of ``(S, M_b)`` (all of them by default)."""
    nb = dtn.S.shape[0]
    count = nb if count is None else count
    if count > nb:
        raise PreconditionError(f"count={count} exceeds {nb} boundary DOFs")
    M = dtn.M
    try:
        lam, psi = la.eigh(dtn.S, M)
    except la.LinAlgError as exc:
        raise SolverError(f"generalized eigensolver failed: {exc}") from exc
    clusters_all = cluster_multiplicities(lam, gap_tol)
    # simple eigenvectors get a sign convention from the same rule
    for a, b in clusters_all:
        psi[:, a:b] = canonical_basis(psi[:, a:b])
    lam, psi = lam[:count], psi[:, :count]
    clusters = tuple((a, min(b, count)) for a, b in clusters_all if a < count)
    snorm = np.linalg.norm(dtn.S, 2)
    res = np.linalg.norm(dtn.S @ psi - (M @ psi) * lam, axis=0) / (
        max(snorm, 1e-300) * np.linalg.norm(psi, axis=0))
    return SteklovSpectrum(lam, psi, clusters, gap_tol, res, M)


# --------------------------------------------------------------------------
# resolvent
# --------------------------------------------------------------------------

def resolvent_apply(spectrum: SteklovSpectrum, lam: float, w: np.ndarray,
                    tol: float = 1e-8) -> np.ndarray:
    """``R_lam w = sum over lam_n outside cluster(lam), lam_n > 0 of
    (psi_n^T M_b w) / (lam_n - lam) psi_n``.

    ``w`` must be M_b-orthogonal to constants and to the eigenvectors of the
    cluster of ``lam``; otherwise :class:`PreconditionError`.
    """
    ev = spectrum.eigenvalues
    psi = spectrum.eigenvectors
    coef = psi.T @ (spectrum.mass @ w)
    near = np.abs(ev - lam) <= spectrum.gap_tol * max(1.0, abs(lam))
    blocked = near.copy()
    blocked[spectrum.zero_modes()] = True
    wnorm = np.sqrt(max(w @ spectrum.mass @ w, 1e-300))
    if np.any(np.abs(coef[blocked]) > tol * wnorm):
        raise PreconditionError("w is not orthogonal to the lambda-eigenspace and constants")
    keep = ~blocked
    return psi[:, keep] @ (coef[keep] / (ev[keep] - lam))


# --------------------------------------------------------------------------
# boundary traces
# --------------------------------------------------------------------------

def periodic_derivative(y: np.ndarray, scheme: str = "fd4") -> tuple[np.ndarray, np.ndarray]:
    """First and second derivatives of periodic samples in the index parameter."""
    if scheme == "fourier":
        n = len(y)
        k = np.fft.rfftfreq(n, 1.0 / n) * (2.0 * np.pi / n)
        Y = np.fft.rfft(y)
        d1k = 1j * k * Y
        if n % 2 == 0:
            d1k[-1] = 0.0
        return np.fft.irfft(d1k, n), np.fft.irfft(-(k ** 2) * Y, n)
    if scheme == "fd4":
        r = lambda s: np.roll(y, -s)
        d1 = (8.0 * (r(1) - r(-1)) - (r(2) - r(-2))) / 12.0
        d2 = (16.0 * (r(1) + r(-1)) - (r(2) + r(-2)) - 30.0 * y) / 12.0
        return d1, d2
    raise ValueError(f"unknown differentiation scheme {scheme!r}")


@dataclass(frozen=True, eq=False)
class BoundaryTrace:
    """A function on one boundary loop sampled at its vertices.

    ``d1``/``d2`` are arclength derivatives obtained by differentiating in the
    vertex-index parameter ``t`` (periodic 4th-order central differences, or
    Fourier) and applying the chain rule with ``s(t)``:
    ``f' = f_t / s_t`` and ``f'' = (f_tt - f' s_tt) / s_t^2``.
    """

    loop: int
    s: np.ndarray
    length: float
    values: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    ds_dt: np.ndarray
    scheme: str

    @classmethod
    def from_samples(cls, values, s, length: float, loop: int = 0,
                     scheme: str = "fd4") -> "BoundaryTrace":
        values = np.asarray(values, dtype=float)
        s = np.asarray(s, dtype=float)
        # s(t) - length * t / n is periodic
        n = len(s)
        lin = length * np.arange(n) / n
        p1, p2 = periodic_derivative(s - lin, scheme)
        st, stt = p1 + length / n, p2
        ft, ftt = periodic_derivative(values, scheme)
        d1 = ft / st
        d2 = (ftt - d1 * stt) / st ** 2
        return cls(loop, s, float(length), values, d1, d2, st, scheme)

    @classmethod
    def from_function(cls, f, n: int, length: float = 2.0 * np.pi, scheme: str = "fd4",
                      loop: int = 0) -> "BoundaryTrace":
        s = length * np.arange(n) / n
        return cls.from_samples(f(s), s, length, loop, scheme)

    def integral_of_derivative(self) -> float:
        """``oint f' ds`` with the quadrature weights ``s_t`` of the scheme."""
        return float(np.sum(self.d1 * self.ds_dt))

    def normalized(self, scale: float) -> "BoundaryTrace":
        return BoundaryTrace(self.loop, self.s, self.length, self.values / scale,
                             self.d1 / scale, self.d2 / scale, self.ds_dt, self.scheme)


def _is_uniform(lengths: np.ndarray) -> bool:
    return float(np.ptp(lengths)) <= 1e-10 * float(np.mean(lengths))


def extract_trace(spectrum: SteklovSpectrum, index: int, mesh: Mesh,
                  metric: Metric | None = None, scheme: str = "fd4") -> list[BoundaryTrace]:
    """Traces of eigenvector ``index`` on every boundary loop.

    ``scheme="auto"`` uses Fourier differentiation on loops whose vertices are
    uniform in arclength and 4th-order differences elsewhere.
    """
    if not 0 <= index < spectrum.eigenvalues.size:
        raise IndexError(index)
    metric = metric or EuclideanMetric()
    vec = spectrum.eigenvectors[:, index]
    arcs = boundary_arclength(mesh, metric)
    out = []
    off = 0
    for arc, lp in zip(arcs, mesh.boundary_loops):
        vals = vec[off:off + len(lp)]
        off += len(lp)
        sch = scheme
        if scheme == "auto":
            sch = "fourier" if _is_uniform(arc.edge_lengths) else "fd4"
        out.append(BoundaryTrace.from_samples(vals, arc.s, arc.total, arc.loop, sch))
    return out
