import numpy as np
import pytest

from steklov_lab.fields import EuclideanMetric
from steklov_lab.mesh import generate_disk_mesh
from steklov_lab.oracles import annulus_spectrum, disk_spectrum
from steklov_lab.steklov import (BoundaryTrace, PreconditionError, build_dtn, canonical_basis,
                                 cluster_multiplicities, extract_trace, periodic_derivative,
                                 resolvent_apply, steklov_eigs)


def boundary_xy(mesh):
    return mesh.vertices[mesh.boundary_vertices]


# --------------------------------------------------------------------------
# DtN operator
# --------------------------------------------------------------------------

def test_dtn_kills_constants(disk_dtn):
    S = disk_dtn.S
    assert np.abs(S @ np.ones(S.shape[0])).max() <= 1e-12 * np.abs(S).max()


def test_dtn_symmetric_semidefinite(disk_dtn):
    S = disk_dtn.S
    assert np.abs(S - S.T).max() == 0.0
    assert np.linalg.eigvalsh(S).min() >= -1e-12


def test_dtn_of_cos_theta(disk_dtn, disk_mid):
    # Lambda cos(theta) = cos(theta) on the unit disk, up to discretization error
    x = boundary_xy(disk_mid)[:, 0]
    Lx = disk_dtn.apply(x)
    assert np.abs(Lx - x).max() <= 0.02


def test_extend_matches_boundary_data(disk_dtn, disk_mid, rng):
    f = rng.standard_normal(disk_dtn.S.shape[0])
    u = disk_dtn.extend(f)
    assert np.array_equal(u[disk_mid.boundary_vertices], f)
    r = disk_dtn.K.matrix @ u
    assert np.abs(r[disk_dtn.K.interior]).max() <= 1e-10


# --------------------------------------------------------------------------
# spectra against closed-form values
# --------------------------------------------------------------------------

def test_disk_spectrum(disk_spec):
    lam = disk_spec.eigenvalues[:11]
    exact = disk_spectrum(1.0, 11)
    assert abs(lam[0]) <= 1e-10
    assert np.all(np.abs(lam[1:] - exact[1:]) / exact[1:] <= 0.02)
    assert [b - a for a, b in disk_spec.clusters[:6]] == [1, 2, 2, 2, 2, 2]


def test_annulus_spectrum(annulus_mid):
    lam = steklov_eigs(build_dtn(annulus_mid), 8).eigenvalues
    exact = annulus_spectrum(0.5, 1.0, 8)
    assert abs(lam[0]) <= 1e-10
    assert np.all(np.abs(lam[1:] - exact[1:]) / exact[1:] <= 0.02)


def test_four_g_halves_eigenvalues(disk_mid, disk_spec):
    lam = steklov_eigs(build_dtn(disk_mid, EuclideanMetric(4.0))).eigenvalues
    assert np.allclose(lam[1:20], 0.5 * disk_spec.eigenvalues[1:20], rtol=1e-12)


def test_radius_scaling():
    # same mesh scaled by 2: eigenvalues scale by 1/2
    m1 = generate_disk_mesh(1.0, 0.2)
    m2 = generate_disk_mesh(2.0, 0.4)
    a = steklov_eigs(build_dtn(m1), 9).eigenvalues
    b = steklov_eigs(build_dtn(m2), 9).eigenvalues
    assert np.allclose(b[1:], 0.5 * a[1:], rtol=1e-10)


def test_count_larger_than_boundary_rejected(disk_dtn):
    with pytest.raises(PreconditionError):
        steklov_eigs(disk_dtn, disk_dtn.S.shape[0] + 1)


# --------------------------------------------------------------------------
# clusters and eigenvectors
# --------------------------------------------------------------------------

def test_cluster_examples():
    assert cluster_multiplicities([0.0, 1.0, 2.0, 3.0]) == ((0, 1), (1, 2), (2, 3), (3, 4))
    assert cluster_multiplicities([1.0, 1.0 + 5e-7]) == ((0, 2),)
    assert cluster_multiplicities([1.0, 1.0 + 2e-6]) == ((0, 1), (1, 2))
    # the relative part of the rule
    assert cluster_multiplicities([100.0, 100.0 + 5e-5]) == ((0, 2),)


def test_eigenvectors_mass_orthonormal(disk_spec):
    P = disk_spec.eigenvectors[:, :30]
    G = P.T @ disk_spec.mass @ P
    assert np.abs(G - np.eye(30)).max() <= 1e-10


def test_nonzero_modes_have_zero_mean(disk_spec):
    one = np.ones(disk_spec.mass.shape[0])
    means = one @ disk_spec.mass @ disk_spec.eigenvectors[:, 1:30]
    assert np.abs(means).max() <= 1e-10


def test_residuals_small(disk_spec):
    assert disk_spec.residuals.max() <= 1e-12


def test_canonical_basis_depends_only_on_subspace(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((40, 3)))
    R, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    a = canonical_basis(Q)
    b = canonical_basis(Q @ R)
    assert np.allclose(a, b, atol=1e-12)
    assert np.allclose(a.T @ a, np.eye(3), atol=1e-12)


def test_eigenvectors_deterministic(disk_mid, disk_spec):
    again = steklov_eigs(build_dtn(disk_mid))
    assert np.array_equal(again.eigenvectors, disk_spec.eigenvectors)


# --------------------------------------------------------------------------
# resolvent
# --------------------------------------------------------------------------

def test_resolvent_single_mode(disk_spec):
    psi = disk_spec.eigenvectors
    lam = disk_spec.eigenvalues[1]
    w = psi[:, 5]
    r = resolvent_apply(disk_spec, lam, w)
    assert np.allclose(r, w / (disk_spec.eigenvalues[5] - lam), atol=1e-12)


def test_resolvent_rejects_eigenspace_component(disk_spec):
    lam = disk_spec.eigenvalues[1]
    with pytest.raises(PreconditionError):
        resolvent_apply(disk_spec, lam, disk_spec.eigenvectors[:, 2])
    with pytest.raises(PreconditionError):
        resolvent_apply(disk_spec, lam, np.ones(disk_spec.mass.shape[0]))


@pytest.mark.parametrize("index", [1, 3, 5])
def test_resolvent_solves_shifted_equation(disk_dtn, disk_spec, rng, index):
    lam = disk_spec.eigenvalues[index]
    a, b = disk_spec.cluster_of(index)
    P = disk_spec.eigenvectors
    M = disk_spec.mass
    w = rng.standard_normal(M.shape[0])
    block = np.r_[disk_spec.zero_modes(), np.arange(a, b)]
    w -= P[:, block] @ (P[:, block].T @ (M @ w))
    r = resolvent_apply(disk_spec, lam, w)
    lhs = disk_dtn.S @ r - lam * (M @ r)
    assert np.linalg.norm(lhs - M @ w) <= 1e-8 * np.linalg.norm(M @ w)
    # the result stays in the admissible complement
    assert np.abs(P[:, block].T @ (M @ r)).max() <= 1e-10


# --------------------------------------------------------------------------
# traces
# --------------------------------------------------------------------------

@pytest.mark.parametrize("scheme", ["fd4", "fourier"])
def test_periodic_derivative_of_cosine(scheme):
    n = 128
    t = np.arange(n)
    y = np.cos(2 * np.pi * t / n)
    d1, d2 = periodic_derivative(y, scheme)
    w = 2 * np.pi / n
    tol = 1e-12 if scheme == "fourier" else 1e-6
    assert np.abs(d1 + w * np.sin(w * t)).max() <= tol * w
    assert np.abs(d2 + w ** 2 * y).max() <= tol * w ** 2


def test_trace_derivatives_from_function():
    tr = BoundaryTrace.from_function(np.cos, 200)
    assert np.abs(tr.d1 + np.sin(tr.s)).max() <= 1e-5
    assert np.abs(tr.d2 + np.cos(tr.s)).max() <= 1e-4
    with pytest.raises(ValueError):
        periodic_derivative(np.ones(8), "spline")


def test_extracted_trace_of_cos_theta(disk_fine):
    dtn = build_dtn(disk_fine)
    spec = steklov_eigs(dtn, 3)
    # rotate the first cluster so the trace lines up with cos(s)
    x = boundary_xy(disk_fine)[:, 0]
    P = spec.eigenvectors[:, 1:3]
    c = P.T @ spec.mass @ x
    v = P @ (c / np.linalg.norm(c))
    v *= np.sqrt(np.pi)                     # L2-normalized cos has amplitude 1/sqrt(pi)
    spec2 = type(spec)(spec.eigenvalues[:2], np.column_stack([spec.eigenvectors[:, 0], v]),
                       ((0, 1), (1, 2)), spec.gap_tol, spec.residuals[:2], spec.mass)
    tr = extract_trace(spec2, 1, disk_fine, scheme="auto")[0]
    assert tr.scheme == "fourier"
    s = tr.s
    assert np.abs(tr.values - np.cos(s)).max() <= 0.01
    assert np.abs(tr.d1 + np.sin(s)).max() <= 0.01
    assert np.abs(tr.d2 + np.cos(s)).max() <= 0.01


def test_constant_trace(disk_spec, disk_mid):
    tr = extract_trace(disk_spec, 0, disk_mid)[0]
    assert np.ptp(tr.values) <= 1e-10
    assert np.abs(tr.d1).max() <= 1e-9 and np.abs(tr.d2).max() <= 1e-8


@pytest.mark.parametrize("scheme", ["fd4", "fourier"])
def test_integral_of_derivative_vanishes(disk_spec, annulus_mid, disk_mid, scheme):
    for i in (1, 4, 7):
        tr = extract_trace(disk_spec, i, disk_mid, scheme=scheme)[0]
        assert abs(tr.integral_of_derivative()) <= 1e-10
    spec = steklov_eigs(build_dtn(annulus_mid), 6)
    for tr in extract_trace(spec, 3, annulus_mid, scheme=scheme):
        assert abs(tr.integral_of_derivative()) <= 1e-10


def test_extract_trace_index_checked(disk_spec, disk_mid):
    with pytest.raises(IndexError):
        extract_trace(disk_spec, 10_000, disk_mid)
