import numpy as np
import pytest

from steklov_lab.fields import (ConformalMetric, EuclideanMetric, PerturbationDirection,
                                PerturbedMetric, ScalarField, TensorMetric,
                                sample_random_conformal, sample_random_general)
from steklov_lab.mesh import generate_annulus_mesh
from steklov_lab.steklov import PreconditionError, build_dtn, mass_solve
from steklov_lab.variation import (StepTooLargeError, conformal_dg_laplacian,
                                   conformal_reconstruction, density_identity_residual,
                                   dtn_variation, evaluate_dg_laplacian, fd_convergence,
                                   finite_difference_dtn, laplace_beltrami, pencil_derivative,
                                   variation_of_harmonic_extension, weak_strong_consistency)

X = ScalarField.polynomial({(1, 0): 1.0})
Y = ScalarField.polynomial({(0, 1): 1.0})
HARM = ScalarField.polynomial({(2, 0): 1.0, (0, 2): -1.0})         # x^2 - y^2


@pytest.fixture(scope="module")
def annulus_dtn():
    return build_dtn(generate_annulus_mesh(0.5, 1.0, 0.15))


# --------------------------------------------------------------------------
# conformal directions
# --------------------------------------------------------------------------

@pytest.mark.parametrize("seed", [0, 1, 2])
def test_conformal_variation_of_extension_vanishes(disk_dtn, rng, seed):
    h = sample_random_conformal(seed, 3, 0.5)
    f = rng.standard_normal(disk_dtn.S.shape[0])
    v = variation_of_harmonic_extension(disk_dtn, h, f)
    assert np.abs(v.values).max() <= 1e-13


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_conformal_identity_on_eigenvectors(disk_dtn, disk_spec, seed):
    sigma = sample_random_conformal(seed, 3, 0.5).sigma
    sig = sigma.value(disk_dtn.mesh.vertices[disk_dtn.K.boundary])
    for i in (1, 2, 5, 9):
        f = disk_spec.eigenvectors[:, i]
        lam = disk_spec.eigenvalues[i]
        d = dtn_variation(disk_dtn, PerturbationDirection.conformal(sigma), f).dLf
        assert np.abs(d + 0.5 * lam * sig * f).max() <= 1e-10 * lam * np.abs(f).max()


def test_conformal_reconstruction_vanishes(disk_dtn, rng):
    sigma = sample_random_conformal(5, 3, 0.4).sigma
    f = rng.standard_normal(disk_dtn.S.shape[0])
    r = conformal_reconstruction(disk_dtn, sigma, f)
    d = dtn_variation(disk_dtn, PerturbationDirection.conformal(sigma), f).dLf
    sig = sigma.value(disk_dtn.mesh.vertices[disk_dtn.K.boundary])
    # the nodal formula -(sigma/2) Lambda f holds for every f, not only eigenvectors
    assert np.abs(d + 0.5 * sig * disk_dtn.apply(f)).max() <= 1e-12 * np.abs(disk_dtn.apply(f)).max()
    assert np.abs(r - d).max() <= 1e-12 * np.abs(disk_dtn.apply(f)).max()


def test_zero_direction(disk_dtn, rng):
    f = rng.standard_normal(disk_dtn.S.shape[0])
    res = dtn_variation(disk_dtn, PerturbationDirection.zero(), f)
    assert np.abs(res.dLf).max() == 0.0
    assert np.abs(res.v.values).max() == 0.0
    assert np.abs(finite_difference_dtn(disk_dtn.mesh, EuclideanMetric(),
                                        PerturbationDirection.zero(), f)).max() == 0.0


def test_unit_sigma_fd_is_minus_half_lambda(disk_dtn, disk_spec):
    f = disk_spec.eigenvectors[:, 3]
    lam = disk_spec.eigenvalues[3]
    fd = finite_difference_dtn(disk_dtn.mesh, EuclideanMetric(),
                               PerturbationDirection.conformal(ScalarField.constant(1.0)), f)
    assert np.abs(fd + 0.5 * lam * f).max() <= 1e-7 * lam * np.abs(f).max()


# --------------------------------------------------------------------------
# general directions against finite differences
# --------------------------------------------------------------------------

@pytest.mark.parametrize("seed", [3, 4])
def test_general_variation_matches_fd(annulus_dtn, rng, seed):
    h = sample_random_general(seed, 2, 0.3)
    f = rng.standard_normal(annulus_dtn.S.shape[0])
    study = fd_convergence(annulus_dtn, h, f)
    assert max(study.mismatch) <= 1e-6
    for o in study.orders:
        assert o == pytest.approx(2.0, abs=0.2)


def test_extension_variation_matches_fd(disk_dtn, rng):
    h = PerturbationDirection.general({(0, 0): X, (1, 1): -X})
    f = rng.standard_normal(disk_dtn.S.shape[0])
    v = variation_of_harmonic_extension(disk_dtn, h, f).values
    t = 1e-5
    up = build_dtn(disk_dtn.mesh, PerturbedMetric(EuclideanMetric(), h, t)).extend(f)
    dn = build_dtn(disk_dtn.mesh, PerturbedMetric(EuclideanMetric(), h, -t)).extend(f)
    fd = (up - dn) / (2 * t)
    assert np.abs(fd - v).max() <= 1e-8 * np.abs(v).max()
    assert np.abs(v[disk_dtn.K.boundary]).max() == 0.0


def test_linear_in_h_and_f(disk_dtn, rng):
    h1 = sample_random_general(1, 2, 0.3)
    h2 = sample_random_general(2, 2, 0.3)
    f, g = rng.standard_normal((2, disk_dtn.S.shape[0]))
    d = lambda h, x: dtn_variation(disk_dtn, h, x).dLf
    c1, c2 = dict(h1.tensor_components), dict(h2.tensor_components)
    h12 = PerturbationDirection.general({k: c1[k] * 2.0 + c2[k] * (-0.5) for k in c1})
    lhs = d(h12, f)
    rhs = 2.0 * d(h1, f) - 0.5 * d(h2, f)
    assert np.abs(lhs - rhs).max() <= 1e-10 * np.abs(rhs).max()
    lhs = d(h1, 3.0 * f - g)
    rhs = 3.0 * d(h1, f) - d(h1, g)
    assert np.abs(lhs - rhs).max() <= 1e-10 * np.abs(rhs).max()


def test_decomposition_sums(disk_dtn, rng):
    h = sample_random_general(6, 2, 0.3)
    f = rng.standard_normal(disk_dtn.S.shape[0])
    res = dtn_variation(disk_dtn, h, f)
    assert np.allclose(sum(res.decomposition.values()), res.dLf, rtol=0, atol=1e-13)


def test_pencil_derivative_matches_operator_route(disk_dtn, rng):
    h = sample_random_general(7, 2, 0.3)
    f = rng.standard_normal(disk_dtn.S.shape[0])
    DS, DM = pencil_derivative(disk_dtn, h)
    # d(M^{-1} S) = M^{-1} (DS - DM M^{-1} S)
    via_pencil = mass_solve(disk_dtn.mass, DS @ f - DM @ disk_dtn.apply(f))
    d = dtn_variation(disk_dtn, h, f).dLf
    assert np.abs(via_pencil - d).max() <= 1e-10 * np.abs(d).max()


def test_step_too_large(disk_dtn, rng):
    h = PerturbationDirection.general({(0, 0): ScalarField.constant(1.0),
                                       (1, 1): ScalarField.constant(1.0)})
    f = rng.standard_normal(disk_dtn.S.shape[0])
    with pytest.raises(StepTooLargeError):
        finite_difference_dtn(disk_dtn.mesh, EuclideanMetric(), h, f, t=2.0)
    with pytest.raises(ValueError):
        finite_difference_dtn(disk_dtn.mesh, EuclideanMetric(), h, f, t=0.0)


# --------------------------------------------------------------------------
# pointwise coordinate formulas
# --------------------------------------------------------------------------

PTS2 = np.random.default_rng(8).uniform(-0.7, 0.7, (12, 2))
PTS3 = np.random.default_rng(9).uniform(-0.7, 0.7, (12, 3))


def test_laplace_beltrami_euclidean_and_conformal():
    u = ScalarField.polynomial({(3, 0): 1.0, (1, 1): 2.0})
    assert np.allclose(laplace_beltrami(EuclideanMetric(), u, PTS2), 6 * PTS2[:, 0])
    # conformal invariance of the 2D Laplacian up to the factor e^{-2 phi}
    phi = X * 0.3 + ScalarField.polynomial({(0, 2): 0.2})
    lb = laplace_beltrami(ConformalMetric(phi), u, PTS2)
    assert np.allclose(lb, np.exp(-2 * phi.value(PTS2)) * 6 * PTS2[:, 0], rtol=1e-12)


def test_conformal_harmonic_two_dimensions():
    sigma = X * 0.4 + Y * 0.2 + ScalarField.constant(0.1)
    h = PerturbationDirection.conformal(sigma)
    out = evaluate_dg_laplacian(EuclideanMetric(), h, HARM, PTS2, n=2)
    assert np.abs(out).max() <= 1e-13


def test_conformal_harmonic_three_dimensions():
    sigma = ScalarField.polynomial({(1, 0, 0): 0.4, (0, 0, 1): -0.3, (1, 1, 0): 0.2})
    u = ScalarField.polynomial({(2, 0, 0): 1.0, (0, 2, 0): -1.0, (0, 0, 1): 0.5})
    h = PerturbationDirection.conformal(sigma)
    out = evaluate_dg_laplacian(EuclideanMetric(), h, u, PTS3, n=3)
    expect = 0.5 * np.einsum("pi,pi->p", sigma.gradient(PTS3), u.gradient(PTS3))
    assert np.allclose(out, expect, rtol=1e-12, atol=1e-14)
    assert np.allclose(conformal_dg_laplacian(EuclideanMetric(), sigma, u, PTS3), expect,
                       rtol=1e-12, atol=1e-14)


def test_point_dimension_checked():
    with pytest.raises(ValueError):
        evaluate_dg_laplacian(EuclideanMetric(), PerturbationDirection.conformal(X), HARM,
                              PTS2, n=3)


@pytest.mark.parametrize("metric", [EuclideanMetric(),
                                    ConformalMetric(X * 0.3),
                                    TensorMetric.from_table({(0, 0): ScalarField.constant(1.5) + X * 0.2,
                                                             (0, 1): Y * 0.1,
                                                             (1, 1): ScalarField.constant(1.0)})])
def test_general_formula_matches_fd_of_laplacian(metric):
    h = sample_random_general(11, 2, 0.3)
    u = ScalarField.polynomial({(3, 0): 0.3, (1, 2): -0.4, (0, 1): 1.0}) \
        + ScalarField.plane_wave((1.0, 0.5), 0.7)
    t = 1e-5
    fd = (laplace_beltrami(PerturbedMetric(metric, h, t), u, PTS2)
          - laplace_beltrami(PerturbedMetric(metric, h, -t), u, PTS2)) / (2 * t)
    exact = evaluate_dg_laplacian(metric, h, u, PTS2)
    assert np.allclose(exact, fd, rtol=1e-7, atol=1e-8)


def test_general_formula_agrees_with_conformal_closed_form():
    metric = ConformalMetric(X * 0.2 + Y * 0.1)
    sigma = sample_random_conformal(13, 2, 0.3).sigma
    u = ScalarField.polynomial({(3, 0): 0.3, (1, 2): -0.4})
    a = evaluate_dg_laplacian(metric, PerturbationDirection.conformal(sigma), u, PTS2)
    b = conformal_dg_laplacian(metric, sigma, u, PTS2)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-13)
    assert isinstance(conformal_dg_laplacian(metric, sigma, u, PTS2[0]), float)


def test_weak_and_strong_forms_agree(disk_mid):
    # phi = 1 - r^2 vanishes on the unit circle
    phi = ScalarField.polynomial({(0, 0): 1.0, (2, 0): -1.0, (0, 2): -1.0})
    u = ScalarField.polynomial({(3, 0): 0.3, (1, 1): -0.4, (0, 2): 0.2})
    metric = ConformalMetric(X * 0.2, TensorMetric.from_table({
        (0, 0): ScalarField.constant(1.2), (0, 1): Y * 0.1, (1, 1): ScalarField.constant(1.0)}))
    h = sample_random_general(14, 2, 0.3)
    weak, strong = weak_strong_consistency(disk_mid, metric, h, u, phi)
    # the polygonal domain differs from the disk by O(h^2) in area
    assert weak == pytest.approx(strong, rel=0.02)


# --------------------------------------------------------------------------
# integral identity
# --------------------------------------------------------------------------

def test_density_identity_two_dimensions(disk_dtn, disk_spec, rng):
    for k in range(4):
        sigma = sample_random_conformal(100 + k, 3, 0.4).sigma
        psi = rng.standard_normal(disk_dtn.S.shape[0])
        for i in (1, 4):
            r = density_identity_residual(disk_dtn, disk_spec.eigenvalues[i],
                                          disk_spec.eigenvectors[:, i], psi, sigma)
            assert r.residual <= 1e-10 * r.scale


def test_density_identity_special_cases(disk_dtn, disk_spec, rng):
    f = disk_spec.eigenvectors[:, 1]
    lam = disk_spec.eigenvalues[1]
    psi = rng.standard_normal(len(f))
    r = density_identity_residual(disk_dtn, lam, f, psi, ScalarField(()))
    assert r.lhs == 0.0 and r.rhs == 0.0
    # sigma = x with psi = f: both sides small against their scale
    r = density_identity_residual(disk_dtn, lam, f, f, X)
    assert r.residual <= 1e-10 * r.scale
    with pytest.raises(PreconditionError):
        density_identity_residual(disk_dtn, 0.0, f, psi, X)


def test_density_identity_three_dimensional_term_is_included(disk_dtn, disk_spec, rng):
    f = disk_spec.eigenvectors[:, 2]
    lam = disk_spec.eigenvalues[2]
    psi = rng.standard_normal(len(f))
    sigma = X * 0.5 + ScalarField.constant(0.3)
    r2 = density_identity_residual(disk_dtn, lam, f, psi, sigma, n=2)
    r3 = density_identity_residual(disk_dtn, lam, f, psi, sigma, n=3)
    assert r3.lhs == r2.lhs
    assert r3.rhs != r2.rhs
