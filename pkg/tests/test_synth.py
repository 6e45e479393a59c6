import numpy as np
import pytest

from dimscope.classical import MleParams, mle_id_aggregate, mle_id_points
from dimscope.core import ValidationError
from dimscope.numerics import sym_eigenvalues
from dimscope.synth import ManifoldSpec, analytic_covariance, sample_manifold


def test_subspace_gaussian_is_flat():
    m = sample_manifold(ManifoldSpec("subspace_gaussian", 3, 1, 200, seed=1))
    U = m.basis
    residual = m.points.data - m.points.data @ U @ U.T
    assert np.abs(residual).max() <= 1e-10
    assert m.true_k == 1


def test_sphere_has_unit_norm():
    m = sample_manifold(ManifoldSpec("k_sphere", 5, 2, 300, seed=2))
    np.testing.assert_allclose(np.linalg.norm(m.points.data, axis=1), 1.0, atol=1e-10)


def test_cube_mle_recovers_two():
    m = sample_manifold(ManifoldSpec("k_cube", 10, 2, 2000, seed=0))
    agg = mle_id_aggregate(mle_id_points(m.points, MleParams(m=20)))
    assert 1.8 <= agg.estimate <= 2.2


def test_swiss_roll_layout():
    m = sample_manifold(ManifoldSpec("swiss_roll", 5, 2, 100, seed=3))
    assert np.all(m.points.data[:, 3:] == 0)
    t = np.hypot(m.points.data[:, 0], m.points.data[:, 2])
    assert t.min() >= 1.5 * np.pi - 1e-9 and t.max() <= 4.5 * np.pi + 1e-9


def test_regeneration_is_bitwise():
    spec = ManifoldSpec("k_cube", 6, 3, 50, noise_sigma=0.1, seed=9)
    assert sample_manifold(spec).points.data.tobytes() == sample_manifold(spec).points.data.tobytes()


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(kind="torus", ambient_d=3, intrinsic_k=1, n=5),
        dict(kind="subspace_gaussian", ambient_d=3, intrinsic_k=4, n=5),
        dict(kind="swiss_roll", ambient_d=2, intrinsic_k=2, n=5),
        dict(kind="swiss_roll", ambient_d=3, intrinsic_k=1, n=5),
        dict(kind="k_sphere", ambient_d=3, intrinsic_k=3, n=5),
        dict(kind="k_cube", ambient_d=3, intrinsic_k=1, n=5, noise_sigma=-1.0),
    ],
)
def test_invalid_specs(kwargs):
    with pytest.raises(ValidationError):
        ManifoldSpec(**kwargs)


def test_analytic_covariance_examples():
    spec = ManifoldSpec("subspace_gaussian", 2, 1, 10, variances=(1.0,))
    mean, cov = analytic_covariance(spec)
    U = sample_manifold(spec).basis[:, 0]
    np.testing.assert_allclose(cov, np.outer(U, U), atol=1e-15)
    assert mean.tolist() == [0.0, 0.0]
    noisy = ManifoldSpec("subspace_gaussian", 2, 1, 10, noise_sigma=0.1, variances=(1.0,))
    np.testing.assert_allclose(analytic_covariance(noisy)[1] - cov, 0.01 * np.eye(2), atol=1e-15)


def test_analytic_covariance_basis_e1():
    # with U = e1 the covariance is diag(1, 0); rotate the generic result back onto e1
    spec = ManifoldSpec("subspace_gaussian", 2, 1, 10, variances=(1.0,))
    _, cov = analytic_covariance(spec)
    u = sample_manifold(spec).basis[:, 0]
    R = np.array([[u[0], u[1]], [-u[1], u[0]]])  # maps u to e1
    np.testing.assert_allclose(R @ cov @ R.T, [[1.0, 0.0], [0.0, 0.0]], atol=1e-15)


def test_analytic_covariance_eigenvalues():
    spec = ManifoldSpec("subspace_gaussian", 4, 2, 10, noise_sigma=0.05, seed=12)
    lam = spec.tangent_variances()
    eig = sym_eigenvalues(analytic_covariance(spec)[1]).values
    np.testing.assert_allclose(eig, [lam[0] + 0.0025, lam[1] + 0.0025, 0.0025, 0.0025], atol=1e-10)
    assert lam.tolist() == [1.0, 0.8]


def test_other_kinds_have_no_analytic_covariance():
    with pytest.raises(ValidationError):
        analytic_covariance(ManifoldSpec("k_cube", 3, 2, 10))
