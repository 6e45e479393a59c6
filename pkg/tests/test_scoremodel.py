import numpy as np
import pytest

from dimscope.core import NumericalError, PointSet, ValidationError
from dimscope.diffusion_id import estimate_from_scores
from dimscope.io import FormatError, write_tensor
from dimscope.scoremodel import (
    DsmConfig,
    GaussianScore,
    VeSchedule,
    analytic_gaussian_score,
    dsm_loss,
    load_score_matrix,
    tangent_normal_ratio,
    train_dsm_score_net,
    write_loss_trace,
)
from dimscope.synth import ManifoldSpec, analytic_covariance, sample_manifold


def test_point_mass_score():
    s = analytic_gaussian_score(np.zeros(2), np.zeros((2, 2)), [0.2, 0.0], 0.1)
    np.testing.assert_allclose(s, [-20.0, 0.0], rtol=1e-12)


def test_identity_covariance_score():
    s = analytic_gaussian_score(np.zeros(2), np.eye(2), [2.0, 0.0], 1.0)
    np.testing.assert_allclose(s, [-1.0, 0.0], rtol=1e-12)


def test_rank_one_score_and_ratio():
    cov = np.diag([1.0, 0.0])
    x = np.array([1.0, 1.0])
    s = analytic_gaussian_score(np.zeros(2), cov, x, 0.1)
    oracle = -np.linalg.solve(cov + 0.01 * np.eye(2), x)
    np.testing.assert_allclose(s, oracle, rtol=1e-10)
    np.testing.assert_allclose(s, [-1 / 1.01, -100.0], rtol=1e-10)
    ratio = tangent_normal_ratio(s, np.array([[1.0], [0.0]]))[0]
    assert ratio == pytest.approx(0.0099, abs=1e-4)
    smaller = tangent_normal_ratio(analytic_gaussian_score(np.zeros(2), cov, x, 0.01), np.array([[1.0], [0.0]]))[0]
    assert smaller < ratio


def test_gaussian_identity_residual():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(6, 3))
    cov = A @ A.T
    mean = rng.normal(size=6)
    oracle = GaussianScore(mean, cov)
    for sigma in (0.01, 0.3, 2.0):
        x = rng.normal(size=(5, 6))
        s = oracle.evaluate(x, sigma)
        lhs = s @ (cov + sigma**2 * np.eye(6))
        np.testing.assert_allclose(lhs, -(x - mean), rtol=1e-8, atol=1e-8 * np.abs(x - mean).max())


def test_tangent_ratio_shrinks_with_sigma():
    spec = ManifoldSpec("subspace_gaussian", 8, 3, 20, seed=4, variances=(1.0, 1.0, 1.0))
    oracle = GaussianScore(*analytic_covariance(spec))
    basis = sample_manifold(spec).basis
    x0 = sample_manifold(spec).points.data
    rng = np.random.default_rng(1)
    eps = rng.standard_normal((20, 8))
    ratios = []
    for sigma in np.geomspace(0.1, 0.001, 7):
        ratios.append(tangent_normal_ratio(oracle.evaluate(x0 + sigma * eps, sigma), basis).mean())
    assert all(a > b for a, b in zip(ratios, ratios[1:]))


def test_non_psd_covariance_rejected():
    with pytest.raises(NumericalError):
        GaussianScore(np.zeros(2), np.diag([1.0, -0.5]))
    with pytest.raises(ValidationError):
        GaussianScore(np.zeros(2), np.eye(2)).evaluate([1.0, 1.0], 0.0)


def test_schedule_is_monotone():
    sched = VeSchedule()
    s = sched.sigma(np.linspace(0.01, 1, 50))
    assert np.all(np.diff(s) > 0) and s[-1] == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        VeSchedule(1.0, 0.5)


def _line_data(n=400, seed=0):
    return sample_manifold(ManifoldSpec("subspace_gaussian", 2, 1, n, seed=seed, variances=(1.0,)))


def _split(pts, n_train):
    return pts.subset(range(n_train)), pts.subset(range(n_train, pts.n))


def test_untrained_net_has_finite_loss():
    train, held = _split(_line_data(464).points, 400)
    net = train_dsm_score_net(train, DsmConfig(steps=0))
    assert net.loss_trace == ()
    assert np.isfinite(dsm_loss(net, held, VeSchedule()))


def test_training_is_deterministic(tmp_path):
    data = _line_data()
    cfg = DsmConfig(steps=60, seed=3)
    a, b = train_dsm_score_net(data.points, cfg), train_dsm_score_net(data.points, cfg)
    assert a.loss_trace == b.loss_trace
    x = np.random.default_rng(0).normal(size=(4, 2))
    assert a.evaluate(x, 0.1).tobytes() == b.evaluate(x, 0.1).tobytes()
    path = write_loss_trace(tmp_path / "loss.csv", a)
    assert path.read_text().splitlines()[0] == "step,loss" and len(path.read_text().splitlines()) == 61


def test_training_reduces_held_out_loss():
    train, held = _split(_line_data(1256).points, 1000)
    init = train_dsm_score_net(train, DsmConfig(steps=0, seed=2))
    trained = train_dsm_score_net(train, DsmConfig(steps=1500, seed=2))
    assert dsm_loss(trained, held, VeSchedule(), seed=5) < dsm_loss(init, held, VeSchedule(), seed=5)


def test_divergence_is_reported():
    data = _line_data(200)
    with pytest.raises(NumericalError, match="step"):
        train_dsm_score_net(data.points, DsmConfig(steps=50, learning_rate=1e30))


@pytest.mark.slow
def test_trained_score_matches_analytic_direction():
    spec = ManifoldSpec("subspace_gaussian", 2, 1, 5256, seed=0, variances=(1.0,))
    train, held = _split(sample_manifold(spec).points, 5000)
    net = train_dsm_score_net(train, DsmConfig(steps=20000))
    exact = GaussianScore(*analytic_covariance(spec))
    rng = np.random.default_rng(99)
    x0 = held.data
    x = x0 + 0.1 * rng.standard_normal(x0.shape)
    a, b = net.evaluate(x, 0.1), exact.evaluate(x, 0.1)
    cos = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
    assert cos.mean() >= 0.9


def test_score_file_roundtrip(tmp_path):
    scores = np.random.default_rng(5).normal(size=(2, 4, 3))
    write_tensor(tmp_path / "s.dimt", scores)
    assert load_score_matrix(tmp_path / "s.dimt").scores.tobytes() == scores.tobytes()


def test_truncated_score_file(tmp_path):
    path = write_tensor(tmp_path / "s.dimt", np.zeros((2, 4, 3)))
    path.write_bytes(path.read_bytes()[:50])
    with pytest.raises(FormatError) as exc:
        load_score_matrix(path)
    assert exc.value.offset == 50


def test_large_image_score_file_is_truncated_downstream(tmp_path):
    scores = np.random.default_rng(0).normal(size=(1, 328, 5184))
    write_tensor(tmp_path / "big.dimt", scores)
    loaded = load_score_matrix(tmp_path / "big.dimt", d=5184)
    (est,) = estimate_from_scores(loaded)
    assert est.truncated and est.spectrum.size == 328
    assert est.k_hat == 5184 - est.gap_index


def test_precomputed_rejects_rank_mismatch(tmp_path):
    write_tensor(tmp_path / "flat.dimt", np.zeros((3, 4)))
    with pytest.raises(ValidationError):
        load_score_matrix(tmp_path / "flat.dimt")
