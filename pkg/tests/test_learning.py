import numpy as np
import pytest
from scipy.linalg import subspace_angles

from synthface.desk import synthetic_scan_corpus
from synthface.errors import InsufficientDataError, InvalidParameterError
from synthface.learning import (IdentityDistribution, ScanCorpus, fit_identity_basis, fit_identity_distribution,
                                load_corpus, load_distribution, sample_identity, save_corpus, save_distribution,
                                topology_hash)
from synthface.rig import bind_pose_mesh


def _rank3_corpus(rng, m=40, n=30, sigma=0.0):
    template = rng.normal(size=(n, 3))
    true_basis = np.linalg.qr(rng.normal(size=(3 * n, 3)))[0].T  # (3, 3N) orthonormal
    betas = rng.normal(size=(m, 3)) * [3.0, 2.0, 1.0]
    scans = template + (betas @ true_basis).reshape(m, n, 3) + rng.normal(0, sigma, size=(m, n, 3))
    return ScanCorpus(scans), template, true_basis


class TestFitBasis:
    def test_identical_scans(self, rng):
        template = rng.normal(size=(10, 3))
        basis, betas, report = fit_identity_basis(ScanCorpus(np.stack([template] * 5)), 2, template)
        assert np.all(betas == 0)
        assert np.all(report.residual_rms == 0)
        assert report.degenerate

    def test_recovers_rank3_subspace(self, rng):
        corpus, template, true_basis = _rank3_corpus(rng)
        basis, betas, report = fit_identity_basis(corpus, 3, template)
        assert report.rms < 1e-9
        angles = subspace_angles(basis.reshape(3, -1).T, true_basis.T)
        assert np.max(angles) < 1e-6

    @pytest.mark.parametrize("sigma", [1e-3, 1e-2])
    def test_noise_floor(self, rng, sigma):
        corpus, template, _ = _rank3_corpus(rng, m=60, n=40, sigma=sigma)
        _, _, report = fit_identity_basis(corpus, 3, template)
        assert report.rms <= 1.1 * sigma

    def test_orthonormal_components(self, rng):
        corpus, template, _ = _rank3_corpus(rng, sigma=0.1)
        basis, _, _ = fit_identity_basis(corpus, 5, template)
        flat = basis.reshape(5, -1)
        assert np.allclose(flat @ flat.T, np.eye(5), atol=1e-9)

    def test_explained_variance_sorted(self, rng):
        corpus, template, _ = _rank3_corpus(rng, sigma=0.1)
        _, _, report = fit_identity_basis(corpus, 6, template)
        assert np.all(np.diff(report.explained_variance_ratio) <= 1e-15)
        assert np.all(report.residual_rms >= 0)

    def test_beats_random_factorizations(self, rng):
        corpus = ScanCorpus(rng.normal(size=(15, 20, 3)))
        template = np.zeros((20, 3))
        basis, betas, _ = fit_identity_basis(corpus, 3, template)
        target = corpus.scans.reshape(15, -1)
        ours = np.linalg.norm(target - betas @ basis.reshape(3, -1))
        for _ in range(100):
            a, b = rng.normal(size=(15, 3)), rng.normal(size=(3, 60))
            # best coefficients for a random basis are still worse
            coef = np.linalg.lstsq(b.T, target.T, rcond=None)[0].T
            assert ours <= np.linalg.norm(target - coef @ b) + 1e-12
            assert ours <= np.linalg.norm(target - a @ b)

    def test_deterministic_signs(self, rng):
        corpus, template, _ = _rank3_corpus(rng, sigma=0.01)
        b1, _, _ = fit_identity_basis(corpus, 3, template)
        b2, _, _ = fit_identity_basis(ScanCorpus(corpus.scans.copy()), 3, template)
        assert np.array_equal(b1, b2)
        flat = b1.reshape(3, -1)
        assert np.all(flat[np.arange(3), np.argmax(np.abs(flat), axis=1)] > 0)

    def test_k_too_large(self, rng):
        corpus, template, _ = _rank3_corpus(rng, m=5)
        with pytest.raises(InvalidParameterError):
            fit_identity_basis(corpus, 5, template)

    def test_needs_two_scans(self, rng):
        template = rng.normal(size=(4, 3))
        with pytest.raises(InsufficientDataError):
            fit_identity_basis(ScanCorpus(template[None]), 1, template)


class TestDistribution:
    def test_two_point_hand_covariance(self):
        dist = fit_identity_distribution(np.array([[1.0, 0.0], [-1.0, 0.0]]))
        assert np.allclose(dist.mean, [0, 0])
        eps = 1e-10 * 2.0 / 2
        assert np.allclose(dist.covariance, [[2.0 + eps, 0.0], [0.0, eps]], rtol=0, atol=1e-15)
        assert np.allclose(dist.factor @ dist.factor.T, dist.covariance, atol=1e-8)

    def test_identical_betas(self):
        dist = fit_identity_distribution(np.tile([0.5, -1.0, 2.0], (4, 1)))
        assert np.array_equal(dist.mean, [0.5, -1.0, 2.0])
        assert np.all(dist.covariance == 0)
        rng = np.random.default_rng(0)
        for _ in range(5):
            assert np.array_equal(sample_identity(dist, rng), dist.mean)

    def test_monte_carlo_mean(self, rng):
        true_mean = np.array([1.0, -2.0, 0.5])
        a = rng.normal(size=(3, 3))
        cov = a @ a.T + np.eye(3)
        betas = rng.multivariate_normal(true_mean, cov, size=10_000)
        dist = fit_identity_distribution(betas)
        se = np.sqrt(np.diag(cov) / 10_000)
        assert np.all(np.abs(dist.mean - true_mean) < 5 * se)
        assert np.allclose(dist.covariance, dist.covariance.T, atol=1e-9)

    def test_needs_two(self):
        with pytest.raises(InsufficientDataError):
            fit_identity_distribution(np.zeros((1, 3)))


class TestSampling:
    def _dist(self, rng):
        a = rng.normal(size=(4, 4))
        cov = a @ a.T + 0.1 * np.eye(4)
        return IdentityDistribution(np.zeros(4), cov, np.linalg.cholesky(cov))

    def test_covariance_monte_carlo(self, rng):
        dist = self._dist(rng)
        gen = np.random.default_rng(1)
        samples = np.array([sample_identity(dist, gen, truncation=None) for _ in range(10_000)])
        err = np.linalg.norm(np.cov(samples.T) - dist.covariance) / np.linalg.norm(dist.covariance)
        assert err < 0.10

    def test_same_seed_same_output(self, rng):
        dist = self._dist(rng)
        a = sample_identity(dist, np.random.default_rng(7))
        b = sample_identity(dist, np.random.default_rng(7))
        assert np.array_equal(a, b)

    def test_truncation_bounds_whitened_draw(self, rng):
        dist = self._dist(rng)
        gen = np.random.default_rng(2)
        for _ in range(2000):
            z = np.linalg.solve(dist.factor, sample_identity(dist, gen, truncation=1.0) - dist.mean)
            assert np.all(np.abs(z) <= 1.0 + 1e-9)

    def test_samples_give_finite_meshes(self, assets):
        gen = np.random.default_rng(3)
        for _ in range(50):
            beta = sample_identity(assets.identity, gen)
            verts = bind_pose_mesh(assets.rig, beta, np.zeros(assets.rig.num_expression)).vertices
            assert np.all(np.isfinite(verts))


class TestFiles:
    def test_corpus_round_trip(self, tmp_path, rig):
        corpus = synthetic_scan_corpus(5)
        save_corpus(tmp_path / "c.npz", corpus)
        loaded = load_corpus(tmp_path / "c.npz", expected_topology=topology_hash(rig.faces))
        assert np.array_equal(loaded.scans, corpus.scans)

    def test_corpus_topology_mismatch(self, tmp_path):
        corpus = ScanCorpus(np.zeros((3, 4, 3)), topology_hash(np.array([[0, 1, 2]])))
        save_corpus(tmp_path / "c.npz", corpus)
        with pytest.raises(InvalidParameterError, match="topology"):
            load_corpus(tmp_path / "c.npz", expected_topology=topology_hash(np.array([[0, 2, 1]])))

    def test_distribution_round_trip(self, tmp_path, assets):
        save_distribution(tmp_path / "d.json", assets.identity)
        loaded = load_distribution(tmp_path / "d.json")
        assert np.array_equal(loaded.mean, assets.identity.mean)
        assert np.array_equal(loaded.covariance, assets.identity.covariance)


def test_desk_rig_fit_quality(assets):
    # the bundled basis explains nearly all identity variation in its corpus
    assert np.sum(assets.fit_report.explained_variance_ratio) > 0.99
