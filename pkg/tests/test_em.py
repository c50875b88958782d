"""Tests for the EM fitting engine and BIC model selection.

Oracle policy: M-step outputs are checked against brute-force loops and
numpy sample statistics; responsibilities against scipy posteriors; the
free-parameter counts are asserted from closed forms.
"""

import itertools

import numpy as np
import pytest
from scipy import stats

from credalboot.em import (
    FitConfig,
    bic_score,
    e_step,
    fit_em,
    free_params,
    m_step,
    select_model,
)
from credalboot.errors import EmptyClusterError, FitFailedError
from credalboot.gmm import Dataset, MixtureParams, log_density


def sample_three_spherical(rng, n=300, sep=3.0):
    """Equal-weight spherical mixture at (0,0), (0,sep), (sep,0)."""
    means = np.array([[0.0, 0.0], [0.0, sep], [sep, 0.0]])
    labels = rng.integers(0, 3, size=n)
    x = means[labels] + rng.normal(size=(n, 2))
    return Dataset(x), labels, means


class TestEStep:
    def test_single_component(self):
        rng = np.random.default_rng(0)
        data = Dataset(rng.normal(size=(20, 2)))
        params = MixtureParams(
            np.array([1.0]), np.zeros((1, 2)), np.eye(2)[None], "VVV"
        )
        resp, ll = e_step(data, params)
        np.testing.assert_array_equal(resp, np.ones((20, 1)))
        assert ll == pytest.approx(float(np.sum(log_density(data.rows, params))), abs=1e-10)

    def test_matches_scipy_posteriors(self):
        rng = np.random.default_rng(1)
        data = Dataset(rng.normal(size=(15, 2)) * 2.0)
        weights = np.array([0.3, 0.5, 0.2])
        means = rng.normal(size=(3, 2))
        covs = np.array([np.eye(2), 2 * np.eye(2), np.array([[2.0, 0.6], [0.6, 1.0]])])
        params = MixtureParams(weights, means, covs, "VVV")
        resp, ll = e_step(data, params)
        joint = np.column_stack(
            [
                weights[k] * stats.multivariate_normal.pdf(data.rows, means[k], covs[k])
                for k in range(3)
            ]
        )
        np.testing.assert_allclose(resp, joint / joint.sum(axis=1, keepdims=True), atol=1e-12)
        assert ll == pytest.approx(float(np.log(joint.sum(axis=1)).sum()), abs=1e-9)

    def test_mirror_symmetry(self):
        data = Dataset(np.array([[-1.0], [1.0]]))
        params = MixtureParams(
            np.array([0.5, 0.5]),
            np.array([[-1.0], [1.0]]),
            np.repeat(np.eye(1)[None], 2, axis=0),
            "EII",
        )
        resp, _ = e_step(data, params)
        np.testing.assert_allclose(resp[0], resp[1][::-1], atol=1e-15)


class TestMStep:
    def test_single_component_ml_estimates(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(40, 3))
        data = Dataset(x)
        params = m_step(data, np.ones((40, 1)), "VVV")
        np.testing.assert_allclose(params.means[0], x.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(params.covariances[0], np.cov(x.T, bias=True), atol=1e-12)
        assert params.weights[0] == 1.0

    def test_hard_assignment_matches_per_cluster_stats(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(60, 2))
        labels = rng.integers(0, 3, size=60)
        resp = np.zeros((60, 3))
        resp[np.arange(60), labels] = 1.0
        params = m_step(Dataset(x), resp, "VVV")
        for k in range(3):
            part = x[labels == k]
            np.testing.assert_allclose(params.weights[k], len(part) / 60.0, atol=1e-15)
            np.testing.assert_allclose(params.means[k], part.mean(axis=0), atol=1e-12)
            np.testing.assert_allclose(
                params.covariances[k], np.cov(part.T, bias=True), atol=1e-12
            )

    def test_spherical_family_uses_pooled_scalar(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(30, 2))
        resp = rng.dirichlet(np.ones(2), size=30)
        params = m_step(Dataset(x), resp, "EII")
        nk = resp.sum(axis=0)
        means = (resp.T @ x) / nk[:, None]
        lam = 0.0
        for k in range(2):
            for i in range(30):
                lam += resp[i, k] * np.sum((x[i] - means[k]) ** 2)
        lam /= 30 * 2
        for k in range(2):
            np.testing.assert_allclose(params.covariances[k], lam * np.eye(2), atol=1e-12)

    def test_shared_family_uses_pooled_scatter(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(25, 2))
        resp = rng.dirichlet(np.ones(3), size=25)
        params = m_step(Dataset(x), resp, "EEE")
        nk = resp.sum(axis=0)
        means = (resp.T @ x) / nk[:, None]
        pooled = np.zeros((2, 2))
        for k in range(3):
            for i in range(25):
                diff = (x[i] - means[k])[:, None]
                pooled += resp[i, k] * (diff @ diff.T)
        pooled /= 25
        for k in range(3):
            np.testing.assert_allclose(params.covariances[k], pooled, atol=1e-12)
        # shared matrices are exactly identical, not merely close
        assert (params.covariances[0] == params.covariances[1]).all()

    def test_weights_are_column_means(self):
        rng = np.random.default_rng(6)
        resp = rng.dirichlet(np.ones(3), size=50)
        params = m_step(Dataset(rng.normal(size=(50, 2))), resp, "VVV")
        np.testing.assert_allclose(params.weights, resp.mean(axis=0), atol=1e-14)

    def test_empty_column_rejected(self):
        resp = np.zeros((10, 2))
        resp[:, 0] = 1.0
        with pytest.raises(EmptyClusterError):
            m_step(Dataset(np.random.default_rng(7).normal(size=(10, 2))), resp, "VVV")


class TestFreeParams:
    def test_closed_forms(self):
        assert free_params(3, 2, "EII") == 2 + 6 + 1
        assert free_params(3, 2, "EEE") == 2 + 6 + 3
        assert free_params(3, 2, "VVV") == 2 + 6 + 9
        assert free_params(1, 4, "EII") == 0 + 4 + 1
        assert free_params(2, 3, "VVV") == 1 + 6 + 12

    def test_bic_sign_convention(self):
        # higher is better: bic = 2*loglik - nu*log(n)
        assert bic_score(-100.0, 9, 150) == pytest.approx(-200.0 - 9 * np.log(150))


class TestFitEm:
    def test_recovers_separated_means(self):
        rng = np.random.default_rng(8)
        data, _, true_means = sample_three_spherical(rng, n=300)
        result = fit_em(data, 3, "EII", FitConfig(seed=77))
        best = min(
            max(
                float(np.linalg.norm(result.params.means[perm[k]] - true_means[k]))
                for k in range(3)
            )
            for perm in itertools.permutations(range(3))
        )
        assert best < 0.3
        assert result.converged

    def test_single_component_converges_fast(self):
        rng = np.random.default_rng(9)
        result = fit_em(Dataset(rng.normal(size=(50, 2))), 1, "VVV", FitConfig(seed=1))
        assert result.converged
        assert result.n_iter <= 2

    def test_loglik_trace_monotone(self):
        rng = np.random.default_rng(10)
        data, _, _ = sample_three_spherical(rng, n=120)
        for tag in ("EII", "EEE", "VVV"):
            result = fit_em(data, 3, tag, FitConfig(seed=5, n_restarts=2))
            diffs = np.diff(result.loglik_trace)
            assert diffs.min() >= -1e-9

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(11)
        data, _, _ = sample_three_spherical(rng, n=90)
        a = fit_em(data, 3, "VVV", FitConfig(seed=123))
        b = fit_em(data, 3, "VVV", FitConfig(seed=123))
        assert a.log_likelihood == b.log_likelihood
        assert (a.params.means == b.params.means).all()
        assert (a.params.covariances == b.params.covariances).all()
        assert a.n_iter == b.n_iter

    def test_reported_bic_consistent(self):
        rng = np.random.default_rng(12)
        data, _, _ = sample_three_spherical(rng, n=100)
        result = fit_em(data, 2, "EEE", FitConfig(seed=3, n_restarts=2))
        expected = bic_score(result.log_likelihood, free_params(2, 2, "EEE"), 100)
        assert result.bic == pytest.approx(expected, abs=1e-10)

    def test_model_tag_constraint_holds_on_fit(self):
        rng = np.random.default_rng(13)
        data, _, _ = sample_three_spherical(rng, n=80)
        result = fit_em(data, 3, "EII", FitConfig(seed=4, n_restarts=2))
        cov = result.params.covariances
        assert (cov[0] == cov[1]).all() and (cov[1] == cov[2]).all()
        assert cov[0][0, 1] == 0.0

    def test_too_few_points_fails_cleanly(self):
        data = Dataset(np.array([[0.0, 0.0], [1.0, 1.0]]))
        with pytest.raises((FitFailedError, ValueError)):
            fit_em(data, 3, "VVV", FitConfig(seed=1, n_restarts=2))


class TestSelectModel:
    def test_picks_max_bic(self):
        rng = np.random.default_rng(14)
        data, _, _ = sample_three_spherical(rng, n=150)
        selection = select_model(
            data, [(3, "EII"), (3, "EEE"), (3, "VVV")], FitConfig(seed=6, n_restarts=2)
        )
        table_bics = [row.bic for row in selection.table if row.bic is not None]
        assert selection.best.bic == max(table_bics)

    def test_singleton_candidate(self):
        rng = np.random.default_rng(15)
        data, _, _ = sample_three_spherical(rng, n=60)
        selection = select_model(data, [(2, "EII")], FitConfig(seed=7, n_restarts=2))
        assert selection.best_candidate == (2, "EII")

    def test_unequal_covariances_prefer_unconstrained(self):
        # three well-separated components with visibly different shapes
        rng = np.random.default_rng(16)
        means = np.array([[0.0, 0.0], [0.0, 6.0], [6.0, 0.0]])
        covs = np.array(
            [
                [[1.0, 0.5], [0.5, 1.0]],
                [[1.5, -0.75], [-0.75, 1.5]],
                [[0.3, 0.0], [0.0, 0.3]],
            ]
        )
        labels = rng.integers(0, 3, size=600)
        chols = np.linalg.cholesky(covs)
        x = means[labels] + np.einsum(
            "nij,nj->ni", chols[labels], rng.normal(size=(600, 2))
        )
        selection = select_model(
            Dataset(x),
            [(3, "EII"), (3, "EEE"), (3, "VVV")],
            FitConfig(seed=8, n_restarts=2),
        )
        assert selection.best_candidate == (3, "VVV")

    def test_tie_breaks_toward_more_parameters(self):
        from credalboot.em import _prefer_candidate

        # exact BIC tie: the candidate with more free parameters wins
        assert _prefer_candidate((10.0, 5), (10.0, 7)) == 1
        assert _prefer_candidate((10.0, 7), (10.0, 5)) == 0
        assert _prefer_candidate((11.0, 5), (10.0, 7)) == 0
