import numpy as np
import pytest

from src.errors import ConfigError, CycleError, NotPositiveDefiniteError, UnsupportedKindError
from src.graphs import DegreeCaps, Ordering
from src.protocol import ScoreParams
from src.sem import (
    Dataset,
    SemModel,
    check_assumptions,
    example_sem,
    exact_design,
    modified_cholesky,
    orthogonal_latents,
    sample_data,
    sample_sem,
)


class TestSemModel:
    def test_cyclic_support_rejected(self):
        B = np.array([[0.0, 1.0], [1.0, 0.0]])
        with pytest.raises(CycleError):
            SemModel(B, np.ones(2))

    def test_nonpositive_noise_rejected(self):
        with pytest.raises(ConfigError):
            SemModel(np.zeros((2, 2)), np.array([1.0, 0.0]))

    def test_covariance_of_chain(self):
        m = example_sem("ex1", 2.0)
        cov = m.covariance()
        assert cov[0, 0] == pytest.approx(1.0)
        assert cov[1, 1] == pytest.approx(5.0)
        assert cov[0, 2] == pytest.approx(4.0)
        assert cov[2, 2] == pytest.approx(21.0)

    def test_unknown_example(self):
        with pytest.raises(UnsupportedKindError):
            example_sem("ex9")

    def test_default_column_names(self):
        assert Dataset(np.zeros((2, 3))).columns == ["x1", "x2", "x3"]


class TestDesigns:
    def test_latents_are_orthogonal(self):
        Z = orthogonal_latents(16, 5)
        assert set(np.unique(Z)) == {-1.0, 1.0}
        np.testing.assert_allclose(Z.T @ Z, 16 * np.eye(5))

    def test_latent_size_checked(self):
        with pytest.raises(ConfigError):
            orthogonal_latents(6, 3)

    def test_exact_design_reproduces_covariance(self):
        m = example_sem("ex2", [0.7, -1.3])
        data = exact_design("ex2", 40, [0.7, -1.3])
        np.testing.assert_allclose(data.gram / data.n, m.covariance(), atol=1e-10)

    def test_sample_data_size(self):
        data = sample_data(example_sem("ex1"), 50, np.random.default_rng(0))
        assert (data.n, data.p) == (50, 3)
        with pytest.raises(ConfigError):
            sample_data(example_sem("ex1"), 0, np.random.default_rng(0))

    def test_sample_sem_respects_caps(self):
        caps = DegreeCaps(2, 1)
        for seed in range(10):
            dag, m = sample_sem(8, 2, 1, 0.5, 1.5, np.random.default_rng(seed), edge_prob=0.8)
            assert caps.admits(dag)
            nonzero = np.abs(m.B[m.B != 0])
            assert np.all((nonzero >= 0.5) & (nonzero <= 1.5))

    def test_sample_sem_bad_weights(self):
        with pytest.raises(ConfigError):
            sample_sem(3, 1, 1, 1.5, 0.5, np.random.default_rng(0))


class TestModifiedCholesky:
    def test_recovers_generating_sem(self):
        m = example_sem("ex3", 0.8)
        chol = modified_cholesky(m.covariance(), Ordering.identity(5))
        np.testing.assert_allclose(chol.B, m.B, atol=1e-9)
        np.testing.assert_allclose(chol.omega, m.omega, atol=1e-9)

    def test_any_order_reproduces_covariance(self):
        m = example_sem("ex1", 1.0)
        chol = modified_cholesky(m.covariance(), Ordering((2, 1, 0)))
        np.testing.assert_allclose(chol.covariance(), m.covariance(), atol=1e-9)
        assert chol.dag.edges == ((1, 0), (2, 1))

    def test_collider_reversed_is_complete(self):
        m = example_sem("ex2", 1.0)
        chol = modified_cholesky(m.covariance(), Ordering((2, 0, 1)))
        assert chol.dag.n_edges == 3

    def test_rejects_indefinite(self):
        with pytest.raises(NotPositiveDefiniteError):
            modified_cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]), Ordering.identity(2))


class TestAssumptions:
    def test_report_on_exact_design(self):
        data = exact_design("ex1", 400, 1.0)
        params = ScoreParams(c2=1.0, d_in=2, d_out=2)
        report = check_assumptions(data, params, true_dag=example_sem("ex1").dag)
        assert report.orderings_checked == 6
        assert report.flags["A"] is True
        assert report.flags["B"] is None
        assert 0 < report.nu_lower < report.nu_upper
        assert report.d_star_sigma <= report.d_star
        assert report.d_star_sigma == 2

    def test_covariance_needs_n(self):
        with pytest.raises(ConfigError):
            check_assumptions(np.eye(3), ScoreParams())

    def test_prior_margin(self):
        params = ScoreParams(c2=30.0, d_in=1, d_out=1)
        report = check_assumptions(np.eye(3), params, n=1000)
        assert report.prior_margin == pytest.approx(30.0 - 1.5 * 10)
