import math

import numpy as np
import pytest

from orthoglm import oracle, rmt
from orthoglm.errors import SpecError
from orthoglm.network import validate_network
from orthoglm.scalar_info import BernoulliGaussianPrior, GaussianPrior, RademacherPrior, prior_mmse

from conftest import glm_doc, law


class TestMatrices:
    def test_haar_is_orthogonal(self):
        q = oracle.haar_orthogonal(30, np.random.default_rng(0))
        assert np.allclose(q @ q.T, np.eye(30), atol=1e-12)

    def test_haar_first_column_is_uniform(self):
        # Haar columns have E[q_11^2] = 1/n
        rng = np.random.default_rng(1)
        vals = [oracle.haar_orthogonal(8, rng)[0, 0] ** 2 for _ in range(2000)]
        assert np.mean(vals) == pytest.approx(1 / 8, abs=0.01)

    @pytest.mark.parametrize("M, N", [(20, 40), (40, 20), (30, 30)])
    def test_spectrum(self, M, N):
        inst = oracle.sample_matrix(rmt.MarchenkoPastur(M / N), M, N, seed=3)
        assert inst.A.shape == (M, N)
        eig = np.sort(np.linalg.eigvalsh(inst.A.T @ inst.A))[::-1][: min(M, N)]
        assert np.allclose(eig, inst.sq_singular, atol=1e-10)

    def test_bernoulli_is_a_partial_isometry(self):
        inst = oracle.sample_matrix(rmt.Bernoulli(0.5), 10, 20, seed=0)
        assert np.allclose(inst.A @ inst.A.T, np.eye(10), atol=1e-12)

    def test_seeded(self):
        a = oracle.sample_matrix(rmt.MarchenkoPastur(1.0), 12, 12, seed=5, mode="iid").A
        b = oracle.sample_matrix(rmt.MarchenkoPastur(1.0), 12, 12, seed=5, mode="iid").A
        assert np.array_equal(a, b)

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            oracle.sample_matrix(rmt.PointMass(1.0), 3, 3, mode="sobol")


class TestGaussianExact:
    def test_identity_channel_closed_form(self):
        # A with every squared singular value 2: I = 0.5 log(1 + 2 / eps)
        net = validate_network(glm_doc(law("point_mass", lam=2.0), 1.0, eps=0.5))
        res = oracle.gaussian_exact(net, 50, trials=2)
        assert res.info == pytest.approx(0.5 * math.log(1 + 4.0), rel=1e-12)
        assert res.mmse["x"] == pytest.approx(1 / (1 + 4.0), rel=1e-12)
        assert res.info_std == pytest.approx(0.0, abs=1e-12)

    def test_quantile_mode_matches_law_average(self):
        law_obj = rmt.MarchenkoPastur(0.5)
        net = validate_network(glm_doc(rmt.law_to_dict(law_obj), 0.5))
        res = oracle.gaussian_exact(net, 400, trials=2)
        lam, w = law_obj.quadrature()
        assert res.info == pytest.approx(0.5 * float(np.dot(w, np.log1p(lam))), rel=5e-3)
        assert res.mmse["x"] == pytest.approx(float(np.dot(w, 1 / (1 + lam))), rel=5e-3)

    def test_rotation_invariance(self, chain_doc):
        net = validate_network(chain_doc)
        rot = oracle.haar_orthogonal(40, np.random.default_rng(9))
        a = oracle.gaussian_exact(net, 40, seed=2, trials=1)
        b = oracle.gaussian_exact(net, 40, seed=2, trials=1, rotation=rot)
        assert b.info == pytest.approx(a.info, rel=1e-10)
        assert b.mmse["x1"] == pytest.approx(a.mmse["x1"], rel=1e-10)

    def test_deterministic(self, chain_doc):
        net = validate_network(chain_doc)
        a = oracle.gaussian_exact(net, 60, seed=4, trials=3)
        b = oracle.gaussian_exact(net, 60, seed=4, trials=3)
        assert a == b

    def test_mmse_bounded_by_prior_variance(self, chain_doc):
        net = validate_network(chain_doc)
        res = oracle.gaussian_exact(net, 60, trials=2)
        assert 0 < res.mmse["x1"] < 1.0
        assert 0 < res.mmse["x2"] < 2.0
        assert res.info > 0

    def test_rejects_non_gaussian(self):
        doc = glm_doc(law("bernoulli", beta=0.5), 0.5, prior={"type": "rademacher"})
        with pytest.raises(SpecError):
            oracle.gaussian_exact(validate_network(doc), 10)
        doc = glm_doc(law("bernoulli", beta=0.5), 0.5)
        doc["nodes"][1]["channel"] = {"type": "sign", "eps": 0.1}
        with pytest.raises(SpecError):
            oracle.gaussian_exact(validate_network(doc), 10)

    def test_dimensions(self, chain_doc):
        sizes, rows = oracle.network_dimensions(validate_network(chain_doc), 100)
        assert sizes == {"x1": 100, "x2": 100}
        assert rows == {"x2": 100, "y": 50}


class TestScalarOracles:
    def test_mixture_quadrature_matches_library(self):
        for p in (RademacherPrior(), BernoulliGaussianPrior(0.1, 10.0)):
            for s in (0.5, 5.0, 40.0):
                assert oracle._mixture_mmse_quad(p, s) == pytest.approx(prior_mmse(p, s), rel=1e-6)

    def test_monte_carlo_gaussian(self):
        est, se = oracle.mc_scalar_mmse(GaussianPrior(1.0), 2.0, samples=50_000, seed=0)
        # the posterior variance is constant here, so the estimate is exact
        assert abs(est - 1 / 3) < 5 * se + 1e-12

    def test_monte_carlo_is_seeded(self):
        a = oracle.mc_scalar_mmse(RademacherPrior(), 1.0, samples=10_000, seed=7)
        b = oracle.mc_scalar_mmse(RademacherPrior(), 1.0, samples=10_000, seed=7)
        assert a == b


class TestStateEvolution:
    def test_gaussian_prior_single_fixed_point(self):
        # for a Gaussian prior the fixed point is the linear MMSE E[1 / (1 + lam / eps)]
        law_obj = rmt.MarchenkoPastur(0.5)
        pts = oracle.se_linear_fixed_points(GaussianPrior(1.0), law_obj, 1.0, n_scan=60)
        lam, w = law_obj.quadrature()
        assert len(pts) == 1
        assert pts[0] == pytest.approx(float(np.dot(w, 1 / (1 + lam))), rel=1e-8)

    def test_point_mass_law(self):
        # identity matrix: a scalar channel of snr 1 / eps
        pts = oracle.se_linear_fixed_points(RademacherPrior(), rmt.PointMass(1.0), 0.5, n_scan=60)
        assert pts == [pytest.approx(prior_mmse(RademacherPrior(), 2.0), rel=1e-8)]
