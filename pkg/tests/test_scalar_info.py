import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orthoglm import oracle
from orthoglm.errors import DomainError
from orthoglm.scalar_info import (
    AdditiveChannel,
    BernoulliGaussianPrior,
    DiscretePrior,
    GaussianPairSurface,
    GaussianPrior,
    KernelPairSurface,
    LinearChannel,
    LinearGaussianSurface,
    RademacherPrior,
    SignChannel,
    obs_curve,
    pair_surface,
    prior_curve,
    prior_info,
    prior_mmse,
    second_moment,
)
from orthoglm import rmt

PRIORS = [
    GaussianPrior(1.0),
    GaussianPrior(2.5),
    RademacherPrior(),
    BernoulliGaussianPrior(0.1, 10.0),
    BernoulliGaussianPrior(0.5, 1.0),
    DiscretePrior(((-1.0, 0.2), (0.0, 0.5), (2.0, 0.3))),
]

SIGN = SignChannel(0.5)
QUANTISED = AdditiveChannel(0.5, atoms=((-1.0, 0.5), (1.0, 0.5)))


@pytest.fixture(scope="module")
def sign_curve():
    return obs_curve(SIGN, 1.0)


@pytest.fixture(scope="module")
def quantised_curve():
    return obs_curve(QUANTISED, 1.0)


class TestPriors:
    def test_moments(self):
        bg = BernoulliGaussianPrior(0.1, 10.0)
        assert bg.mean == 0.0
        assert bg.variance == pytest.approx(1.0)
        assert RademacherPrior().variance == 1.0
        assert RademacherPrior().entropy == pytest.approx(math.log(2))
        assert bg.entropy == math.inf

    def test_invalid(self):
        with pytest.raises(ValueError):
            GaussianPrior(0.0)
        with pytest.raises(ValueError):
            BernoulliGaussianPrior(1.0)
        with pytest.raises(ValueError):
            DiscretePrior(((0.0, 0.5), (1.0, 0.4)))
        with pytest.raises(ValueError):
            DiscretePrior(((0.0, 1.0),))

    def test_sampling_is_seeded(self):
        p = BernoulliGaussianPrior(0.3, 2.0)
        a = p.sample(100, np.random.default_rng(1))
        b = p.sample(100, np.random.default_rng(1))
        assert np.array_equal(a, b)


class TestPriorCurves:
    @pytest.mark.parametrize("prior", PRIORS, ids=repr)
    def test_endpoints(self, prior):
        assert prior_info(prior, 0.0) == 0.0
        assert prior_mmse(prior, 0.0) == pytest.approx(prior.variance, rel=1e-12)

    def test_gaussian_closed_form(self):
        for s in (0.1, 1.0, 30.0):
            assert prior_info(GaussianPrior(2.0), s) == pytest.approx(0.5 * math.log1p(2 * s))
            assert prior_mmse(GaussianPrior(2.0), s) == pytest.approx(2 / (1 + 2 * s))

    def test_mixture_path_matches_gaussian_when_degenerate(self):
        # a one-component mixture quadrature must reproduce the Gaussian formulas
        w, mu, v = np.array([1.0]), np.array([0.0]), np.array([1.7])
        from orthoglm.scalar_info import _prior_point_panels

        for s in (0.3, 4.0):
            i_val, m_val = _prior_point_panels(w, mu, v, s)
            assert i_val == pytest.approx(0.5 * math.log1p(1.7 * s), abs=1e-10)
            assert m_val == pytest.approx(1.7 / (1 + 1.7 * s), rel=1e-9)

    def test_rademacher_entropy_limit(self):
        assert prior_info(RademacherPrior(), 200.0) == pytest.approx(math.log(2), abs=1e-10)

    @pytest.mark.parametrize("prior", PRIORS, ids=repr)
    def test_i_mmse(self, prior):
        for s in (0.1, 1.0, 10.0):
            h = 1e-4 * s
            d = (prior_info(prior, s + h) - prior_info(prior, s - h)) / (2 * h)
            assert d == pytest.approx(0.5 * prior_mmse(prior, s), rel=1e-5)

    @pytest.mark.parametrize("prior", PRIORS, ids=repr)
    def test_monotone_and_concave(self, prior):
        s = np.linspace(0, 20, 41)
        i_vals = np.array([prior_info(prior, float(x)) for x in s])
        m_vals = np.array([prior_mmse(prior, float(x)) for x in s])
        assert np.all(np.diff(i_vals) >= -1e-12)
        assert np.all(np.diff(m_vals) <= 1e-12)
        assert np.all(np.diff(i_vals, 2) <= 1e-10)

    @pytest.mark.parametrize("prior", PRIORS[2:], ids=repr)
    def test_against_monte_carlo(self, prior):
        est, se = oracle.mc_scalar_mmse(prior, 1.5, samples=10**5, seed=4)
        assert abs(est - prior_mmse(prior, 1.5)) < 5 * se + 1e-4

    def test_small_mmse_has_relative_accuracy(self):
        # deep in the high-snr tail the MMSE is tiny and must stay positive and decreasing
        p = BernoulliGaussianPrior(0.1, 10.0)
        vals = [prior_mmse(p, s) for s in (20.0, 40.0, 80.0)]
        assert all(v > 0 for v in vals)
        assert vals[0] > vals[1] > vals[2]

    def test_negative_snr_rejected(self):
        with pytest.raises(DomainError):
            prior_info(RademacherPrior(), -0.1)

    @given(var=st.floats(0.05, 20.0), s=st.floats(0.0, 50.0))
    @settings(max_examples=50, deadline=None)
    def test_gaussian_is_the_mmse_upper_bound(self, var, s):
        # among priors of given variance the Gaussian has the largest MMSE
        p = BernoulliGaussianPrior(0.3, var / 0.3)
        assert prior_mmse(p, s) <= var / (1 + s * var) * (1 + 1e-9) + 1e-15

    def test_curve_object(self):
        c = prior_curve(RademacherPrior())
        s, i_vals, m_vals = c.table(np.array([0.0, 1.0, 2.0]))
        assert i_vals[0] == 0.0 and m_vals[0] == 1.0
        assert c.gaussian_var is None
        assert prior_curve(GaussianPrior(3.0)).gaussian_var == 3.0


class TestChannels:
    def test_second_moments(self):
        assert second_moment(LinearChannel(0.5, gain=2.0), 1.5) == pytest.approx(4 * 1.5 + 0.5)
        assert second_moment(SignChannel(0.3), 7.0) == pytest.approx(1.3)
        assert second_moment(QUANTISED, 2.0) == pytest.approx(2.0 + 1.0 + 0.5)
        with pytest.raises(DomainError):
            second_moment(SIGN, -1.0)

    def test_invalid(self):
        with pytest.raises(ValueError):
            SignChannel(0.0)
        with pytest.raises(ValueError):
            LinearChannel(1.0, gain=-1.0)
        with pytest.raises(ValueError):
            AdditiveChannel(1.0, base_variance=-0.1)

    @pytest.mark.parametrize("channel", [SIGN, QUANTISED, LinearChannel(0.4, 1.5)], ids=repr)
    def test_sampled_second_moment(self, channel):
        rng = np.random.default_rng(0)
        z = math.sqrt(1.3) * rng.standard_normal(200_000)
        x = channel.sample(z, rng)
        assert np.mean(x**2) == pytest.approx(channel.second_moment(1.3), rel=2e-2)


class TestObsCurves:
    def test_gaussian_channel_is_exact(self):
        c = obs_curve(AdditiveChannel(0.5), 2.0)
        kappa = 2.0 / (1 + 2.0 / 0.5)
        assert c.gaussian_var == pytest.approx(kappa)
        assert c.eval_I(0.0) == pytest.approx(0.5 * math.log1p(4.0))
        assert c.eval_M(3.0) == pytest.approx(kappa / (1 + 3 * kappa))

    def test_sign_channel_offset_matches_monte_carlo(self, sign_curve):
        est, se = oracle.mc_obs_info(SIGN, 1.0, samples=10**5, seed=2)
        assert abs(sign_curve.eval_I(0.0) - est) < 5 * se + 1e-3

    def test_sign_channel_mmse_matches_monte_carlo(self, sign_curve):
        est, se = oracle.mc_scalar_mmse((SIGN, 1.0), 1.0, samples=10**5, seed=3)
        assert abs(sign_curve.eval_M(1.0) - est) < 5 * se + 1e-3

    @pytest.mark.parametrize("name", ["sign_curve", "quantised_curve"])
    def test_i_mmse(self, name, request):
        c = request.getfixturevalue(name)
        for s in (0.1, 1.0, 10.0):
            h = 1e-3 * s
            d = (c.eval_I(s + h) - c.eval_I(s - h)) / (2 * h)
            assert d == pytest.approx(0.5 * c.eval_M(s), rel=1e-3)

    @pytest.mark.parametrize("name", ["sign_curve", "quantised_curve"])
    def test_shape(self, name, request):
        c = request.getfixturevalue(name)
        s = np.linspace(0, 50, 101)
        m_vals = c.eval_M(s)
        assert np.all(np.diff(m_vals) <= 1e-12)
        assert np.all(np.diff(c.eval_I(s), 2) <= 1e-9)
        # side information can only lower the MMSE of the channel input
        assert np.all(m_vals <= 1.0 / (1.0 + s) + 1e-9)

    def test_tail_continuation(self, quantised_curve):
        c = quantised_curve
        assert c.eval_M(2 * c.s_max) == pytest.approx(0.5 * c.eval_M(c.s_max))


class TestPairSurfaces:
    def test_dispatch(self):
        assert isinstance(pair_surface(AdditiveChannel(1.0), 1.0), GaussianPairSurface)
        assert isinstance(pair_surface(SIGN, 1.0), KernelPairSurface)

    def test_gaussian_pair_gradient(self):
        surf = GaussianPairSurface([[1.0, 0.7], [0.7, 1.5]])
        for s1, s2 in [(0.2, 0.4), (1.0, 3.0)]:
            h = 1e-6
            i_val, m1, m2 = surf.evaluate(s1, s2)
            d1 = (surf.eval_I(s1 + h, s2) - surf.eval_I(s1 - h, s2)) / (2 * h)
            d2 = (surf.eval_I(s1, s2 + h) - surf.eval_I(s1, s2 - h)) / (2 * h)
            assert d1 == pytest.approx(0.5 * m1, rel=1e-6)
            assert d2 == pytest.approx(0.5 * m2, rel=1e-6)

    def test_gaussian_pair_rejects_indefinite(self):
        with pytest.raises(ValueError):
            GaussianPairSurface([[1.0, 2.0], [2.0, 1.0]])

    def test_linear_gaussian_point_mass(self):
        # with every eigenvalue equal to 2 both observations see X at total snr s1 + 2 s2
        surf = LinearGaussianSurface(rmt.PointMass(2.0))
        i_val, m1, m2 = surf.evaluate(0.5, 0.25)
        assert i_val == pytest.approx(0.5 * math.log1p(1.0))
        assert m1 == pytest.approx(0.5)
        assert m2 == pytest.approx(1.0)

    def test_kernel_pair_without_output(self):
        surf = KernelPairSurface(SIGN, 1.0)
        i_val, m1, _ = surf.evaluate(1.0, 1.0)
        # with the channel output unobserved only the Gaussian input remains
        i0, mz0, _ = surf.evaluate(1.0, 0.0)
        assert i0 == pytest.approx(0.5 * math.log(2.0), abs=1e-8)
        assert mz0 == pytest.approx(0.5, abs=1e-8)
        assert i_val > i0 and m1 < mz0

    @given(s1=st.floats(0.0, 10.0), s2=st.floats(0.0, 10.0))
    @settings(max_examples=30, deadline=None)
    def test_jacobian_negative_semidefinite(self, s1, s2):
        surf = LinearGaussianSurface(rmt.MarchenkoPastur(0.5))
        assert np.linalg.eigvalsh(surf.jacobian(s1, s2))[-1] <= 1e-12
