import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from orthoglm import rmt
from orthoglm.errors import DomainError
from orthoglm.legendre import (
    DualCurve,
    gaussian_istar,
    inverse_mmse,
    is_concave,
    legendre_1d,
    legendre_2d,
    recover_info,
    side_information_gap,
    tail_information_gap,
)
from orthoglm.scalar_info import (
    BernoulliGaussianPrior,
    BivariateInfoSurface,
    GaussianPairSurface,
    GaussianPrior,
    LinearGaussianSurface,
    RademacherPrior,
    gaussian_curve,
    prior_curve,
)

RADEMACHER = prior_curve(RademacherPrior())
SPARSE = prior_curve(BernoulliGaussianPrior(0.2, 5.0))
GAUSS = prior_curve(GaussianPrior(1.0))


class TestOneDimensional:
    @pytest.mark.parametrize("curve", [GAUSS, RADEMACHER, SPARSE], ids=repr)
    def test_vanishes_at_prior_variance(self, curve):
        assert legendre_1d(curve, curve.M0) == pytest.approx(0.0, abs=1e-8)

    def test_gaussian_closed_form(self):
        for u in (0.05, 0.4, 0.9):
            assert legendre_1d(GAUSS, u) == pytest.approx(0.5 * (-math.log(u) + u - 1), abs=1e-14)

    @pytest.mark.parametrize("curve", [RADEMACHER, SPARSE], ids=repr)
    def test_inverse_mmse_round_trip(self, curve):
        for s in (0.05, 1.0, 12.0):
            assert inverse_mmse(curve, curve.eval_M(s)) == pytest.approx(s, rel=1e-7)

    @pytest.mark.parametrize("curve", [GAUSS, RADEMACHER, SPARSE], ids=repr)
    def test_double_transform(self, curve):
        for s in (0.1, 1.0, 10.0):
            assert recover_info(curve, s) == pytest.approx(curve.eval_I(s), abs=1e-6)

    def test_rademacher_entropy_limit(self):
        assert legendre_1d(RADEMACHER, 1e-3) == pytest.approx(math.log(2), abs=1e-2)

    @pytest.mark.parametrize("curve", [GAUSS, RADEMACHER, SPARSE], ids=repr)
    def test_convex_and_decreasing(self, curve):
        u = np.linspace(0.02, 1.0, 50) * curve.M0
        vals = np.array([legendre_1d(curve, float(x)) for x in u])
        assert np.all(np.diff(vals) <= 1e-12)
        assert is_concave(-vals, tol=1e-9)

    @given(r=st.floats(0.02, 0.98))
    @settings(max_examples=40, deadline=None)
    def test_derivative_is_minus_half_gamma(self, r):
        dual = DualCurve.build(RADEMACHER, n=5)
        u = r * RADEMACHER.M0
        h = 1e-6 * u
        fd = (dual(u + h) - dual(u - h)) / (2 * h)
        assert fd == pytest.approx(dual.derivative(u), rel=1e-4, abs=1e-8)

    @given(s=st.floats(0.0, 30.0), r=st.floats(0.01, 1.0))
    @settings(max_examples=60, deadline=None)
    def test_fenchel_young(self, s, r):
        # I(s) <= I*(u) + u s / 2 for every pair, with equality at s = Gamma(u)
        u = r * SPARSE.M0
        assert SPARSE.eval_I(s) <= legendre_1d(SPARSE, u) + 0.5 * u * s + 1e-9

    def test_domain(self):
        with pytest.raises(DomainError):
            legendre_1d(RADEMACHER, 0.0)
        with pytest.raises(DomainError):
            legendre_1d(RADEMACHER, 1.5)
        assert legendre_1d(RADEMACHER, 1.5, allow_flat=True) == 0.0
        assert gaussian_istar(1.0, 2.0) == 0.0


class TestGaps:
    def test_side_information_gap_gaussian(self):
        # X ~ N(0, 1) with side information of precision 1: conditional variance 1/2,
        # and the gap is the dual of the pair curve I(X; Y) + I_{X|Y} minus the prior dual
        prior, cond = gaussian_curve(1.0), gaussian_curve(0.5)
        for u in (0.1, 0.3, 0.5, 0.8):
            expect = 0.5 * math.log(2) + legendre_1d(cond, u, allow_flat=True) - legendre_1d(prior, u)
            assert side_information_gap(prior, cond, u) == pytest.approx(expect, abs=1e-9)

    def test_tail_gap_gaussian(self):
        prior, cond = gaussian_curve(1.0), gaussian_curve(0.5)
        s = 2.0
        expect = 0.5 * math.log1p(s) - 0.5 * math.log1p(0.5 * s)
        assert tail_information_gap(prior, cond, s) == pytest.approx(math.log(2) / 2 - expect, abs=1e-6)


class FiniteDifferenceSurface(BivariateInfoSurface):
    """Wraps a surface, hiding any closed-form dual so the generic maximiser runs."""

    def __init__(self, inner):
        self.inner = inner

    def evaluate(self, s1, s2):
        return self.inner.evaluate(s1, s2)


def interior_pairs(law, ratios, fractions):
    """``(u, v)`` pairs whose maximiser lies in the open quadrant, for a unit Gaussian input.

    With ``tau = s2 / (1 + s1)`` the ratio ``v / u`` fixes ``tau``, and ``s1 >= 0``
    holds exactly when ``u <= E[1 / (1 + tau lam)]``.
    """
    lam, w = law.quadrature()

    def ratio(tau):
        d = 1.0 + tau * lam
        return np.dot(w, lam / d) / np.dot(w, 1.0 / d)

    pairs = []
    for r in ratios:
        target = r * law.mean
        tau = brentq(lambda t: ratio(t) - target, 0.0, 1e8)
        u_max = float(np.dot(w, 1.0 / (1.0 + tau * lam)))
        pairs += [(f * u_max, f * u_max * target) for f in fractions]
    return pairs


class TestTwoDimensional:
    @pytest.mark.parametrize("lam", [0.5, 2.0])
    def test_gaussian_pair_closed_form_against_numeric(self, lam):
        cov = [[1.0, math.sqrt(lam)], [math.sqrt(lam), 1.0 + lam]]
        closed = GaussianPairSurface(cov)
        numeric = FiniteDifferenceSurface(closed)
        for u in (0.2, 0.6):
            for v in (0.3, 1.0):
                assert legendre_2d(closed, u, v) == pytest.approx(legendre_2d(numeric, u, v), abs=1e-8)

    def test_separable_surface(self):
        # independent coordinates: the dual splits into two scalar duals
        surf = GaussianPairSurface([[1.0, 0.0], [0.0, 2.0]])
        for u, v in [(0.3, 0.5), (0.9, 1.9)]:
            expect = gaussian_istar(1.0, u) + gaussian_istar(2.0, v)
            assert legendre_2d(surf, u, v) == pytest.approx(expect, abs=1e-12)

    @pytest.mark.parametrize("law", [rmt.MarchenkoPastur(0.5), rmt.Bernoulli(0.3)], ids=repr)
    def test_linear_surface_additivity(self, law):
        surf = LinearGaussianSurface(law)
        for u, v in interior_pairs(law, (0.2, 0.7), (0.3, 0.9)):
            val = legendre_2d(surf, u, v) - gaussian_istar(1.0, u)
            assert val == pytest.approx(rmt.j_star(law, v / u), abs=1e-6)

    def test_argmax_is_stationary(self):
        surf = LinearGaussianSurface(rmt.Bernoulli(0.5))
        val, s = legendre_2d(surf, 0.5, 0.2, return_argmax=True)
        _, m1, m2 = surf.evaluate(*s)
        for m, target, si in ((m1, 0.5, s[0]), (m2, 0.2, s[1])):
            if si > 0:
                assert m == pytest.approx(target, abs=1e-8)
            else:
                assert m <= target + 1e-10

    def test_domain(self):
        with pytest.raises(DomainError):
            legendre_2d(GaussianPairSurface([[1.0, 0.0], [0.0, 1.0]]), 0.0, 0.5)
