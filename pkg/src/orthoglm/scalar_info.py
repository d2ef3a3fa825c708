"""Mutual-information and MMSE curves under additive Gaussian noise.

Everything here is per coordinate and in nats.  A scalar ``X`` observed as
``sqrt(s) X + N(0, 1)`` has information curve ``I_X(s)`` and MMSE curve
``M_X(s)`` with ``I_X' = M_X / 2``.

Priors and channels are described by small frozen dataclasses.  Non-Gaussian
priors are Gaussian mixtures (atoms are zero-variance components), so the
posterior given the noisy observation is again a mixture and every quantity
reduces to a one-dimensional Gauss-Hermite integral.  Channel curves add an
outer integral over the noisy observation of the channel input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator
from scipy.special import log_ndtr, logsumexp, ndtr

from . import quadrature as quad
from .errors import DomainError

__all__ = [
    "GaussianPrior",
    "RademacherPrior",
    "BernoulliGaussianPrior",
    "DiscretePrior",
    "AdditiveChannel",
    "SignChannel",
    "LinearChannel",
    "InfoCurve",
    "BivariateInfoSurface",
    "GaussianPairSurface",
    "LinearGaussianSurface",
    "KernelPairSurface",
    "prior_mmse",
    "prior_info",
    "prior_curve",
    "gaussian_curve",
    "obs_curve",
    "pair_surface",
    "second_moment",
]

QUAD_TOL = 1e-10
OBS_TOL = 1e-7
INNER_ORDER = 256
DEFAULT_S_MAX = 1e3
DEFAULT_GRID = 200
_S0 = 1e-3  # lower end of the log-spaced snr grid


# -- priors ----------------------------------------------------------------


class Prior:
    """Scalar prior represented as a Gaussian mixture ``sum w_k N(mu_k, v_k)``."""

    def components(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        raise NotImplementedError

    @property
    def mean(self) -> float:
        w, mu, _ = self.components()
        return float(np.dot(w, mu))

    @property
    def second_moment(self) -> float:
        w, mu, v = self.components()
        return float(np.dot(w, mu**2 + v))

    @property
    def variance(self) -> float:
        return self.second_moment - self.mean**2

    @property
    def is_gaussian(self) -> bool:
        return False

    @property
    def entropy(self) -> float:
        """Shannon entropy for purely discrete priors, ``inf`` otherwise."""
        w, _, v = self.components()
        if np.any(v > 0):
            return math.inf
        return float(-np.dot(w, np.log(w)))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        w, mu, v = self.components()
        k = rng.choice(w.size, size=n, p=w)
        return mu[k] + np.sqrt(v[k]) * rng.standard_normal(n)


@dataclass(frozen=True)
class GaussianPrior(Prior):
    variance_: float = 1.0

    def __post_init__(self):
        if not self.variance_ > 0:
            raise ValueError("Gaussian prior needs variance > 0")

    def components(self):
        return np.array([1.0]), np.array([0.0]), np.array([float(self.variance_)])

    @property
    def is_gaussian(self):
        return True


@dataclass(frozen=True)
class RademacherPrior(Prior):
    def components(self):
        return np.array([0.5, 0.5]), np.array([-1.0, 1.0]), np.zeros(2)


@dataclass(frozen=True)
class BernoulliGaussianPrior(Prior):
    """``X = 0`` with probability ``1 - rho``, otherwise ``N(0, variance)``."""

    rho: float
    variance_: float = 1.0

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ValueError("Bernoulli-Gaussian prior needs rho in (0, 1)")
        if not self.variance_ > 0:
            raise ValueError("Bernoulli-Gaussian prior needs variance > 0")

    def components(self):
        return (
            np.array([1.0 - self.rho, self.rho]),
            np.zeros(2),
            np.array([0.0, float(self.variance_)]),
        )


@dataclass(frozen=True)
class DiscretePrior(Prior):
    """Finite prior given as ``((value, weight), ...)``."""

    atoms: tuple

    def __post_init__(self):
        atoms = tuple((float(a), float(p)) for a, p in self.atoms)
        if len(atoms) < 2:
            raise ValueError("Discrete prior needs at least two atoms")
        w = np.array([p for _, p in atoms])
        if np.any(w <= 0):
            raise ValueError("Discrete prior weights must be strictly positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"Discrete prior weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "atoms", atoms)

    def components(self):
        a = np.array(self.atoms)
        return a[:, 1].copy(), a[:, 0].copy(), np.zeros(len(self.atoms))


def _check_snr(s):
    if not s >= 0:
        raise DomainError(f"snr must be >= 0, got {s}")


@lru_cache(maxsize=200_000)
def _prior_point(prior: Prior, s: float) -> tuple[float, float]:
    """(I, M) for a mixture prior at snr ``s``.

    Integrates over the observation with composite Gauss-Legendre panels.
    Gauss-Hermite about each component converges poorly once the posterior
    responsibilities switch sharply (discrete or sparse priors at high snr),
    and only to absolute accuracy, while tiny MMSE values need relative accuracy.
    """
    if s == 0.0:
        return 0.0, prior.variance
    w, mu, v = prior.components()
    i_val, m_val = _prior_point_panels(w, mu, v, s)
    return float(max(i_val, 0.0)), float(max(m_val, 0.0))


_PANEL_RULE = np.polynomial.legendre.leggauss(16)


def _prior_point_panels(w, mu, v, s, tol=1e-11, max_panels=1 << 14):
    """Composite Gauss-Legendre over the observation, halving every panel until converged.

    The initial panels are laid out on each component's own scale, so narrow
    and wide components (sparse priors at high snr) are both resolved.
    """
    rs = math.sqrt(s)
    logw = np.log(w)
    y_mean = rs * mu
    y_var = 1.0 + s * v
    post_var = v / y_var
    sd = np.sqrt(y_var)
    edges = np.unique(np.concatenate([np.linspace(m - 12.0 * d, m + 12.0 * d, 33) for m, d in zip(y_mean, sd)]))
    x, xw = _PANEL_RULE

    def estimate(edges):
        width = 0.5 * np.diff(edges)
        y = ((edges[:-1] + width)[:, None] + width[:, None] * x[None, :]).ravel()
        yw = (width[:, None] * xw[None, :]).ravel()
        lj = logw + quad.normal_logpdf(y[:, None], y_mean, y_var)
        top = lj.max(axis=1)
        logp = top + np.log(np.exp(lj - top[:, None]).sum(axis=1))
        resp = np.exp(lj - logp[:, None])
        pm = mu + rs * v * (y[:, None] - y_mean) / y_var
        ex = np.sum(resp * pm, axis=1)
        var = np.sum(resp * (post_var + (pm - ex[:, None]) ** 2), axis=1)
        p = np.exp(logp)
        return np.array([-np.dot(yw, p * logp), np.dot(yw, p * var)])

    prev = estimate(edges)
    while edges.size - 1 < max_panels:
        mid = 0.5 * (edges[:-1] + edges[1:])
        edges = np.sort(np.concatenate([edges, mid]))
        cur = estimate(edges)
        # absolute accuracy on I, relative accuracy on the (possibly tiny) MMSE down to 1e-30
        done = abs(cur[0] - prev[0]) <= tol and abs(cur[1] - prev[1]) <= 1e-9 * abs(cur[1]) + 1e-39
        prev = cur
        if done:
            break
    return prev[0] - quad.GAUSS_ENTROPY, prev[1]


def prior_mmse(prior: Prior, s: float) -> float:
    """``E[Var(X | sqrt(s) X + N(0, 1))]``."""
    _check_snr(s)
    if isinstance(prior, GaussianPrior):
        return prior.variance_ / (1.0 + s * prior.variance_)
    return _prior_point(prior, float(s))[1]


def prior_info(prior: Prior, s: float) -> float:
    """``I(X; sqrt(s) X + N(0, 1))`` in nats."""
    _check_snr(s)
    if isinstance(prior, GaussianPrior):
        return 0.5 * math.log1p(s * prior.variance_)
    return _prior_point(prior, float(s))[0]


# -- channels --------------------------------------------------------------


class Channel:
    """Separable channel ``X = kernel(Z) + N(0, eps)`` acting on ``Z ~ N(0, tau2)``."""

    eps: float

    def _check_eps(self):
        if not self.eps > 0:
            raise ValueError("channel smoothing variance eps must be > 0")

    @property
    def is_gaussian(self) -> bool:
        return False

    def gaussian_form(self) -> tuple[float, float]:
        """``(gain, noise_var)`` with ``X = gain * Z + N(0, noise_var)``."""
        raise TypeError(f"{type(self).__name__} is not a Gaussian channel")

    def output_mean(self, tau2: float) -> float:
        return 0.0

    def second_moment(self, tau2: float) -> float:
        raise NotImplementedError

    def output_variance(self, tau2: float) -> float:
        return self.second_moment(tau2) - self.output_mean(tau2) ** 2

    def components(self, m, c):
        """Mixture description of ``(Z, X)`` when ``Z ~ N(m, c)``.

        Returns ``(weight, x_mean, x_var, z_mean, z_var, zx_cov)``, each with a
        trailing component axis; within a component ``(Z, X)`` is Gaussian or
        ``Z`` is independent of ``X``.
        """
        raise NotImplementedError

    def outer_rule(self, n):
        return quad.hermite_rule(n)

    def noise_entropy(self) -> float:
        """``h(X | Z)``."""
        return 0.5 * (quad.LOG_2PI + 1.0 + math.log(self.eps))

    def sample(self, z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def log_likelihood(self, x, z):
        """``log p(x | z)`` broadcast over arrays."""
        raise NotImplementedError


@dataclass(frozen=True)
class AdditiveChannel(Channel):
    """``X = Z + D + N(0, base_variance + eps)`` with ``D`` discrete (or absent)."""

    eps: float
    atoms: tuple | None = None
    base_variance: float = 0.0

    def __post_init__(self):
        self._check_eps()
        if self.base_variance < 0:
            raise ValueError("base_variance must be >= 0")
        if self.atoms is not None:
            object.__setattr__(self, "atoms", DiscretePrior(self.atoms).atoms)

    @property
    def noise_var(self):
        return self.eps + self.base_variance

    @property
    def is_gaussian(self):
        return self.atoms is None

    def gaussian_form(self):
        if not self.is_gaussian:
            return super().gaussian_form()
        return 1.0, self.noise_var

    def _base(self):
        if self.atoms is None:
            return np.array([1.0]), np.array([0.0])
        a = np.array(self.atoms)
        return a[:, 1], a[:, 0]

    def output_mean(self, tau2):
        w, d = self._base()
        return float(np.dot(w, d))

    def second_moment(self, tau2):
        w, d = self._base()
        return tau2 + float(np.dot(w, d**2)) + self.noise_var

    def components(self, m, c):
        w, d = self._base()
        m = np.asarray(m, float)[..., None]
        c = np.broadcast_to(np.asarray(c, float)[..., None], m.shape)
        shape = np.broadcast_shapes(m.shape, w.shape)
        cb = np.broadcast_to(c, shape)
        return (
            np.broadcast_to(w, shape),
            m + d,
            cb + self.noise_var,
            np.broadcast_to(m, shape),
            cb,
            cb,
        )

    def noise_entropy(self):
        w, d = self._base()
        return quad.mixture_entropy(w, d, np.full(w.size, self.noise_var), order=256)

    def sample(self, z, rng):
        w, d = self._base()
        k = rng.choice(w.size, size=np.shape(z), p=w)
        return z + d[k] + math.sqrt(self.noise_var) * rng.standard_normal(np.shape(z))

    def log_likelihood(self, x, z):
        w, d = self._base()
        r = np.asarray(x - z)[..., None]
        return logsumexp(np.log(w) + quad.normal_logpdf(r, d, self.noise_var), axis=-1)


@dataclass(frozen=True)
class SignChannel(Channel):
    """``X = sign(Z) + N(0, eps)``."""

    eps: float

    def __post_init__(self):
        self._check_eps()

    def second_moment(self, tau2):
        return 1.0 + self.eps

    def outer_rule(self, n):
        return quad.split_legendre_rule(n)

    def components(self, m, c):
        m = np.asarray(m, float)
        c = np.broadcast_to(np.asarray(c, float), m.shape)
        sc = np.sqrt(c)
        a = m / sc
        log_pp, log_pm = log_ndtr(a), log_ndtr(-a)
        logphi = -0.5 * (a * a + quad.LOG_2PI)
        lam_p = np.exp(logphi - log_pp)  # phi(a) / Phi(a)
        lam_m = np.exp(logphi - log_pm)  # phi(a) / Phi(-a)
        zmean = np.stack([m + sc * lam_p, m - sc * lam_m], axis=-1)
        zvar = np.stack([c * (1.0 - a * lam_p - lam_p**2), c * (1.0 + a * lam_m - lam_m**2)], axis=-1)
        zvar = np.maximum(zvar, 0.0)
        weight = np.stack([ndtr(a), ndtr(-a)], axis=-1)
        shape = weight.shape
        return (
            weight,
            np.broadcast_to(np.array([1.0, -1.0]), shape),
            np.full(shape, self.eps),
            zmean,
            zvar,
            np.zeros(shape),
        )

    def sample(self, z, rng):
        return np.where(z >= 0, 1.0, -1.0) + math.sqrt(self.eps) * rng.standard_normal(np.shape(z))

    def log_likelihood(self, x, z):
        return quad.normal_logpdf(x, np.where(z >= 0, 1.0, -1.0), self.eps)


@dataclass(frozen=True)
class LinearChannel(Channel):
    """``X = gain * Z + N(0, eps)``."""

    eps: float
    gain: float = 1.0

    def __post_init__(self):
        self._check_eps()
        if self.gain < 0:
            raise ValueError("gain must be >= 0")

    @property
    def is_gaussian(self):
        return True

    def gaussian_form(self):
        return float(self.gain), float(self.eps)

    def second_moment(self, tau2):
        return self.gain**2 * tau2 + self.eps

    def components(self, m, c):
        m = np.asarray(m, float)[..., None]
        c = np.broadcast_to(np.asarray(c, float)[..., None], m.shape)
        g = self.gain
        return np.ones(m.shape), g * m, g * g * c + self.eps, m, c, g * c

    def sample(self, z, rng):
        return self.gain * z + math.sqrt(self.eps) * rng.standard_normal(np.shape(z))

    def log_likelihood(self, x, z):
        return quad.normal_logpdf(x, self.gain * z, self.eps)


def second_moment(channel: Channel, tau2: float) -> float:
    """``E[X^2]`` for ``Z ~ N(0, tau2)`` pushed through ``channel``."""
    if not tau2 >= 0:
        raise DomainError(f"tau2 must be >= 0, got {tau2}")
    return float(channel.second_moment(tau2))


# -- one-dimensional curves ------------------------------------------------


class InfoCurve:
    """A concave information curve ``I(s)`` with its MMSE curve ``M(s)``.

    ``gaussian_var`` is set when the curve is that of a Gaussian of that
    variance (shifted by ``offset_I0``), enabling closed-form transforms.
    """

    def __init__(self, eval_I, eval_M, M0, offset_I0=0.0, s_max=DEFAULT_S_MAX, gaussian_var=None, label=""):
        self._I = eval_I
        self._M = eval_M
        self.M0 = float(M0)
        self.offset_I0 = float(offset_I0)
        self.s_max = float(s_max)
        self.gaussian_var = gaussian_var
        self.label = label

    def __repr__(self):
        return f"InfoCurve({self.label or 'anonymous'}, M0={self.M0:.6g}, I0={self.offset_I0:.6g})"

    def eval_I(self, s):
        _check_snr(np.min(s))
        if np.ndim(s):
            return np.array([self._I(float(x)) for x in np.ravel(s)]).reshape(np.shape(s))
        return float(self._I(float(s)))

    def eval_M(self, s):
        _check_snr(np.min(s))
        if np.ndim(s):
            return np.array([self._M(float(x)) for x in np.ravel(s)]).reshape(np.shape(s))
        return float(self._M(float(s)))

    def table(self, grid=None):
        """``(s, I, M)`` columns on ``grid`` (default: 0 plus the log grid)."""
        if grid is None:
            grid = snr_grid(self.s_max)
        grid = np.asarray(grid, float)
        return grid, self.eval_I(grid), self.eval_M(grid)


def snr_grid(s_max=DEFAULT_S_MAX, n=DEFAULT_GRID):
    return np.concatenate([[0.0], np.logspace(math.log10(_S0), math.log10(s_max), n)])


def gaussian_curve(var: float, offset: float = 0.0, label: str = "") -> InfoCurve:
    """Curve of a Gaussian with variance ``var``, optionally shifted by ``offset`` nats."""
    return InfoCurve(
        lambda s: offset + 0.5 * math.log1p(s * var),
        lambda s: var / (1.0 + s * var),
        M0=var,
        offset_I0=offset,
        gaussian_var=float(var),
        label=label or f"gaussian({var:g})",
    )


def prior_curve(prior: Prior) -> InfoCurve:
    """Curve of a prior, evaluated directly by quadrature (no tabulation)."""
    if isinstance(prior, GaussianPrior):
        return gaussian_curve(prior.variance_, label=repr(prior))
    return InfoCurve(
        lambda s: prior_info(prior, s),
        lambda s: prior_mmse(prior, s),
        M0=prior.variance,
        label=repr(prior),
    )


def _posterior_terms(channel: Channel, tau2: float, s: float, gain: float, noise: float, order: int):
    """Quadrature for ``Z ~ N(0, tau2)``, ``Oz = sqrt(s) Z + N``, ``O = gain X + sqrt(noise) N'``.

    Returns ``(h(O | Oz), mmse(Z | Oz, O), mmse(X | Oz, O))``.
    """
    g0, w0 = channel.outer_rule(order)
    denom = 1.0 + s * tau2
    m = math.sqrt(s) * tau2 * g0 / math.sqrt(denom)
    c = np.full_like(g0, tau2 / denom)
    w, xm, xv, zm, zv, zx = channel.components(m, c)  # (n0, K)
    mo = gain * xm
    vo = gain * gain * xv + noise
    gi, wi = quad.hermite_rule(min(order, INNER_ORDER))
    o = mo[..., None] + np.sqrt(vo)[..., None] * gi  # (n0, K, ni)
    with np.errstate(divide="ignore"):
        logw = np.log(w)
    lj = logw[:, None, None, :] + quad.normal_logpdf(o[..., None], mo[:, None, None, :], vo[:, None, None, :])
    logp = logsumexp(lj, axis=-1)
    resp = np.exp(lj - logp[..., None])  # (n0, K, ni, J)
    resid = (o[..., None] - mo[:, None, None, :]) / vo[:, None, None, :]

    ez = zm[:, None, None, :] + gain * zx[:, None, None, :] * resid
    vz = zv - gain * gain * zx**2 / vo
    Ez = np.sum(resp * ez, axis=-1)
    Vz = np.sum(resp * (vz[:, None, None, :] + (ez - Ez[..., None]) ** 2), axis=-1)

    ex = xm[:, None, None, :] + gain * xv[:, None, None, :] * resid
    vx = xv - gain * gain * xv**2 / vo
    Ex = np.sum(resp * ex, axis=-1)
    Vx = np.sum(resp * (vx[:, None, None, :] + (ex - Ex[..., None]) ** 2), axis=-1)

    weight = w0[:, None, None] * w[:, :, None] * wi[None, None, :]
    h = -np.sum(weight * logp)
    return h, float(np.sum(weight * Vz)), float(np.sum(weight * Vx))


def _obs_point(channel: Channel, tau2: float, s: float, h_cond: float) -> tuple[float, float]:
    """``(I(Z; Y, Oz), mmse(Z | Y, Oz))`` by adaptive nested quadrature."""

    def estimate(order):
        h, mz, _ = _posterior_terms(channel, tau2, s, 1.0, 0.0, order)
        return 0.5 * math.log1p(s * tau2) + h - h_cond, mz

    i_val, m_val = quad.adaptive(estimate, OBS_TOL, start=32, what=f"observation quadrature at s={s:g}")
    return float(i_val), float(m_val)


def _check_tau2(tau2):
    if not tau2 > 0:
        raise DomainError(f"input variance tau2 must be > 0, got {tau2}")


@lru_cache(maxsize=256)
def obs_curve(channel: Channel, tau2: float, s_max: float = DEFAULT_S_MAX, n_grid: int = DEFAULT_GRID) -> InfoCurve:
    """``I_{Z tri Y}(s) = I(Z; Y, sqrt(s) Z + N)`` and ``M_{Z|Y}(s)`` for ``Z ~ N(0, tau2)``.

    Gaussian channels are exact.  Other kernels are tabulated on ``0`` plus a
    log-spaced grid on ``[1e-3, s_max]``: ``M`` is interpolated monotonically
    (PCHIP in ``x = log(1 + s/1e-3)``), ``I`` by cubic Hermite interpolation
    using ``dI/ds = M/2`` at the nodes, and beyond ``s_max`` the MMSE is
    continued as ``c/s``.
    """
    _check_tau2(tau2)
    if channel.is_gaussian:
        gain, noise = channel.gaussian_form()
        a = gain * gain / noise
        kappa = tau2 / (1.0 + a * tau2)
        return gaussian_curve(kappa, 0.5 * math.log1p(a * tau2), label=f"obs[{channel!r}, tau2={tau2:g}]")

    h_cond = channel.noise_entropy()
    s = snr_grid(s_max, n_grid)
    vals = np.array([_obs_point(channel, tau2, float(x), h_cond) for x in s])
    return _tabulated_curve(s, vals[:, 0], vals[:, 1], label=f"obs[{channel!r}, tau2={tau2:g}]")


def _tabulated_curve(s, i_vals, m_vals, label=""):
    # enforce the shape constraints that rounding could break
    m_vals = np.minimum.accumulate(np.maximum(m_vals, 0.0))
    i_vals = np.maximum.accumulate(i_vals)
    x = np.log1p(s / _S0)
    dsdx = s + _S0
    m_spline = PchipInterpolator(x, m_vals)
    i_spline = CubicHermiteSpline(x, i_vals, 0.5 * m_vals * dsdx)
    s_max = float(s[-1])
    m_last, i_last = float(m_vals[-1]), float(i_vals[-1])

    def eval_M(v):
        if v > s_max:
            return m_last * s_max / v
        return float(m_spline(math.log1p(v / _S0)))

    def eval_I(v):
        if v > s_max:
            return i_last + 0.5 * m_last * s_max * math.log(v / s_max)
        return float(i_spline(math.log1p(v / _S0)))

    curve = InfoCurve(eval_I, eval_M, M0=m_vals[0], offset_I0=i_vals[0], s_max=s_max, label=label)
    curve.nodes = (np.asarray(s), np.asarray(i_vals), np.asarray(m_vals))
    return curve


# -- bivariate surfaces ----------------------------------------------------


class BivariateInfoSurface:
    """``I(s1, s2)`` for a pair observed through independent Gaussian noise.

    ``evaluate`` returns ``(I, M1, M2)`` where ``M_i`` is the MMSE of the
    ``i``-th member, so the gradient of ``I`` is ``(M1, M2) / 2``.
    """

    names = ("first", "second")

    def evaluate(self, s1: float, s2: float) -> tuple[float, float, float]:
        raise NotImplementedError

    def eval_I(self, s1, s2):
        return self.evaluate(s1, s2)[0]

    def eval_M(self, s1, s2):
        return self.evaluate(s1, s2)[1:]

    @property
    def M0(self):
        return self.evaluate(0.0, 0.0)[1:]

    def jacobian(self, s1, s2):
        """``dM/ds`` by central differences (symmetric, negative semidefinite)."""
        out = np.empty((2, 2))
        s = np.array([s1, s2], float)
        for j in range(2):
            h = 1e-5 * (1.0 + s[j])
            lo = s.copy()
            hi = s.copy()
            hi[j] += h
            lo[j] = max(0.0, s[j] - h)
            out[:, j] = (np.array(self.eval_M(*hi)) - np.array(self.eval_M(*lo))) / (hi[j] - lo[j])
        return 0.5 * (out + out.T)


class GaussianPairSurface(BivariateInfoSurface):
    """Jointly Gaussian pair with 2x2 covariance ``cov``."""

    def __init__(self, cov, names=("first", "second")):
        cov = np.asarray(cov, float)
        if cov.shape != (2, 2) or not np.allclose(cov, cov.T):
            raise ValueError("cov must be a symmetric 2x2 matrix")
        if np.linalg.eigvalsh(cov)[0] <= 0:
            raise ValueError("cov must be positive definite")
        self.cov = cov
        self.prec = np.linalg.inv(cov)
        self.names = names

    def _post(self, s1, s2):
        p = self.prec + np.diag([s1, s2])
        det = p[0, 0] * p[1, 1] - p[0, 1] ** 2
        return np.array([[p[1, 1], -p[0, 1]], [-p[0, 1], p[0, 0]]]) / det

    def evaluate(self, s1, s2):
        c = self.cov
        det = 1.0 + s1 * c[0, 0] + s2 * c[1, 1] + s1 * s2 * (c[0, 0] * c[1, 1] - c[0, 1] ** 2)
        q = self._post(s1, s2)
        return 0.5 * math.log(det), q[0, 0], q[1, 1]

    def jacobian(self, s1, s2):
        q = self._post(s1, s2)
        return -(q**2)

    def dual(self, u: float, v: float) -> tuple[float, np.ndarray]:
        """Closed-form Legendre dual and maximiser.

        On the interior the posterior precision ``P = cov^{-1} + diag(s)``
        must have inverse diagonal ``(u, v)``; with ``c`` the fixed
        off-diagonal entry this gives ``det P = (1 + sqrt(1 + 4 u v c^2)) / (2 u v)``.
        Faces with a zero snr reduce to the scalar Gaussian dual.
        """
        c = self.prec[0, 1]
        det = (1.0 + math.sqrt(1.0 + 4.0 * u * v * c * c)) / (2.0 * u * v)
        cands = [np.array([v * det - self.prec[0, 0], u * det - self.prec[1, 1]])]
        cands.append(np.array([max(1.0 / u - 1.0 / self.cov[0, 0], 0.0), 0.0]))
        cands.append(np.array([0.0, max(1.0 / v - 1.0 / self.cov[1, 1], 0.0)]))
        best = None
        for s in cands:
            if np.any(s < 0):
                continue
            val = self.evaluate(s[0], s[1])[0] - 0.5 * (u * s[0] + v * s[1])
            if best is None or val > best[0]:
                best = (val, s)
        return best


class LinearGaussianSurface(BivariateInfoSurface):
    """``(X, Z = A X)`` with ``X ~ N(0, sigma2 I)`` and ``A^T A`` following ``law``.

    Normalised per coordinate of ``X``.  ``s1`` observes ``X``, ``s2`` observes ``Z``.
    """

    names = ("X", "Z")

    def __init__(self, law, sigma2: float = 1.0):
        self.law = law
        self.sigma2 = float(sigma2)
        self._nodes, self._weights = law.quadrature()

    def evaluate(self, s1, s2):
        lam, w = self._nodes, self._weights
        d = 1.0 / self.sigma2 + s1 + s2 * lam
        i_val = 0.5 * np.dot(w, np.log1p(self.sigma2 * (s1 + s2 * lam)))
        return float(i_val), float(np.dot(w, 1.0 / d)), float(np.dot(w, lam / d))

    def jacobian(self, s1, s2):
        lam, w = self._nodes, self._weights
        d2 = (1.0 / self.sigma2 + s1 + s2 * lam) ** 2
        a, b, c = np.dot(w, 1.0 / d2), np.dot(w, lam / d2), np.dot(w, lam**2 / d2)
        return -np.array([[a, b], [b, c]])


class KernelPairSurface(BivariateInfoSurface):
    """``(Z, X)`` with ``Z ~ N(0, tau2)`` and ``X`` the output of a non-Gaussian channel."""

    names = ("Z", "X")

    def __init__(self, channel: Channel, tau2: float, s_max: float = DEFAULT_S_MAX):
        self.channel = channel
        self.tau2 = float(tau2)
        self.s_max = s_max

    def evaluate(self, s1, s2):
        if s1 < 0 or s2 < 0:
            raise DomainError("snr values must be >= 0")
        return _kernel_pair_point(self.channel, self.tau2, float(s1), float(s2))


@lru_cache(maxsize=100_000)
def _kernel_pair_point(channel, tau2, s_z, s_x):
    def estimate(order):
        h, mz, mx = _posterior_terms(channel, tau2, s_z, math.sqrt(s_x), 1.0, order)
        return 0.5 * math.log1p(s_z * tau2) + h - quad.GAUSS_ENTROPY, mz, mx

    vals = quad.adaptive(estimate, QUAD_TOL, what=f"pair quadrature at ({s_z:g}, {s_x:g})")
    return float(vals[0]), float(vals[1]), float(vals[2])


def gaussian_pair_cov(channel: Channel, tau2: float) -> np.ndarray:
    gain, noise = channel.gaussian_form()
    return np.array([[tau2, gain * tau2], [gain * tau2, gain * gain * tau2 + noise]])


def pair_surface(channel: Channel, tau2: float, s_max: float = DEFAULT_S_MAX) -> BivariateInfoSurface:
    """Surface of the channel input-output pair ``(Z, X)`` with ``Z ~ N(0, tau2)``."""
    _check_tau2(tau2)
    if channel.is_gaussian:
        return GaussianPairSurface(gaussian_pair_cov(channel, tau2), names=("Z", "X"))
    return KernelPairSurface(channel, tau2, s_max)
