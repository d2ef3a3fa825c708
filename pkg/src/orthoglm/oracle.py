"""Ground truth at finite size: exact Gaussian networks and Monte Carlo scalars.

Nothing here reuses the quadrature code of :mod:`scalar_info`; the estimators
are deliberately written from scratch so they can serve as independent checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg, optimize
from scipy.special import logsumexp

from . import rmt
from .errors import SpecError
from .network import TreeNetwork
from .scalar_info import Channel, GaussianPrior, Prior

__all__ = [
    "MatrixInstance",
    "GaussianOracleResult",
    "haar_orthogonal",
    "sample_matrix",
    "network_dimensions",
    "gaussian_exact",
    "mc_scalar_mmse",
    "mc_obs_info",
    "se_linear_fixed_points",
]


@dataclass(frozen=True)
class MatrixInstance:
    """``A = U S V^T`` with Haar ``U`` (M x M) and ``V`` (N x N)."""

    A: np.ndarray
    U: np.ndarray
    V: np.ndarray
    sq_singular: np.ndarray  # min(M, N) squared singular values, descending


def haar_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar orthogonal matrix: QR of a Gaussian matrix with the sign of diag(R) fixed."""
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def sample_matrix(law: rmt.SpectralLaw, M: int, N: int, seed=None, mode: str = "quantile") -> MatrixInstance:
    """Orthogonally invariant ``M x N`` matrix whose ``A^T A`` follows ``law``.

    The ``min(M, N)`` largest of ``N`` spectral samples become the squared
    singular values; ``mode`` selects quantile (deterministic) or iid samples.
    """
    if M < 1 or N < 1:
        raise ValueError("matrix dimensions must be >= 1")
    if mode not in ("quantile", "iid"):
        raise ValueError("mode must be 'quantile' or 'iid'")
    rng = np.random.default_rng(seed)
    spec = rmt.sample_spectrum(law, N, seed=rng, iid=(mode == "iid"))
    k = min(M, N)
    sq = np.sort(spec)[::-1][:k].copy()
    U = haar_orthogonal(M, rng)
    V = haar_orthogonal(N, rng)
    A = (U[:, :k] * np.sqrt(np.maximum(sq, 0.0))) @ V[:, :k].T
    return MatrixInstance(A, U, V, sq)


def network_dimensions(net: TreeNetwork, N: int) -> tuple[dict, dict]:
    """Integer sizes ``N_l = round(alpha_l N)`` and rows ``M_l = round(beta_l N)``."""
    sizes = {n.id: max(1, int(round(n.alpha * N))) for n in net.nodes if n.kind == "var"}
    rows = {e.child: max(1, int(round(e.beta * N))) for e in net.edges}
    for nid in sizes:
        if nid in rows:
            sizes[nid] = rows[nid]
    return sizes, rows


@dataclass(frozen=True)
class GaussianOracleResult:
    """Trial means and standard deviations, all normalised by ``N``."""

    N: int
    info: float
    info_std: float
    mmse: dict
    mmse_std: dict
    z_mmse: dict
    z_mmse_std: dict
    info_trials: tuple


def _gaussian_channel(ch: Channel):
    if ch is None or not ch.is_gaussian:
        raise SpecError("gaussian_exact needs every channel to be additive Gaussian")
    return ch.gaussian_form()


def _exact_trial(net: TreeNetwork, N: int, rng: np.random.Generator, mode: str, rotation=None):
    sizes, rows = network_dimensions(net, N)
    # every vector is a linear map of independent standard normal latents
    blocks = {}
    latent = 0
    root_dim = sizes[net.root]
    sigma = math.sqrt(net.prior.variance_)
    root_map = np.eye(root_dim) * sigma
    if rotation is not None:
        root_map = rotation @ root_map
    blocks[net.root] = (latent, root_map)
    latent += root_dim
    maps = {}
    noise_slots = {}
    for nid in net.order[1:]:
        noise_slots[nid] = latent
        latent += rows[nid]
    total = latent

    def full(nid):
        off, m = blocks[nid]
        out = np.zeros((m.shape[0], total))
        out[:, off : off + m.shape[1]] = m
        return out

    maps[net.root] = full(net.root)
    z_maps = {}
    for nid in net.order[1:]:
        e = net.edge_into[nid]
        A = sample_matrix(e.law, rows[nid], maps[e.parent].shape[0], seed=rng, mode=mode).A
        z = A @ maps[e.parent]
        z_maps[nid] = z
        gain, noise = _gaussian_channel(net.node[nid].channel)
        out = gain * z
        slot = noise_slots[nid]
        out[:, slot : slot + rows[nid]] += math.sqrt(noise) * np.eye(rows[nid])
        maps[nid] = out

    obs = [nid for nid in net.order if net.node[nid].kind == "obs"]
    if not obs:
        raise SpecError("network has no observation leaves")
    LY = np.vstack([maps[nid] for nid in obs])
    sy = LY @ LY.T
    chol = linalg.cho_factor(sy, lower=True)
    logdet_y = 2.0 * np.sum(np.log(np.diag(chol[0])))
    logdet_noise = sum(rows[nid] * math.log(_gaussian_channel(net.node[nid].channel)[1]) for nid in obs)
    info = 0.5 * (logdet_y - logdet_noise) / N

    def post_trace(L):
        cross = L @ LY.T
        solved = linalg.cho_solve(chol, cross.T)
        return (np.sum(L * L) - np.sum(cross * solved.T)) / N

    mmse = {nid: post_trace(maps[nid]) for nid in net.var_ids}
    z_mmse = {nid: post_trace(z_maps[nid]) for nid in net.edge_ids}
    return info, mmse, z_mmse


def gaussian_exact(
    net: TreeNetwork, N: int, seed: int = 0, trials: int = 10, mode: str = "quantile", rotation=None
) -> GaussianOracleResult:
    """Exact ``I(X; Y | A)/N`` and posterior MMSEs of a Gaussian network by log-determinants.

    Trial ``k`` uses the RNG stream ``default_rng([seed, k])``.  ``rotation``
    optionally pre-rotates the root signal (an invariance check).
    """
    if not isinstance(net.prior, GaussianPrior):
        raise SpecError("gaussian_exact needs a Gaussian root prior")
    for n in net.nodes:
        if n.channel is not None:
            _gaussian_channel(n.channel)
    infos, mmses, zs = [], [], []
    for k in range(trials):
        rng = np.random.default_rng([seed, k])
        i, m, z = _exact_trial(net, N, rng, mode, rotation)
        infos.append(i)
        mmses.append(m)
        zs.append(z)

    def stats(rows_):
        keys = rows_[0].keys()
        mean = {k: float(np.mean([r[k] for r in rows_])) for k in keys}
        std = {k: float(np.std([r[k] for r in rows_])) for k in keys}
        return mean, std

    m_mean, m_std = stats(mmses)
    z_mean, z_std = stats(zs)
    return GaussianOracleResult(
        N=N,
        info=float(np.mean(infos)),
        info_std=float(np.std(infos)),
        mmse=m_mean,
        mmse_std=m_std,
        z_mmse=z_mean,
        z_mmse_std=z_std,
        info_trials=tuple(infos),
    )


# -- Monte Carlo scalar estimators -----------------------------------------


def _batch_stats(values: np.ndarray, batches: int = 20) -> tuple[float, float]:
    means = np.array([b.mean() for b in np.array_split(values, batches)])
    return float(values.mean()), float(means.std(ddof=1) / math.sqrt(batches))


def _z_grid(tau2: float, n: int = 400):
    """Gauss-Legendre nodes on [-L, 0] and [0, L] for integrals over ``z``."""
    x, w = np.polynomial.legendre.leggauss(n // 2)
    L = 10.0 * math.sqrt(tau2)
    half = 0.5 * L * (x + 1.0)
    hw = 0.5 * L * w
    return np.concatenate([-half, half]), np.concatenate([hw, hw])


def mc_scalar_mmse(target, s: float, samples: int = 10**5, seed=0, batch: int = 20000) -> tuple[float, float]:
    """Monte Carlo ``E[Var(. | observations)]`` with batch-means standard error.

    ``target`` is a :class:`Prior` (observation ``sqrt(s) X + N``) or a pair
    ``(channel, tau2)`` (observations ``Y`` and ``sqrt(s) Z + N``, target ``Z``).
    """
    if isinstance(target, Prior):
        if s == 0:
            return target.variance, 0.0
    if samples < 10**4:
        raise ValueError("mc_scalar_mmse needs at least 1e4 samples")
    rng = np.random.default_rng(seed)
    out = np.empty(samples)
    rs = math.sqrt(s)
    if isinstance(target, Prior):
        w, mu, v = target.components()
        for start in range(0, samples, batch):
            n = min(batch, samples - start)
            x = target.sample(n, rng)
            y = rs * x + rng.standard_normal(n)
            # posterior over mixture components, then within-component Gaussian update
            var_y = 1.0 + s * v
            logr = np.log(w) - 0.5 * np.log(var_y) - 0.5 * (y[:, None] - rs * mu) ** 2 / var_y
            r = np.exp(logr - logsumexp(logr, axis=1, keepdims=True))
            m = mu + rs * v * (y[:, None] - rs * mu) / var_y
            c = v / var_y
            mean = np.sum(r * m, axis=1)
            out[start : start + n] = np.sum(r * (c + m * m), axis=1) - mean**2
    else:
        channel, tau2 = target
        zg, zw = _z_grid(tau2)
        log_prior = np.log(zw) - 0.5 * zg**2 / tau2
        for start in range(0, samples, batch):
            n = min(batch, samples - start)
            z = math.sqrt(tau2) * rng.standard_normal(n)
            y = channel.sample(z, rng)
            oz = rs * z + rng.standard_normal(n)
            logp = log_prior + channel.log_likelihood(y[:, None], zg[None, :]) - 0.5 * (oz[:, None] - rs * zg) ** 2
            p = np.exp(logp - logsumexp(logp, axis=1, keepdims=True))
            mean = p @ zg
            out[start : start + n] = p @ zg**2 - mean**2
    return _batch_stats(out)


def mc_obs_info(channel: Channel, tau2: float, samples: int = 10**5, seed=0, batch: int = 20000) -> tuple[float, float]:
    """Monte Carlo ``I(Z; Y)`` for ``Z ~ N(0, tau2)`` as the mean log density ratio."""
    rng = np.random.default_rng(seed)
    zg, zw = _z_grid(tau2)
    log_prior = np.log(zw) - 0.5 * zg**2 / tau2 - 0.5 * math.log(2 * math.pi * tau2)
    out = np.empty(samples)
    for start in range(0, samples, batch):
        n = min(batch, samples - start)
        z = math.sqrt(tau2) * rng.standard_normal(n)
        y = channel.sample(z, rng)
        log_marg = logsumexp(log_prior + channel.log_likelihood(y[:, None], zg[None, :]), axis=1)
        out[start : start + n] = channel.log_likelihood(y, z) - log_marg
    return _batch_stats(out)


# -- state evolution for the standard linear model -------------------------


def _mixture_mmse_quad(prior: Prior, s: float) -> float:
    """MMSE of a mixture prior by adaptive quadrature over the observation."""
    if s == 0:
        return prior.variance
    w, mu, v = prior.components()
    rs = math.sqrt(s)
    var_y = 1.0 + s * v

    def integrand(y):
        logr = np.log(w) - 0.5 * np.log(2 * math.pi * var_y) - 0.5 * (y - rs * mu) ** 2 / var_y
        lp = logsumexp(logr)
        r = np.exp(logr - lp)
        m = mu + rs * v * (y - rs * mu) / var_y
        mean = r @ m
        return math.exp(lp) * (r @ (v / var_y + (m - mean) ** 2))

    spread = 12.0 * math.sqrt(float(np.max(var_y)))
    lo, hi = rs * float(np.min(mu)) - spread, rs * float(np.max(mu)) + spread
    pts = sorted({float(x) for x in rs * mu})
    val, _ = integrate.quad(integrand, lo, hi, points=pts, limit=500, epsabs=1e-300, epsrel=1e-11)
    return val


def se_linear_fixed_points(prior: Prior, law: rmt.SpectralLaw, eps: float, n_scan: int = 400) -> list[float]:
    """Fixed points ``u`` of vector-AMP state evolution for ``y = A x + N(0, eps)``.

    The recursion alternates a scalar denoiser (precision ``g1`` gives error
    ``u = mmse(g1)``) with the LMMSE stage (error ``eps C(-eps g2)`` at prior
    precision ``g2 = 1/u - g1``).  Fixed points are located as sign changes of
    ``g1 -> T(g1) - g1`` on a log grid, then refined by Brent's method.
    """

    def step(log_g1):
        g1 = math.exp(log_g1)
        u = _mixture_mmse_quad(prior, g1)
        if not u > 0:
            return math.nan
        a = eps * max(1.0 / u - g1, 0.0)
        # 1/v2 - g2 = (1 - g2 v2) / v2, with 1 - g2 v2 = E[lam / (lam + a)] free of cancellation
        v2 = eps * float(law.expect(lambda lam: 1.0 / (lam + a)))
        num = float(law.expect(lambda lam: lam / (lam + a)))
        if not (v2 > 0 and num > 0 and math.isfinite(v2)):
            return math.nan
        return math.log(num / v2) - log_g1

    grid = np.linspace(math.log(1e-6), math.log(1e4), n_scan)
    vals = [step(x) for x in grid]
    roots = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fa == 0:
            roots.append(a)
        elif np.isfinite(fa) and np.isfinite(fb) and fa * fb < 0:
            roots.append(optimize.brentq(step, a, b, xtol=1e-13, rtol=1e-13))
    return sorted(_mixture_mmse_quad(prior, math.exp(r)) for r in roots)
