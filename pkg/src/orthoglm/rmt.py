"""Free-probability transforms of spectral laws of ``A^T A``.

A spectral law is the limiting eigenvalue distribution of ``A^T A`` for an
``M x N`` matrix ``A``.  For each law we expose

* the Stieltjes transform ``C(t) = E[1 / (lam - t)]``,
* the R-transform ``R(z) = C^{-1}(-z) - 1/z``,
* the integrated R-transform ``J(t) = 1/2 int_0^t R(-z) dz``,
* its Legendre dual ``J*(u) = sup_t (J(t) - u t / 2)``.

Point-mass, Bernoulli and Marchenko-Pastur laws use closed forms.  Empirical
laws (finite eigenvalue lists) go through a generic numeric path that inverts
the Stieltjes transform in the stable form

    R(-y) = r   where   E[1 / (1 + y (lam - r))] = 1,

which avoids the ``C^{-1}(y) + 1/y`` cancellation for small ``y``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate, optimize

from .errors import DomainError

__all__ = [
    "SpectralLaw",
    "PointMass",
    "Bernoulli",
    "MarchenkoPastur",
    "Empirical",
    "Scaled",
    "stieltjes",
    "inverse_stieltjes",
    "r_transform",
    "integrated_r",
    "j_star",
    "j_star_argmax",
    "sample_spectrum",
    "load_eigenvalues",
    "law_from_dict",
    "law_to_dict",
]

_MP_NODES = 256


class SpectralLaw:
    """Base class; subclasses are frozen dataclasses and therefore hashable."""

    # -- moments and support ---------------------------------------------
    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def support(self) -> tuple[float, float]:
        """Smallest and largest point of the support (including atoms)."""
        raise NotImplementedError

    def expect(self, f):
        """``E[f(lam)]`` for a vectorised callable ``f``."""
        nodes, weights = self.quadrature()
        return np.tensordot(weights, f(nodes), axes=(0, 0))

    def quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights of a rule that integrates smooth ``f`` against the law."""
        raise NotImplementedError

    def quantile(self, p):
        raise NotImplementedError

    # -- transforms ------------------------------------------------------
    def stieltjes(self, t):
        nodes, weights = self.quadrature()
        return float(np.dot(weights, 1.0 / (nodes - t)))

    def r_of_neg(self, y: float) -> float:
        """``R(-y)``; generic numeric path over the quadrature atoms."""
        return _r_of_neg_atoms(*self._atoms(), y)

    def r_transform(self, z: float) -> float:
        if z == 0.0:
            return self.mean
        return self.r_of_neg(-z)

    def integrated_r(self, t: float) -> float:
        if t == 0.0:
            return 0.0
        return _integrate_r(self.r_of_neg, t)

    def j_star_argmax(self, u: float) -> float:
        """The ``t`` attaining the supremum in ``J*(u)``, i.e. ``R(-t) = u``."""
        return _solve_r_equals(self.r_of_neg, self.mean, u, self._r_image())

    def j_star(self, u: float) -> float:
        t = self.j_star_argmax(u)
        return self.integrated_r(t) - 0.5 * u * t

    def _atoms(self) -> tuple[np.ndarray, np.ndarray]:
        return self.quadrature()

    def _r_image(self) -> tuple[float, float]:
        """Open interval of values taken by ``R(-t)`` over admissible ``t``."""
        lo, hi = self.support
        return lo, hi


def _r_of_neg_atoms(lam: np.ndarray, w: np.ndarray, y: float) -> float:
    """Solve ``sum w / (1 + y (lam - r)) = 1`` for ``r``.

    For ``y > 0`` the root lies in ``(lam_min - 1, min(mean, lam_min + 1/y))``
    and the left side increases in ``r``; for ``y < 0`` it lies in
    ``(max(mean, lam_max - 1/|y|), lam_max + 1)`` and decreases.
    """
    if y == 0.0:
        return float(np.dot(w, lam))
    mean = float(np.dot(w, lam))
    lo_l, hi_l = float(lam.min()), float(lam.max())

    def g(r):
        return float(np.dot(w, 1.0 / (1.0 + y * (lam - r)))) - 1.0

    if y > 0:
        pole = lo_l + 1.0 / y
        a, b = lo_l - 1.0, min(mean, pole)
        if b >= pole:
            b = math.nextafter(pole, -math.inf)
    else:
        pole = hi_l - 1.0 / (-y)
        a, b = max(mean, pole), hi_l + 1.0
        if a <= pole:
            a = math.nextafter(pole, math.inf)
    ga, gb = g(a), g(b)
    # by Jensen g(mean) >= 0; a rounding-level violation means mean is the root
    if y > 0 and gb <= 0.0:
        return b
    if y < 0 and ga <= 0.0:
        return a
    if ga * gb > 0:
        # degenerate law (all mass at one point): R is constant
        if hi_l - lo_l <= 1e-15 * max(1.0, abs(hi_l)):
            return mean
        raise DomainError(f"R(-{y}) has no admissible root")
    return optimize.brentq(g, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def _integrate_r(r_of_neg, t: float) -> float:
    """``1/2 int_0^t R(-z) dz`` with a log substitution for long ranges."""
    if t > 0 and t > 1.0:
        head = integrate.quad(r_of_neg, 0.0, 1.0, epsabs=1e-12, epsrel=1e-12, limit=200)[0]
        # z = exp(x) on [1, t]
        tail = integrate.quad(
            lambda x: r_of_neg(math.exp(x)) * math.exp(x),
            0.0,
            math.log(t),
            epsabs=1e-12,
            epsrel=1e-12,
            limit=200,
        )[0]
        return 0.5 * (head + tail)
    val = integrate.quad(r_of_neg, 0.0, t, epsabs=1e-12, epsrel=1e-12, limit=200)[0]
    return 0.5 * val


def _solve_r_equals(r_of_neg, mean: float, u: float, image: tuple[float, float]) -> float:
    if not u > 0:
        raise DomainError(f"J* requires u > 0, got {u}", value=math.inf)
    lo, hi = image
    if not (lo < u < hi) and not math.isclose(u, mean, rel_tol=0, abs_tol=1e-15):
        raise DomainError(f"u={u} outside the R-transform image ({lo}, {hi}); J* = +inf", value=math.inf)
    if u == mean:
        return 0.0

    def f(t):
        return r_of_neg(t) - u

    if u < mean:
        a, b = 0.0, 1.0
        while f(b) > 0:
            a, b = b, 2.0 * b
            if b > 1e16:
                raise DomainError(f"no finite maximiser for J*({u})", value=math.inf)
    else:
        b, a = 0.0, -1.0
        while f(a) < 0:
            b, a = a, 2.0 * a
            if a < -1e16:
                raise DomainError(f"no finite maximiser for J*({u})", value=math.inf)
    return optimize.brentq(f, a, b, xtol=1e-14, rtol=1e-14, maxiter=500)


@dataclass(frozen=True)
class PointMass(SpectralLaw):
    """All eigenvalues equal ``lam``; ``lam = 1`` is an orthogonal matrix."""

    lam: float

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("PointMass requires lam >= 0")

    @property
    def mean(self):
        return float(self.lam)

    @property
    def support(self):
        return float(self.lam), float(self.lam)

    def quadrature(self):
        return np.array([float(self.lam)]), np.array([1.0])

    def quantile(self, p):
        return np.full(np.shape(p), float(self.lam))

    def stieltjes(self, t):
        return 1.0 / (self.lam - t)

    def r_of_neg(self, y):
        return float(self.lam)

    def integrated_r(self, t):
        return 0.5 * self.lam * t

    def j_star_argmax(self, u):
        if math.isclose(u, self.lam, rel_tol=1e-12, abs_tol=1e-15):
            return 0.0
        raise DomainError(f"point-mass J*({u}) is infinite for u != {self.lam}", value=math.inf)

    def j_star(self, u):
        self.j_star_argmax(u)
        return 0.0


@dataclass(frozen=True)
class Bernoulli(SpectralLaw):
    """Eigenvalues in {0, 1} with ``P(1) = beta``: row-orthogonal (Stiefel) matrices."""

    beta: float

    def __post_init__(self):
        if not 0 < self.beta <= 1:
            raise ValueError("Bernoulli requires beta in (0, 1]")

    @property
    def mean(self):
        return float(self.beta)

    @property
    def support(self):
        return (0.0 if self.beta < 1 else 1.0), 1.0

    def quadrature(self):
        if self.beta == 1:
            return np.array([1.0]), np.array([1.0])
        return np.array([0.0, 1.0]), np.array([1.0 - self.beta, self.beta])

    def quantile(self, p):
        return np.where(np.asarray(p) < 1.0 - self.beta, 0.0, 1.0)

    def stieltjes(self, t):
        if self.beta == 1:
            return 1.0 / (1.0 - t)
        return self.beta / (1.0 - t) - (1.0 - self.beta) / t

    def r_of_neg(self, y):
        if self.beta == 1:
            return 1.0
        # R(z) = (z - 1 + sqrt(D)) / (2z), rationalised: 2 beta / (sqrt(D) + 1 - z)
        z = -y
        d = (1.0 - z) ** 2 + 4.0 * self.beta * z
        return 2.0 * self.beta / (math.sqrt(d) + 1.0 - z)

    def integrated_r(self, t):
        if self.beta == 1:
            return 0.5 * t
        if t <= -1.0:
            raise DomainError(f"Bernoulli J(t) requires t > -1, got {t}")
        return super().integrated_r(t)

    def j_star_argmax(self, u):
        b = self.beta
        if b == 1:
            return PointMass(1.0).j_star_argmax(u)
        if not 0 < u < 1:
            raise DomainError(f"Bernoulli J*({u}) is infinite outside (0, 1)", value=math.inf)
        return (b - u) / (u * (1.0 - u))

    def j_star(self, u):
        b = self.beta
        if b == 1:
            return PointMass(1.0).j_star(u)
        if not 0 < u < 1:
            raise DomainError(f"Bernoulli J*({u}) is infinite outside (0, 1)", value=math.inf)
        return 0.5 * b * math.log(b / u) + 0.5 * (1.0 - b) * math.log((1.0 - b) / (1.0 - u))


@dataclass(frozen=True)
class MarchenkoPastur(SpectralLaw):
    """Limit law of ``A^T A`` for IID entries of variance ``1/N`` and ``M/N -> beta``."""

    beta: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("MarchenkoPastur requires beta > 0")

    @property
    def mean(self):
        return float(self.beta)

    @property
    def edges(self):
        sb = math.sqrt(self.beta)
        return (1.0 - sb) ** 2, (1.0 + sb) ** 2

    @property
    def support(self):
        lo, hi = self.edges
        return (0.0 if self.beta < 1 else lo), hi

    @property
    def zero_mass(self):
        return max(0.0, 1.0 - self.beta)

    @cached_property
    def _rule(self):
        # lam = c - r cos(theta) turns the square-root edges into a smooth integrand
        b = self.beta
        c, r = 1.0 + b, 2.0 * math.sqrt(b)
        x, w = np.polynomial.legendre.leggauss(_MP_NODES)
        theta = 0.5 * math.pi * (x + 1.0)
        w = 0.5 * math.pi * w
        lam = c - r * np.cos(theta)
        sin2 = np.sin(theta) ** 2
        if b == 1.0:
            dens = r * r * (1.0 + np.cos(theta)) / (2.0 * math.pi * 2.0)
        else:
            dens = r * r * sin2 / (2.0 * math.pi * lam)
        nodes, weights = lam, w * dens
        if self.zero_mass > 0:
            nodes = np.concatenate([[0.0], nodes])
            weights = np.concatenate([[self.zero_mass], weights])
        return nodes, weights

    def quadrature(self):
        return self._rule

    def _cdf_theta(self, theta):
        b = self.beta
        c, r = 1.0 + b, 2.0 * math.sqrt(b)
        out = r * np.sin(theta) + c * theta
        if b != 1.0:
            lo, hi = self.edges
            out = out - 2.0 * abs(1.0 - b) * np.arctan(math.sqrt(hi / lo) * np.tan(0.5 * theta))
        return out / (2.0 * math.pi)

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        q = p - self.zero_mass
        lo = np.zeros_like(p)
        hi = np.full_like(p, math.pi)
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            below = self._cdf_theta(mid) < q
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        theta = 0.5 * (lo + hi)
        lam = 1.0 + self.beta - 2.0 * math.sqrt(self.beta) * np.cos(theta)
        return np.where(q <= 0.0, 0.0, lam)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.edges
        c, r = 1.0 + self.beta, 2.0 * math.sqrt(self.beta)
        theta = np.arccos(np.clip((c - np.clip(x, lo, hi)) / r, -1.0, 1.0))
        cont = self._cdf_theta(theta)
        out = np.where(x >= 0, self.zero_mass, 0.0) + np.where(x >= lo, cont, 0.0)
        return np.clip(out, 0.0, 1.0)

    def stieltjes(self, t):
        b = self.beta
        if t == 0.0:
            raise DomainError("MP Stieltjes transform needs t != 0")
        disc = t * t - 2.0 * (1.0 + b) * t + (1.0 - b) ** 2
        return (-1.0 + b - t - math.sqrt(disc)) / (2.0 * t)

    def r_of_neg(self, y):
        if y <= -1.0:
            raise DomainError(f"MP R-transform requires z < 1, got {-y}")
        return self.beta / (1.0 + y)

    def integrated_r(self, t):
        if t <= -1.0:
            raise DomainError(f"MP J(t) requires t > -1, got {t}")
        return 0.5 * self.beta * math.log1p(t)

    def j_star_argmax(self, u):
        if not u > 0:
            raise DomainError(f"MP J* requires u > 0, got {u}", value=math.inf)
        return self.beta / u - 1.0

    def j_star(self, u):
        if not u > 0:
            raise DomainError(f"MP J* requires u > 0, got {u}", value=math.inf)
        b = self.beta
        return 0.5 * b * (math.log(b / u) + u / b - 1.0)

    def _r_image(self):
        return 0.0, math.inf


@dataclass(frozen=True)
class Empirical(SpectralLaw):
    """Uniform law on a finite list of non-negative eigenvalues."""

    eigenvalues: tuple = field(repr=False)

    def __post_init__(self):
        eig = np.asarray(self.eigenvalues, dtype=float)
        if eig.ndim != 1 or eig.size == 0:
            raise ValueError("Empirical law needs a non-empty 1-d eigenvalue list")
        if np.any(eig < 0) or not np.all(np.isfinite(eig)):
            raise ValueError("eigenvalues must be finite and non-negative")
        object.__setattr__(self, "eigenvalues", tuple(float(e) for e in eig))

    def __repr__(self):
        return f"Empirical(n={len(self.eigenvalues)}, mean={self.mean:.6g})"

    @cached_property
    def _compressed(self):
        lam, counts = np.unique(np.asarray(self.eigenvalues), return_counts=True)
        return lam, counts / counts.sum()

    @property
    def mean(self):
        lam, w = self._compressed
        return float(np.dot(w, lam))

    @property
    def support(self):
        lam, _ = self._compressed
        return float(lam[0]), float(lam[-1])

    def quadrature(self):
        return self._compressed

    def quantile(self, p):
        srt = np.sort(np.asarray(self.eigenvalues))
        idx = np.clip(np.ceil(np.asarray(p) * srt.size).astype(int) - 1, 0, srt.size - 1)
        return srt[idx]

    def stieltjes(self, t):
        lam, w = self._compressed
        lo, hi = lam[0], lam[-1]
        if lo <= t <= hi:
            raise DomainError(f"t={t} inside the support [{lo}, {hi}]")
        return float(np.dot(w, 1.0 / (lam - t)))

    def r_of_neg(self, y):
        lam, w = self._compressed
        return _r_of_neg_atoms(lam, w, y)


@dataclass(frozen=True)
class Scaled(SpectralLaw):
    """Law of ``a * lam`` for ``lam`` drawn from ``inner``."""

    a: float
    inner: SpectralLaw

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("Scaled requires a > 0")

    @property
    def mean(self):
        return self.a * self.inner.mean

    @property
    def support(self):
        lo, hi = self.inner.support
        return self.a * lo, self.a * hi

    def quadrature(self):
        nodes, weights = self.inner.quadrature()
        return self.a * nodes, weights

    def quantile(self, p):
        return self.a * self.inner.quantile(p)

    def stieltjes(self, t):
        return self.inner.stieltjes(t / self.a) / self.a

    def r_of_neg(self, y):
        return self.a * self.inner.r_of_neg(self.a * y)

    def integrated_r(self, t):
        return self.inner.integrated_r(self.a * t)

    def j_star_argmax(self, u):
        return self.inner.j_star_argmax(u / self.a) / self.a

    def j_star(self, u):
        return self.inner.j_star(u / self.a)

    def _r_image(self):
        lo, hi = self.inner._r_image()
        return self.a * lo, self.a * hi


# -- functional interface --------------------------------------------------


def stieltjes(law: SpectralLaw, t: float) -> float:
    """``E[1/(lam - t)]`` for ``t < 0``."""
    if not t < 0:
        raise DomainError(f"stieltjes requires t < 0, got {t}")
    return float(law.stieltjes(t))


def inverse_stieltjes(law: SpectralLaw, y: float) -> float:
    """The ``t < 0`` with ``C(t) = y``; defined for ``0 < y < C(0-)``."""
    if not y > 0:
        raise DomainError(f"inverse_stieltjes requires y > 0, got {y}")
    return law.r_of_neg(y) - 1.0 / y


def r_transform(law: SpectralLaw, z: float) -> float:
    """``C^{-1}(-z) - 1/z``; ``z = 0`` returns the mean eigenvalue."""
    if z > 0:
        raise DomainError(f"r_transform is used on z <= 0, got {z}")
    return float(law.r_transform(z))


def integrated_r(law: SpectralLaw, t: float) -> float:
    if not t >= 0:
        raise DomainError(f"integrated_r requires t >= 0, got {t}")
    return float(law.integrated_r(t))


def j_star(law: SpectralLaw, u: float) -> float:
    """Legendre dual of ``J``; raises :class:`DomainError` where it is ``+inf``."""
    if not u > 0:
        raise DomainError(f"j_star requires u > 0, got {u}", value=math.inf)
    return float(law.j_star(u))


def j_star_argmax(law: SpectralLaw, u: float) -> float:
    return float(law.j_star_argmax(u))


def sample_spectrum(law: SpectralLaw, n: int, seed=None, iid: bool = False) -> np.ndarray:
    """``n`` eigenvalues from ``law``.

    Quantile mode (default) returns ``F^{-1}((i - 1/2)/n)``, which removes
    sampling fluctuations; ``iid=True`` draws independent samples (empirical
    laws are then resampled with replacement).
    """
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    n = int(n)
    if iid:
        p = np.random.default_rng(seed).uniform(size=n)
    else:
        p = (np.arange(1, n + 1) - 0.5) / n
    return np.sort(np.asarray(law.quantile(p), dtype=float))


def load_eigenvalues(path) -> Empirical:
    """Read one eigenvalue per line (blank lines and ``#`` comments skipped)."""
    vals = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                vals.append(float(line))
    return Empirical(tuple(vals))


def law_from_dict(d: dict, base_dir=None) -> SpectralLaw:
    """Build a law from ``{"type": ..., "params": {...}}``; unknown keys are rejected."""
    extra = set(d) - {"type", "params"}
    if extra:
        raise ValueError(f"unknown spectral law keys {sorted(extra)}")
    kind = d.get("type")
    params = dict(d.get("params", {}))
    required = {
        "point_mass": {"lam"},
        "bernoulli": {"beta"},
        "marchenko_pastur": {"beta"},
        "scaled": {"a", "inner"},
    }
    if kind == "empirical":
        if len(params) != 1 or not ({"file"} == set(params) or {"eigenvalues"} == set(params)):
            raise ValueError("empirical law needs exactly one of 'file' or 'eigenvalues'")
    elif kind in required:
        if set(params) != required[kind]:
            raise ValueError(f"{kind} law needs params {sorted(required[kind])}, got {sorted(params)}")
    else:
        raise ValueError(f"unknown spectral law type {kind!r}")

    if kind == "point_mass":
        return PointMass(float(params["lam"]))
    if kind == "bernoulli":
        return Bernoulli(float(params["beta"]))
    if kind == "marchenko_pastur":
        return MarchenkoPastur(float(params["beta"]))
    if kind == "scaled":
        return Scaled(float(params["a"]), law_from_dict(params["inner"], base_dir))
    if "file" in params:
        path = params["file"]
        if base_dir is not None and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        return load_eigenvalues(path)
    return Empirical(tuple(float(x) for x in params["eigenvalues"]))


def law_to_dict(law: SpectralLaw) -> dict:
    if isinstance(law, PointMass):
        return {"type": "point_mass", "params": {"lam": law.lam}}
    if isinstance(law, Bernoulli):
        return {"type": "bernoulli", "params": {"beta": law.beta}}
    if isinstance(law, MarchenkoPastur):
        return {"type": "marchenko_pastur", "params": {"beta": law.beta}}
    if isinstance(law, Empirical):
        return {"type": "empirical", "params": {"eigenvalues": list(law.eigenvalues)}}
    if isinstance(law, Scaled):
        return {"type": "scaled", "params": {"a": law.a, "inner": law_to_dict(law.inner)}}
    raise TypeError(type(law))
