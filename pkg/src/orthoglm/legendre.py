"""Legendre duals of concave information curves and surfaces.

For a curve ``I(s)`` with MMSE ``M(s) = 2 I'(s)`` the dual is

    I*(u) = sup_{s >= 0} I(s) - u s / 2,

attained at ``s = Gamma(u)``, the inverse of ``M``.  For ``u >= M(0)`` the
sup sits at ``s = 0`` and the dual is flat at ``I(0)``; callers that need this
continuation pass ``allow_flat=True``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq, minimize, minimize_scalar

from .errors import ConvergenceError, DomainError
from .scalar_info import BivariateInfoSurface, InfoCurve

__all__ = [
    "inverse_mmse",
    "legendre_1d",
    "legendre_2d",
    "recover_info",
    "gaussian_istar",
    "gaussian_gamma",
    "DualCurve",
    "is_concave",
    "side_information_gap",
    "tail_information_gap",
]

_S_CEIL = 1e14


def gaussian_gamma(var: float, u: float) -> float:
    """Inverse MMSE of a Gaussian with variance ``var``: ``1/u - 1/var`` (0 past ``var``)."""
    return max(1.0 / u - 1.0 / var, 0.0)


def gaussian_istar(var: float, u: float) -> float:
    """Dual of ``s -> 0.5 log(1 + s var)``; zero for ``u >= var``."""
    if u >= var:
        return 0.0
    r = u / var
    return 0.5 * (-math.log(r) + r - 1.0)


def _check_u(curve: InfoCurve, u: float, allow_flat: bool) -> bool:
    """Validate ``u``; returns True when ``u`` is at or beyond ``M(0)``."""
    if not u > 0 or not math.isfinite(u):
        raise DomainError(f"mmse argument must be in (0, M(0)], got {u}", value=u)
    if u >= curve.M0:
        if u > curve.M0 * (1.0 + 1e-12) and not allow_flat:
            raise DomainError(f"mmse argument {u} exceeds M(0) = {curve.M0}", value=u)
        return True
    return False


def inverse_mmse(curve: InfoCurve, u: float, allow_flat: bool = False) -> float:
    """``Gamma(u)``: the smallest ``s >= 0`` with ``M(s) = u``."""
    if _check_u(curve, u, allow_flat):
        return 0.0
    if curve.gaussian_var is not None:
        return gaussian_gamma(curve.gaussian_var, u)

    def f(s):
        return curve.eval_M(s) - u

    hi = 1.0
    while f(hi) > 0:
        hi *= 4.0
        if hi > _S_CEIL:
            raise ConvergenceError(f"M stays above {u} up to s = {_S_CEIL:g}")
    lo = 0.0 if hi == 1.0 else hi / 4.0
    if f(lo) < 0:
        raise ConvergenceError("MMSE curve is not non-increasing")
    return brentq(f, lo, hi, xtol=1e-14, rtol=1e-13, maxiter=500)


def legendre_1d(curve: InfoCurve, u: float, allow_flat: bool = False) -> float:
    """``sup_{s >= 0} I(s) - u s / 2`` evaluated as ``I(Gamma(u)) - u Gamma(u) / 2``."""
    if _check_u(curve, u, allow_flat):
        return curve.offset_I0
    if curve.gaussian_var is not None:
        return curve.offset_I0 + gaussian_istar(curve.gaussian_var, u)
    s = inverse_mmse(curve, u)
    return curve.eval_I(s) - 0.5 * u * s


def recover_info(curve: InfoCurve, s: float) -> float:
    """``inf_u I*(u) + s u / 2``: the double transform, which gives back ``I(s)``."""

    def obj(u):
        return legendre_1d(curve, u, allow_flat=True) + 0.5 * s * u

    # the objective is convex in u, so a bounded scalar search finds the infimum
    hi = curve.M0
    res = minimize_scalar(obj, bounds=(1e-12 * hi, hi), method="bounded", options={"xatol": 1e-13 * hi})
    return float(min(res.fun, obj(hi)))


def is_concave(values, tol: float = 1e-10) -> bool:
    """Discrete concavity check on an equally spaced sequence."""
    return bool(np.all(np.diff(np.asarray(values, float), 2) <= tol))


@dataclass(frozen=True)
class DualCurve:
    """Tabulated dual ``I*(u)`` on a grid over ``(0, M(0)]``."""

    curve: InfoCurve = field(repr=False)
    u: np.ndarray
    values: np.ndarray

    @classmethod
    def build(cls, curve: InfoCurve, n: int = 200, u_min_ratio: float = 1e-4) -> "DualCurve":
        u = curve.M0 * np.geomspace(u_min_ratio, 1.0, n)
        vals = np.array([legendre_1d(curve, float(x)) for x in u])
        return cls(curve, u, vals)

    def __call__(self, u: float) -> float:
        return legendre_1d(self.curve, u)

    def derivative(self, u: float) -> float:
        """``dI*/du = -Gamma(u) / 2``."""
        return -0.5 * inverse_mmse(self.curve, u)


def side_information_gap(prior: InfoCurve, conditional: InfoCurve, u: float) -> float:
    """``0.5 * int_0^u (Gamma_X(v) - Gamma_{X|Y}(v)) dv``.

    In the transform domain this is the excess of the dual of the observed
    pair curve over the dual of the prior curve; it is non-negative.
    ``Gamma_{X|Y}`` is extended by zero past ``M_{X|Y}(0)``.
    """

    def diff(v):
        return inverse_mmse(prior, v, allow_flat=True) - inverse_mmse(conditional, v, allow_flat=True)

    pts = sorted({min(conditional.M0, u), min(prior.M0, u)})
    val, _ = quad(diff, 0.0, u, points=[p for p in pts if 0 < p < u] or None, limit=400, epsabs=1e-11)
    return 0.5 * val


def tail_information_gap(prior: InfoCurve, conditional: InfoCurve, s: float, s_cap: float = 1e8) -> float:
    """``0.5 * int_s^inf (M_X(t) - M_{X|Y}(t)) dt`` (truncated at ``s_cap``)."""

    def gap(t):
        return prior.eval_M(t) - conditional.eval_M(t)

    val = 0.0
    if s < 1.0:
        val += quad(gap, s, 1.0, limit=200, epsabs=1e-12)[0]
    lo = math.log(max(s, 1.0))
    val += quad(lambda x: math.exp(x) * gap(math.exp(x)), lo, math.log(s_cap), limit=400, epsabs=1e-12)[0]
    return 0.5 * val


def _objective(surface, u, v, s):
    i_val, m1, m2 = surface.evaluate(float(s[0]), float(s[1]))
    return i_val - 0.5 * (u * s[0] + v * s[1]), np.array([0.5 * (m1 - u), 0.5 * (m2 - v)])


def legendre_2d(surface: BivariateInfoSurface, u: float, v: float, return_argmax: bool = False, tol: float = 1e-11):
    """``sup_{s1, s2 >= 0} I(s1, s2) - (u s1 + v s2) / 2``.

    The objective is concave, so a projected Newton iteration with an active
    set for the ``s >= 0`` constraints and Armijo backtracking converges to
    the global maximiser; L-BFGS-B from the origin is the fallback.  Returns
    the value, or ``(value, argmax)`` with ``return_argmax``.
    """
    if not (u > 0 and v > 0):
        raise DomainError(f"legendre_2d needs u, v > 0, got ({u}, {v})", value=(u, v))
    if hasattr(surface, "dual"):
        val, s = surface.dual(u, v)
        return (float(val), s) if return_argmax else float(val)
    s = np.zeros(2)
    f, g = _objective(surface, u, v, s)
    converged = False
    for _ in range(200):
        free = ~((s <= 0.0) & (g <= 0.0))
        if not np.any(free) or np.max(np.abs(g[free])) < tol:
            converged = True
            break
        h = 0.5 * surface.jacobian(float(s[0]), float(s[1]))
        d = np.zeros(2)
        idx = np.flatnonzero(free)
        hf = h[np.ix_(idx, idx)]
        try:
            step = -np.linalg.solve(hf, g[idx])
            if np.dot(step, g[idx]) <= 0:
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            step = g[idx] / max(1e-12, np.max(np.abs(np.diag(hf))))
        d[idx] = step
        t = 1.0
        while True:
            trial = np.maximum(s + t * d, 0.0)
            if np.max(trial) > _S_CEIL:
                raise DomainError(f"Legendre sup is unbounded at (u, v) = ({u}, {v})", value=(u, v))
            f_new, g_new = _objective(surface, u, v, trial)
            if f_new >= f + 1e-4 * np.dot(g, trial - s) - 1e-15 * (1.0 + abs(f)):
                break
            t *= 0.5
            if t < 1e-12:
                break
        if t < 1e-12:
            break
        moved = np.max(np.abs(trial - s)) <= 1e-14 * (1.0 + np.max(s))
        s, f, g = trial, f_new, g_new
        if moved:
            converged = True
            break
    if not converged:
        res = minimize(
            lambda x: tuple(-a for a in _objective(surface, u, v, x)),
            s,
            jac=True,
            method="L-BFGS-B",
            bounds=[(0.0, None)] * 2,
            options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 2000},
        )
        if not res.success and np.max(res.x) > 1e8:
            raise DomainError(f"Legendre sup is unbounded at (u, v) = ({u}, {v})", value=(u, v))
        if -res.fun > f:
            s, f = res.x, -res.fun
    return (float(f), s) if return_argmax else float(f)
