"""Stationary points, global minimum and parameter sweeps of the potential.

The workhorse is a damped fixed-point iteration in the hidden-node MMSEs
``u`` that mirrors state evolution: given ``u``, every edge variable ``v`` is
set to its inner argmin, the effective snr fed back to each parent is read
off the edge terms, and each ``u`` is replaced by the MMSE its own term
produces at that snr.  Fixed points of this map are exactly the zeros of the
gradient of the compact potential.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, root
from scipy.stats import qmc

from .errors import ConvergenceError, DomainError, SpecError
from .network import TreeNetwork, model, network_to_dict, potential, validate_network

__all__ = [
    "SolverOptions",
    "StationaryPoint",
    "SolveResult",
    "Transition",
    "PhaseScanReport",
    "gradient",
    "compact_gradient",
    "fixed_point_map",
    "stationary_points",
    "global_min",
    "phase_scan",
]


@dataclass(frozen=True)
class SolverOptions:
    starts: int = 16
    damping: float = 0.5
    tol: float = 1e-9
    max_iter: int = 2000
    seed: int = 0
    grid: int = 32
    dedupe: float = 1e-6


@dataclass(frozen=True)
class StationaryPoint:
    u: dict
    v: dict
    value: float
    kind: str  # "local-min", "saddle" or "boundary"
    residual: float
    iterations: int
    min_eig: float


@dataclass(frozen=True)
class SolveResult:
    points: tuple
    best: StationaryPoint
    diagnostics: dict = field(default_factory=dict)

    @property
    def minima(self):
        return tuple(p for p in self.points if p.kind in ("local-min", "boundary"))


# -- derivatives -----------------------------------------------------------


def gradient(net: TreeNetwork, u, v, richardson: bool = False) -> np.ndarray:
    """Central-difference gradient of ``F(u, v)`` over ``(u..., v...)``.

    Step ``h = 1e-5 (1 + |x|)`` per coordinate; raises :class:`DomainError`
    when the stencil leaves the domain.
    """
    x = net.join(*_maps(net, u, v))
    box = _box_upper(net)

    def f(y):
        return potential(net, *net.split(y))

    out = np.empty_like(x)
    for i in range(x.size):
        h = 1e-5 * (1.0 + abs(x[i]))
        if x[i] - 2 * h <= 0 or x[i] + 2 * h > box[i]:
            raise DomainError(f"{net.coordinate_names[i]}={x[i]} is too close to the boundary for the stencil")
        e = np.zeros_like(x)
        e[i] = h
        d1 = (f(x + e) - f(x - e)) / (2 * h)
        if richardson:
            d2 = (f(x + 2 * e) - f(x - 2 * e)) / (4 * h)
            d1 = (4 * d1 - d2) / 3
        out[i] = d1
    return out


def _box_upper(net):
    m = model(net)
    return np.array([m.u_max(i) for i in net.var_ids] + [m.edges[i].v_max for i in net.edge_ids])


def _maps(net, u, v):
    if not isinstance(u, dict):
        u = dict(zip(net.var_ids, np.atleast_1d(np.asarray(u, float))))
    if v is not None and not isinstance(v, dict):
        v = dict(zip(net.edge_ids, np.atleast_1d(np.asarray(v, float))))
    return u, v


def _sweep(net: TreeNetwork, u: dict, root: bool = True):
    """Inner argmins and the feedback snr for each hidden node.

    With ``root=False`` the root prior term and its slope (the costly part for
    non-Gaussian priors) are skipped; the fixed-point map needs neither.
    """
    m = model(net)
    value = m.root_term(u[net.root]) if root else math.nan
    vstar, feedback, own = {}, {i: 0.0 for i in net.var_ids}, {}
    for nid, em in m.edges.items():
        val, vs = em.inner(u[em.parent], u.get(nid))
        value += val
        vstar[nid] = vs
        if em.zero:
            continue
        if em.point_mass:
            feedback[em.parent] += em.law.mean * em.node_term(vs, u.get(nid))[1]
        else:
            t = em.j_term(vs, u[em.parent])[1]
            feedback[em.parent] += 0.5 * em.alpha_p * t * vs / u[em.parent] ** 2
        if em.kind == "var":
            own[nid] = em.node_term(vs, u[nid])[2]
    own[net.root] = -0.5 * m.root_gamma(u[net.root]) if root else math.nan
    return float(value), vstar, feedback, own


def compact_gradient(net: TreeNetwork, u) -> tuple[np.ndarray, float, dict]:
    """Envelope gradient of the compact potential, its value and the inner argmin."""
    u, _ = _maps(net, u, None)
    value, vstar, feedback, own = _sweep(net, u)
    g = np.array([own[i] + feedback[i] for i in net.var_ids])
    return g, value, vstar


def _hidden_update(em, v, sigma):
    """MMSE of a hidden node whose pair term sees ``v`` and feedback snr ``sigma``."""
    surf = em.surface
    vt = v / em.beta

    def mz(sz):
        return surf.evaluate(sz, sigma)[1] - vt

    if mz(0.0) <= 0:
        sz = 0.0
    else:
        hi = 1.0
        while mz(hi) > 0:
            hi *= 4.0
            if hi > 1e14:
                raise ConvergenceError("cannot match the Z-MMSE of a hidden node")
        sz = brentq(mz, 0.0, hi, xtol=1e-15, rtol=1e-14)
    return em.beta * surf.evaluate(sz, sigma)[2]


def fixed_point_map(net: TreeNetwork, u) -> tuple[np.ndarray, dict]:
    """One undamped state-evolution-style update ``u -> T(u)`` and the inner argmin ``v``."""
    u, _ = _maps(net, u, None)
    m = model(net)
    _, vstar, feedback, _ = _sweep(net, u, root=False)
    new = {}
    for nid in net.var_ids:
        sigma = max(2.0 * feedback[nid], 0.0)
        if nid == net.root:
            new[nid] = m.alpha1 * m.prior_curve.eval_M(sigma)
        else:
            new[nid] = _hidden_update(m.edges[nid], vstar[nid], sigma)
    return np.array([new[i] for i in net.var_ids]), vstar


# -- stationary points -----------------------------------------------------


def _u_upper(net):
    m = model(net)
    return np.array([m.u_max(i) for i in net.var_ids])


def _clip(net, x):
    hi = _u_upper(net)
    return np.clip(x, hi * 1e-12, hi)


def _compact_hessian(net, x):
    n = x.size
    hi = _u_upper(net)
    H = np.empty((n, n))
    for i in range(n):
        h = 1e-5 * max(x[i], 1e-3 * hi[i])
        e = np.zeros(n)
        e[i] = h
        lo_pt = np.maximum(x - e, hi * 1e-12)
        up_pt = np.minimum(x + e, hi)
        H[:, i] = (compact_gradient(net, up_pt)[0] - compact_gradient(net, lo_pt)[0]) / (up_pt[i] - lo_pt[i])
    return 0.5 * (H + H.T)


def _classify(net, x, iterations, residual):
    """Label a fixed point; ``None`` when it only solves the map because of clipping.

    A point with some ``u`` at the edge of its interval or some inner ``v`` at
    the top of its domain is a KKT point rather than a stationary point; it is
    kept (as "boundary") only if it is a local minimum of the compact potential.
    """
    g, value, vstar = compact_gradient(net, x)
    hi = _u_upper(net)
    m = model(net)
    top = x >= hi * (1 - 1e-9)
    at_edge = top | (x <= hi * 1e-12 * (1 + 1e-6))
    v_edge = any(
        not (em.zero or em.point_mass) and vstar[nid] >= em.v_max * (1 - 1e-9) for nid, em in m.edges.items()
    )
    try:
        H = _compact_hessian(net, x)
        free = np.flatnonzero(~at_edge)
        min_eig = float(np.min(np.linalg.eigvalsh(H[np.ix_(free, free)]))) if free.size else math.inf
    except DomainError:
        min_eig = math.nan
    if np.any(at_edge) or v_edge:
        # a boundary minimum must not improve when stepping back into the box
        inward = value
        for i in np.flatnonzero(at_edge):
            y = x.copy()
            y[i] += -1e-4 * hi[i] if top[i] else 1e-4 * hi[i]
            inward = min(inward, compact_gradient(net, y)[1])
        if inward < value - 1e-12 or min_eig < -1e-6:
            return None
        kind = "boundary"
    elif min_eig >= -1e-6:
        kind = "local-min"
    else:
        kind = "saddle"
    u = dict(zip(net.var_ids, map(float, x)))
    return StationaryPoint(u, vstar, value, kind, float(residual), iterations, min_eig)


def _residual(net, x):
    new, _ = fixed_point_map(net, _clip(net, x))
    return new - x


def _accepted(x, r, opts) -> bool:
    """Residual small in absolute terms and, for tiny MMSEs, relative to ``x``."""
    r = np.abs(np.asarray(r, float))
    return bool(np.all(r < max(opts.tol, 1e-8)) and np.all(r <= 1e-4 * np.abs(x)))


def _converge(net, x0, opts: SolverOptions, polish=True):
    """Damped iteration from ``x0`` followed by a root polish.

    Returns ``(x, iterations, residual)``, or ``None`` on failure.
    """
    x = _clip(net, np.asarray(x0, float))
    it = 0
    try:
        for it in range(1, opts.max_iter + 1):
            new = fixed_point_map(net, x)[0]
            step = float(np.max(np.abs(new - x)))
            x = _clip(net, (1 - opts.damping) * x + opts.damping * new)
            if step < opts.tol:
                break
        r = _residual(net, x)
        if polish and not _accepted(x, r, opts):
            sol = root(lambda y: _residual(net, y), x, method="hybr", options={"xtol": 1e-13})
            cand = _clip(net, sol.x)
            rc = _residual(net, cand)
            if _accepted(cand, rc, opts):
                x, r = cand, rc
    except (DomainError, ConvergenceError, ValueError):
        return None
    if not _accepted(x, r, opts):
        return None
    return x, it, float(np.max(np.abs(r)))


def _local_solve(net, x0, opts: SolverOptions, polish=True):
    """Converge from ``x0`` and classify; ``None`` on failure or a clipped non-minimum."""
    out = _converge(net, x0, opts, polish)
    return None if out is None else _classify(net, *out)


def _polish_only(net, x0, opts):
    try:
        sol = root(lambda y: _residual(net, y), _clip(net, x0), method="hybr", options={"xtol": 1e-13})
        x = _clip(net, sol.x)
        r = _residual(net, x)
    except (DomainError, ConvergenceError, ValueError):
        return None
    if not _accepted(x, r, opts):
        return None
    return _classify(net, x, sol.nfev, float(np.max(np.abs(r))))


def _bracket_roots_1d(net, opts, n=None):
    """All zeros of the scalar fixed-point residual located by a sign scan."""
    hi = _u_upper(net)[0]
    n = n or 4 * opts.grid
    grid = hi * np.geomspace(1e-12, 1.0, n)
    vals = []
    for x in grid:
        try:
            vals.append(float(_residual(net, np.array([x]))[0]))
        except (DomainError, ConvergenceError, ValueError):
            vals.append(math.nan)
    found = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if np.isfinite(fa) and np.isfinite(fb) and fa * fb < 0:
            r = brentq(lambda y: _residual(net, np.array([y]))[0], a, b, xtol=1e-300, rtol=1e-14)
            res = abs(float(_residual(net, np.array([r]))[0]))
            found.append(_classify(net, np.array([r]), 0, res))
    if np.isfinite(vals[-1]) and vals[-1] >= 0:
        found.append(_classify(net, np.array([hi]), 0, 0.0))
    return [p for p in found if p is not None]


def _dedupe(points, tol):
    """Merge coincident points, and flat families of points on the same box face."""

    def close(p, q):
        return max(abs(p.u[k] - q.u[k]) for k in p.u) <= tol * (1 + max(abs(x) for x in q.u.values()))

    def same_face(p, q):
        return p.kind == q.kind != "local-min" and abs(p.value - q.value) <= 1e-10 * (1 + abs(q.value))

    out = []
    for p in sorted(points, key=lambda q: q.value):
        if not any(close(p, q) or same_face(p, q) for q in out):
            out.append(p)
    return out


def stationary_points(net: TreeNetwork, opts: SolverOptions | None = None) -> SolveResult:
    """Multistart damped fixed-point search with Latin-hypercube starts."""
    opts = opts or SolverOptions()
    hi = _u_upper(net)
    sampler = qmc.LatinHypercube(d=hi.size, seed=opts.seed)
    starts = sampler.random(opts.starts) * hi
    found, failed = [], 0
    for x0 in starts:
        out = _converge(net, x0, opts)
        if out is None:
            failed += 1
            continue
        p = _classify(net, *out)
        if p is not None:
            found.append(p)
        # a second root polish straight from the start can land on saddles the damped map avoids
        q = _polish_only(net, x0, opts)
        if q is not None:
            found.append(q)
    if hi.size == 1:
        found.extend(_bracket_roots_1d(net, opts))
    if not found:
        raise ConvergenceError(f"no start converged ({failed} of {opts.starts} failed)")
    points = _dedupe(found, opts.dedupe)
    best = min(points, key=lambda p: p.value)
    return SolveResult(tuple(points), best, {"starts": opts.starts, "failed_starts": failed})


def _grid_points(net, n):
    hi = _u_upper(net)
    axis = (np.arange(1, n + 1) / n)[:, None] * hi[None, :]
    if hi.size == 1:
        return axis
    if hi.size == 2:
        a, b = np.meshgrid(axis[:, 0], axis[:, 1], indexing="ij")
        return np.column_stack([a.ravel(), b.ravel()])
    return qmc.LatinHypercube(d=hi.size, seed=1).random(8 * n) * hi


def global_min(net: TreeNetwork, opts: SolverOptions | None = None) -> tuple[dict, dict, float, SolveResult]:
    """Least-``F`` stationary point, cross-checked against a grid of the compact potential."""
    opts = opts or SolverOptions()
    result = stationary_points(net, opts)
    pts = _grid_points(net, opts.grid)
    best_grid, best_x = math.inf, None
    for x in pts:
        try:
            val = model(net).compact(dict(zip(net.var_ids, x)))[0]
        except (DomainError, ConvergenceError):
            continue
        if val < best_grid:
            best_grid, best_x = val, x
    best = result.best
    if best_x is not None and best_grid < best.value - 1e-9 * (1 + abs(best.value)):
        p = _local_solve(net, best_x, opts)
        if p is None or p.value > best_grid + 1e-9 * (1 + abs(best_grid)):
            raise ConvergenceError(
                f"grid value {best_grid:.12g} undercuts the best stationary value {best.value:.12g}"
            )
        points = _dedupe(list(result.points) + [p], opts.dedupe)
        result = SolveResult(tuple(points), p, dict(result.diagnostics, refined=True))
        best = p
    diag = dict(result.diagnostics, grid_best=best_grid)
    result = SolveResult(result.points, best, diag)
    return best.u, best.v, best.value, result


# -- phase scan ------------------------------------------------------------


@dataclass(frozen=True)
class Transition:
    location: float
    bracket: tuple
    window: tuple
    f_forward: float
    f_backward: float
    u_forward: dict
    u_backward: dict


@dataclass(frozen=True)
class PhaseScanReport:
    parameter: tuple
    grid: tuple
    u_star: tuple  # per grid point, the lower-F branch minimiser
    f_star: tuple
    forward_u: tuple
    backward_u: tuple
    forward_f: tuple
    backward_f: tuple
    degenerate: tuple
    transitions: tuple


def _set_path(doc, path, value):
    parts = path.split(".")
    cur = doc
    for key in parts[:-1]:
        cur = _step(cur, key, path)
    last = parts[-1]
    if isinstance(cur, list):
        raise SpecError(f"parameter path {path!r} ends at a list")
    if last not in cur:
        raise SpecError(f"parameter path {path!r} not found")
    if not isinstance(cur[last], (int, float)) or isinstance(cur[last], bool):
        raise SpecError(f"parameter path {path!r} does not address a scalar")
    cur[last] = float(value)


def _step(cur, key, path):
    if isinstance(cur, list):
        if key.isdigit() and int(key) < len(cur):
            return cur[int(key)]
        for item in cur:
            if isinstance(item, dict) and (item.get("id") == key or item.get("child") == key):
                return item
        raise SpecError(f"parameter path {path!r}: no list entry {key!r}")
    if not isinstance(cur, dict) or key not in cur:
        raise SpecError(f"parameter path {path!r}: no key {key!r}")
    return cur[key]


def _with_parameter(base_doc, paths, value):
    doc = copy.deepcopy(base_doc)
    for p in paths:
        _set_path(doc, p, value)
    return validate_network(doc)


def _branch(base_doc, paths, grid, x0, opts):
    us, fs, nets = [], [], []
    x = np.asarray(x0, float)
    for val in grid:
        net = _with_parameter(base_doc, paths, val)
        p = _local_solve(net, x, opts)
        if p is None:
            p = global_min(net, opts)[3].best
        x = np.array([p.u[i] for i in net.var_ids])
        us.append(p.u)
        fs.append(p.value)
        nets.append(net)
    return us, fs, nets


def phase_scan(
    net: TreeNetwork, parameter, grid, opts: SolverOptions | None = None, base_doc: dict | None = None
) -> PhaseScanReport:
    """Sweep ``parameter`` (one dotted path or several set together) along ``grid``.

    Each direction starts from the global minimiser at its first grid point
    and follows the local minimum by warm-started iteration.  Where the two
    branches disagree a transition is reported at the crossing of their ``F``
    values, found by bisection.
    """
    opts = opts or SolverOptions()
    paths = (parameter,) if isinstance(parameter, str) else tuple(parameter)
    grid = [float(g) for g in grid]
    doc = base_doc if base_doc is not None else network_to_dict(net)
    for p in paths:
        _set_path(copy.deepcopy(doc), p, grid[0] if grid else 0.0)
    if not grid:
        return PhaseScanReport(paths, (), (), (), (), (), (), (), (), ())

    first = _with_parameter(doc, paths, grid[0])
    x_f = np.array(list(global_min(first, opts)[0].values()))
    fu, ff, _ = _branch(doc, paths, grid, x_f, opts)
    last = _with_parameter(doc, paths, grid[-1])
    x_b = np.array(list(global_min(last, opts)[0].values()))
    bu, bf, _ = _branch(doc, paths, grid[::-1], x_b, opts)
    bu, bf = bu[::-1], bf[::-1]

    keys = list(fu[0])
    uf = np.array([[d[k] for k in keys] for d in fu])
    ub = np.array([[d[k] for k in keys] for d in bu])
    gap = np.max(np.abs(uf - ub), axis=1)
    steps = np.concatenate([np.max(np.abs(np.diff(uf, axis=0)), axis=1), np.max(np.abs(np.diff(ub, axis=0)), axis=1)])
    typical = float(np.median(steps)) if steps.size else 0.0
    split = gap > max(10.0 * typical, 1e-6)

    transitions = []
    i = 0
    n = len(grid)
    while i < n:
        if not split[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and split[j + 1]:
            j += 1
        transitions.append(_locate(doc, paths, grid, i, j, fu, bu, ff, bf, opts))
        i = j + 1

    u_star, f_star, degenerate = [], [], []
    for k in range(n):
        use_f = ff[k] <= bf[k]
        u_star.append(fu[k] if use_f else bu[k])
        f_star.append(min(ff[k], bf[k]))
        degenerate.append(bool(split[k] and abs(ff[k] - bf[k]) <= 1e-10))
    return PhaseScanReport(
        paths,
        tuple(grid),
        tuple(u_star),
        tuple(f_star),
        tuple(fu),
        tuple(bu),
        tuple(ff),
        tuple(bf),
        tuple(degenerate),
        tuple(t for t in transitions if t is not None),
    )


def _locate(doc, paths, grid, i, j, fu, bu, ff, bf, opts):
    """Root of the branch ``F`` difference inside the hysteresis window ``[i, j]``."""
    # only grid points where the branches differ carry a meaningful sign
    diff = [ff[k] - bf[k] for k in range(i, j + 1)]
    k0 = None
    for a in range(len(diff) - 1):
        if diff[a] * diff[a + 1] < 0:
            k0 = i + a
            break
    if k0 is None:
        return None
    # both branches exist throughout the window, so each is warm-started from its latest solve
    warm = {"f": np.array(list(fu[k0].values())), "b": np.array(list(bu[k0 + 1].values()))}
    solved = {}

    def branch_gap(par):
        net = _with_parameter(doc, paths, par)
        pf = _local_solve(net, warm["f"], opts)
        pb = _local_solve(net, warm["b"], opts)
        if pf is None or pb is None:
            raise ConvergenceError(f"a branch was lost at parameter {par}")
        warm["f"] = np.array(list(pf.u.values()))
        warm["b"] = np.array(list(pb.u.values()))
        solved[par] = (pf, pb)
        return pf.value - pb.value

    lo, hi = grid[k0], grid[k0 + 1]
    try:
        loc = brentq(branch_gap, lo, hi, xtol=1e-10 * (1 + abs(lo)), rtol=1e-12)
        if loc not in solved:
            branch_gap(loc)
    except (ConvergenceError, ValueError):
        return None
    pf, pb = solved[loc]
    return Transition(
        location=loc,
        bracket=(grid[k0], grid[k0 + 1]),
        window=(grid[i], grid[j]),
        f_forward=pf.value,
        f_backward=pb.value,
        u_forward=pf.u,
        u_backward=pb.u,
    )
