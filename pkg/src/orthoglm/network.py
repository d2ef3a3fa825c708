"""Tree networks of GLMs and their potential function.

A network is a rooted tree.  The root ``X_1`` has a prior; every other node
``l`` receives ``Z_l = A_l X_parent`` and is either a hidden variable
``X_l ~ P_l(. | Z_l)`` or an observed leaf ``Y_l ~ P_l(. | Z_l)``.  All
quantities are normalised by a global ``N``: node ``l`` has ``alpha_l N``
coordinates and edge ``l`` has ``beta_l N`` rows.

Coordinates of the potential are ``u`` (one MMSE per hidden node) and ``v``
(one MMSE per edge, keyed by the child).  ``F(u, v)`` is the sum of

* ``alpha_1 I*_X(u_1 / alpha_1)`` for the root prior,
* ``beta_l [I*_{Z,X}(v_l/beta_l, u_l/beta_l) - I*_Z(v_l/beta_l)]`` per hidden node,
* ``beta_l [I*_{Z tri Y}(v_l/beta_l) - I*_Z(v_l/beta_l)]`` per observed leaf,
* ``alpha_parent J*(v_l / u_parent)`` per edge,

where ``Z_l`` is treated as ``N(0, tau2_l)`` per coordinate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.optimize import brentq

from . import rmt
from .errors import DomainError, SpecError
from .legendre import gaussian_gamma, gaussian_istar, inverse_mmse, legendre_1d, legendre_2d
from .scalar_info import (
    AdditiveChannel,
    BernoulliGaussianPrior,
    Channel,
    DiscretePrior,
    GaussianPrior,
    LinearChannel,
    Prior,
    RademacherPrior,
    SignChannel,
    obs_curve,
    pair_surface,
    prior_curve,
)

__all__ = [
    "Node",
    "Edge",
    "TreeNetwork",
    "validate_network",
    "load_network",
    "network_to_dict",
    "signal_power",
    "potential",
    "compact_potential",
    "potential_terms",
    "domain_box",
    "prior_from_dict",
    "channel_from_dict",
]


# -- spec documents --------------------------------------------------------


def _take(d: Mapping, allowed: set, required: set, what: str) -> dict:
    if not isinstance(d, Mapping):
        raise SpecError(f"{what} must be an object")
    extra = set(d) - allowed
    if extra:
        raise SpecError(f"unknown keys in {what}: {sorted(extra)}")
    missing = required - set(d)
    if missing:
        raise SpecError(f"missing keys in {what}: {sorted(missing)}")
    return dict(d)


def _atoms(raw, what):
    try:
        return tuple((float(a), float(p)) for a, p in raw)
    except (TypeError, ValueError) as exc:
        raise SpecError(f"{what} atoms must be [value, weight] pairs") from exc


def prior_from_dict(d: Mapping) -> Prior:
    kind = d.get("type") if isinstance(d, Mapping) else None
    try:
        if kind == "gaussian":
            p = _take(d, {"type", "variance"}, {"type"}, "gaussian prior")
            return GaussianPrior(float(p.get("variance", 1.0)))
        if kind == "rademacher":
            _take(d, {"type"}, {"type"}, "rademacher prior")
            return RademacherPrior()
        if kind == "bernoulli_gaussian":
            p = _take(d, {"type", "rho", "variance"}, {"type", "rho"}, "bernoulli_gaussian prior")
            return BernoulliGaussianPrior(float(p["rho"]), float(p.get("variance", 1.0)))
        if kind == "discrete":
            p = _take(d, {"type", "atoms"}, {"type", "atoms"}, "discrete prior")
            return DiscretePrior(_atoms(p["atoms"], "discrete prior"))
    except ValueError as exc:
        if isinstance(exc, SpecError):
            raise
        raise SpecError(str(exc)) from exc
    raise SpecError(f"unknown prior type {kind!r}")


def prior_to_dict(prior: Prior) -> dict:
    if isinstance(prior, GaussianPrior):
        return {"type": "gaussian", "variance": prior.variance_}
    if isinstance(prior, RademacherPrior):
        return {"type": "rademacher"}
    if isinstance(prior, BernoulliGaussianPrior):
        return {"type": "bernoulli_gaussian", "rho": prior.rho, "variance": prior.variance_}
    if isinstance(prior, DiscretePrior):
        return {"type": "discrete", "atoms": [list(a) for a in prior.atoms]}
    raise TypeError(type(prior))


def channel_from_dict(d: Mapping) -> Channel:
    kind = d.get("type") if isinstance(d, Mapping) else None
    try:
        if kind == "additive":
            p = _take(d, {"type", "eps", "atoms", "base_variance"}, {"type", "eps"}, "additive channel")
            atoms = _atoms(p["atoms"], "additive channel") if p.get("atoms") is not None else None
            return AdditiveChannel(float(p["eps"]), atoms, float(p.get("base_variance", 0.0)))
        if kind == "sign":
            p = _take(d, {"type", "eps"}, {"type", "eps"}, "sign channel")
            return SignChannel(float(p["eps"]))
        if kind == "linear":
            p = _take(d, {"type", "eps", "gain"}, {"type", "eps"}, "linear channel")
            return LinearChannel(float(p["eps"]), float(p.get("gain", 1.0)))
    except ValueError as exc:
        if isinstance(exc, SpecError):
            raise
        raise SpecError(str(exc)) from exc
    raise SpecError(f"unknown channel type {kind!r}")


def channel_to_dict(ch: Channel) -> dict:
    if isinstance(ch, AdditiveChannel):
        out = {"type": "additive", "eps": ch.eps}
        if ch.atoms is not None:
            out["atoms"] = [list(a) for a in ch.atoms]
        if ch.base_variance:
            out["base_variance"] = ch.base_variance
        return out
    if isinstance(ch, SignChannel):
        return {"type": "sign", "eps": ch.eps}
    if isinstance(ch, LinearChannel):
        return {"type": "linear", "eps": ch.eps, "gain": ch.gain}
    raise TypeError(type(ch))


# -- network ---------------------------------------------------------------


@dataclass(frozen=True)
class Node:
    id: str
    kind: str  # "var" or "obs"
    alpha: float
    channel: Channel | None = None


@dataclass(frozen=True)
class Edge:
    parent: str
    child: str
    law: rmt.SpectralLaw
    beta: float


@dataclass(frozen=True)
class TreeNetwork:
    """Validated tree of GLMs.  Build with :func:`validate_network`."""

    root: str
    prior: Prior
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    defaults: tuple = field(default=(), compare=False)

    @cached_property
    def node(self) -> dict[str, Node]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def edge_into(self) -> dict[str, Edge]:
        return {e.child: e for e in self.edges}

    @cached_property
    def children(self) -> dict[str, list[Edge]]:
        out = {n.id: [] for n in self.nodes}
        for e in self.edges:
            out[e.parent].append(e)
        return out

    @cached_property
    def order(self) -> tuple[str, ...]:
        """Node ids in breadth-first order from the root."""
        out, frontier = [self.root], [self.root]
        while frontier:
            nxt = [e.child for nid in frontier for e in self.children[nid]]
            out.extend(nxt)
            frontier = nxt
        return tuple(out)

    @cached_property
    def var_ids(self) -> tuple[str, ...]:
        return tuple(i for i in self.order if self.node[i].kind == "var")

    @cached_property
    def edge_ids(self) -> tuple[str, ...]:
        return tuple(i for i in self.order if i != self.root)

    @property
    def coordinate_names(self) -> tuple[str, ...]:
        return tuple(f"u:{i}" for i in self.var_ids) + tuple(f"v:{i}" for i in self.edge_ids)

    @property
    def default_settings(self) -> dict:
        return dict(self.defaults)

    def split(self, x) -> tuple[dict, dict]:
        """Flat vector ``(u..., v...)`` to ``(u, v)`` dictionaries."""
        x = np.asarray(x, float)
        k = len(self.var_ids)
        return dict(zip(self.var_ids, x[:k])), dict(zip(self.edge_ids, x[k:]))

    def join(self, u: Mapping, v: Mapping) -> np.ndarray:
        return np.array([u[i] for i in self.var_ids] + [v[i] for i in self.edge_ids], float)


def _topo_check(root, nodes, edges):
    parent = {}
    for e in edges:
        if e.child in parent:
            raise SpecError(f"node {e.child!r} has more than one parent")
        parent[e.child] = e.parent
    for nid in nodes:
        if nid == root:
            if nid in parent:
                raise SpecError("the root cannot have a parent")
            continue
        if nid not in parent:
            raise SpecError(f"node {nid!r} is not connected to the root")
        seen = {nid}
        cur = nid
        while cur != root:
            cur = parent[cur]
            if cur in seen:
                raise SpecError(f"cycle detected through node {cur!r}")
            seen.add(cur)


def validate_network(spec: Mapping, base_dir=None) -> TreeNetwork:
    """Parse and check a network specification document.

    Nodes give ``alpha`` directly or ``size`` relative to the root's ``N``;
    edges give ``beta`` or ``rows`` likewise.
    """
    doc = _take(spec, {"nodes", "edges", "root", "defaults"}, {"nodes", "edges", "root"}, "network")
    root_doc = _take(doc["root"], {"id", "prior", "N"}, {"id", "prior"}, "root")
    n_global = root_doc.get("N")
    if n_global is not None and not float(n_global) > 0:
        raise SpecError("root N must be positive")

    def ratio(d, key, size_key, what):
        if key in d and size_key in d:
            raise SpecError(f"{what}: give either {key} or {size_key}, not both")
        if size_key in d:
            if n_global is None:
                raise SpecError(f"{what}: {size_key} needs the root's N")
            val = float(d[size_key]) / float(n_global)
        elif key in d:
            val = float(d[key])
        else:
            return None
        if not (val > 0 and math.isfinite(val)):
            raise SpecError(f"{what}: {key} must be positive and finite")
        return val

    raw_nodes = {}
    for nd in doc["nodes"]:
        nd = _take(nd, {"id", "kind", "channel", "alpha", "size"}, {"id", "kind"}, "node")
        nid = str(nd["id"])
        if nid in raw_nodes:
            raise SpecError(f"duplicate node id {nid!r}")
        if nd["kind"] not in ("var", "obs"):
            raise SpecError(f"node {nid!r}: kind must be 'var' or 'obs'")
        raw_nodes[nid] = nd
    root = str(root_doc["id"])
    if root not in raw_nodes:
        raise SpecError(f"root {root!r} is not among the nodes")
    if raw_nodes[root]["kind"] != "var":
        raise SpecError("the root must be a variable node")
    if "channel" in raw_nodes[root]:
        raise SpecError("the root takes a prior, not a channel")

    edges = []
    for ed in doc["edges"]:
        ed = _take(ed, {"parent", "child", "law", "beta", "rows"}, {"parent", "child", "law"}, "edge")
        parent, child = str(ed["parent"]), str(ed["child"])
        for nid in (parent, child):
            if nid not in raw_nodes:
                raise SpecError(f"edge refers to unknown node {nid!r}")
        beta = ratio(ed, "beta", "rows", f"edge {parent}->{child}")
        if beta is None:
            raise SpecError(f"edge {parent}->{child}: beta is required")
        try:
            law = rmt.law_from_dict(ed["law"], base_dir)
        except (ValueError, OSError) as exc:
            raise SpecError(f"edge {parent}->{child}: {exc}") from exc
        edges.append(Edge(parent, child, law, beta))
    _topo_check(root, raw_nodes, edges)
    for e in edges:
        if raw_nodes[e.parent]["kind"] == "obs":
            raise SpecError(f"observation node {e.parent!r} has a child; observations must be leaves")

    beta_in = {e.child: e.beta for e in edges}
    nodes = []
    for nid, nd in raw_nodes.items():
        alpha = ratio(nd, "alpha", "size", f"node {nid}")
        if nid == root:
            alpha = 1.0 if alpha is None else alpha
            channel = None
        else:
            if "channel" not in nd:
                raise SpecError(f"node {nid!r} needs a channel")
            channel = channel_from_dict(nd["channel"])
            if alpha is None:
                alpha = beta_in[nid]
            elif nd["kind"] == "var" and not math.isclose(alpha, beta_in[nid], rel_tol=1e-12):
                raise SpecError(
                    f"node {nid!r}: separable channel needs alpha == beta of its edge "
                    f"({alpha} != {beta_in[nid]})"
                )
        nodes.append(Node(nid, nd["kind"], alpha, channel))
    for e in edges:
        if e.law.support == (0.0, 0.0) and raw_nodes[e.child]["kind"] == "var":
            raise SpecError(f"edge into {e.child!r}: a zero matrix may only feed an observation leaf")

    defaults = doc.get("defaults", {})
    if not isinstance(defaults, Mapping):
        raise SpecError("defaults must be an object")
    unknown = set(defaults) - {"grid", "tol", "seed", "starts", "damping", "N", "trials", "s_max"}
    if unknown:
        raise SpecError(f"unknown keys in defaults: {sorted(unknown)}")
    prior = prior_from_dict(root_doc["prior"])
    order = {nid: i for i, nid in enumerate(raw_nodes)}
    edges.sort(key=lambda e: order[e.child])
    return TreeNetwork(root, prior, tuple(nodes), tuple(edges), tuple(sorted(defaults.items())))


def load_network(path) -> TreeNetwork:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: malformed JSON ({exc})") from exc
    return validate_network(doc, base_dir=path.parent)


def network_to_dict(net: TreeNetwork) -> dict:
    nodes = []
    for n in net.nodes:
        d = {"id": n.id, "kind": n.kind, "alpha": n.alpha}
        if n.channel is not None:
            d["channel"] = channel_to_dict(n.channel)
        nodes.append(d)
    edges = [
        {"parent": e.parent, "child": e.child, "law": rmt.law_to_dict(e.law), "beta": e.beta} for e in net.edges
    ]
    out = {"nodes": nodes, "edges": edges, "root": {"id": net.root, "prior": prior_to_dict(net.prior)}}
    if net.defaults:
        out["defaults"] = dict(net.defaults)
    return out


# -- signal power ----------------------------------------------------------


def _node_powers(net: TreeNetwork) -> tuple[dict, dict, dict]:
    """Per-coordinate ``E[X^2]`` and ``Var(X)`` of hidden nodes, ``tau2`` per edge."""
    power = {net.root: net.prior.second_moment}
    var = {net.root: net.prior.variance}
    tau2 = {}
    for nid in net.order[1:]:
        e = net.edge_into[nid]
        tau2[nid] = power[e.parent] * e.law.mean * net.node[e.parent].alpha / e.beta
        node = net.node[nid]
        if node.kind == "var":
            power[nid] = node.channel.second_moment(tau2[nid])
            var[nid] = node.channel.output_variance(tau2[nid])
    return power, var, tau2


def signal_power(net: TreeNetwork) -> dict[str, float]:
    """``tau2_l``: per-coordinate variance of ``Z_l`` keyed by the child node."""
    return _node_powers(net)[2]


# -- potential terms -------------------------------------------------------


class _EdgeModel:
    """Everything needed to evaluate the terms attached to one edge."""

    def __init__(self, net: TreeNetwork, edge: Edge, tau2: float, child_var: float | None):
        self.edge = edge
        self.child = edge.child
        self.parent = edge.parent
        self.alpha_p = net.node[edge.parent].alpha
        self.beta = edge.beta
        self.tau2 = tau2
        self.law = edge.law
        lo, hi = edge.law.support
        self.point_mass = lo == hi
        self.zero = self.point_mass and hi == 0.0
        self.kind = net.node[edge.child].kind
        self.channel = net.node[edge.child].channel
        self.v_max = self.beta * tau2
        self.u_max = self.beta * child_var if child_var is not None else None
        if self.point_mass:
            self.ratio_range = (lo, hi)
        else:
            self.ratio_range = edge.law._r_image()

    @cached_property
    def curve(self):
        return obs_curve(self.channel, self.tau2)

    @cached_property
    def surface(self):
        return pair_surface(self.channel, self.tau2)

    # J term ---------------------------------------------------------------
    def j_term(self, v, u_p):
        """``alpha_p J*(v / u_p)`` and the maximising ``t``."""
        x = v / u_p
        try:
            t = self.law.j_star_argmax(x)
            val = self.law.j_star(x)
        except DomainError as exc:
            raise DomainError(f"J* term of edge {self.parent}->{self.child}: {exc}", term=f"J:{self.child}", value=x)
        return self.alpha_p * val, t

    # node term ------------------------------------------------------------
    def _check_v(self, v):
        if not (0 < v <= self.v_max * (1 + 1e-12)):
            raise DomainError(
                f"v:{self.child}={v} outside (0, {self.v_max}]", term=f"node:{self.child}", value=v
            )

    def node_term(self, v, u=None):
        """Value of the obs/hidden term and its partial derivatives ``(dv, du)``."""
        if self.zero:
            return 0.0, 0.0, 0.0
        self._check_v(v)
        vt = min(v / self.beta, self.tau2)
        gz = gaussian_gamma(self.tau2, vt)
        base = gaussian_istar(self.tau2, vt)
        if self.kind == "obs":
            val = legendre_1d(self.curve, vt, allow_flat=True)
            g = inverse_mmse(self.curve, vt, allow_flat=True)
            return self.beta * (val - base), 0.5 * (gz - g), 0.0
        if not (0 < u <= self.u_max * (1 + 1e-12)):
            raise DomainError(f"u:{self.child}={u} outside (0, {self.u_max}]", term=f"node:{self.child}", value=u)
        val, s = _pair_dual(self.surface, vt, u / self.beta)
        return self.beta * (val - base), 0.5 * (gz - s[0]), -0.5 * s[1]

    # inner minimisation over v ---------------------------------------------
    def v_bounds(self, u_p):
        lo, hi = self.ratio_range
        return u_p * lo, min(self.v_max, u_p * hi)

    def inner(self, u_p, u=None):
        """``min_v alpha_p J*(v/u_p) + term(v, u)``; returns ``(value, v)``."""
        if self.zero:
            return 0.0, 0.0
        if self.point_mass:
            v = self.law.mean * u_p
            val = self.j_term(v, u_p)[0] + self.node_term(v, u)[0]
            return val, v
        lo, hi = self.v_bounds(u_p)

        def h(v):
            return self.j_term(v, u_p)[0] + self.node_term(v, u)[0]

        def dh(v):
            t = self.j_term(v, u_p)[1]
            return -0.5 * self.alpha_p * t / u_p + self.node_term(v, u)[1]

        if hi >= u_p * self.ratio_range[1]:
            hi *= 1.0 - 1e-12  # the J* ratio bound is open
        if not hi > lo:
            raise DomainError(f"edge {self.parent}->{self.child}: empty v-domain at u={u_p}", term=f"J:{self.child}")
        grid = lo + (hi - lo) * np.geomspace(1e-10, 1.0, 41)
        d = [dh(float(x)) for x in grid]
        cands = []
        if d[-1] <= 0:
            cands.append(float(grid[-1]))
        for a, b, da, db in zip(grid[:-1], grid[1:], d[:-1], d[1:]):
            if da < 0 <= db:
                cands.append(brentq(dh, float(a), float(b), xtol=1e-300, rtol=1e-13))
        if d[0] >= 0:
            cands.append(float(grid[0]))
        vals = [(h(c), c) for c in cands]
        return min(vals)


def _pair_dual(surface, vt, ut):
    return _pair_dual_cached(surface, float(vt), float(ut))


@lru_cache(maxsize=200_000)
def _pair_dual_cached(surface, vt, ut):
    return legendre_2d(surface, vt, ut, return_argmax=True)


class PotentialModel:
    """Precomputed per-network curves and term evaluators."""

    def __init__(self, net: TreeNetwork):
        self.net = net
        self.power, self.var, self.tau2 = _node_powers(net)
        self.alpha1 = net.node[net.root].alpha
        self.prior_curve = prior_curve(net.prior)
        self.edges = {
            e.child: _EdgeModel(net, e, self.tau2[e.child], self.var.get(e.child)) for e in net.edges
        }

    def u_max(self, nid):
        if nid == self.net.root:
            return self.alpha1 * self.prior_curve.M0
        return self.edges[nid].u_max

    def root_term(self, u1):
        if not (0 < u1 <= self.u_max(self.net.root) * (1 + 1e-12)):
            raise DomainError(f"u:{self.net.root}={u1} outside (0, {self.u_max(self.net.root)}]", term="prior")
        ut = min(u1 / self.alpha1, self.prior_curve.M0)
        return self.alpha1 * legendre_1d(self.prior_curve, ut)

    def root_gamma(self, u1):
        ut = min(u1 / self.alpha1, self.prior_curve.M0)
        return inverse_mmse(self.prior_curve, ut)

    def terms(self, u: Mapping, v: Mapping) -> dict[str, float]:
        out = {"prior": self.root_term(u[self.net.root])}
        for nid, em in self.edges.items():
            out[f"node:{nid}"] = em.node_term(v[nid], u.get(nid))[0]
            if not em.zero:
                out[f"J:{nid}"] = em.j_term(v[nid], u[em.parent])[0]
        return out

    def value(self, u, v):
        return float(sum(self.terms(u, v).values()))

    def compact(self, u: Mapping):
        total = self.root_term(u[self.net.root])
        vstar = {}
        for nid, em in self.edges.items():
            val, vs = em.inner(u[em.parent], u.get(nid))
            total += val
            vstar[nid] = vs
        return float(total), vstar


_MODELS: dict = {}


def model(net: TreeNetwork) -> PotentialModel:
    """Cached :class:`PotentialModel` for ``net``."""
    m = _MODELS.get(net)
    if m is None:
        m = _MODELS[net] = PotentialModel(net)
    return m


def _as_maps(net, u, v=None):
    if not isinstance(u, Mapping):
        u = dict(zip(net.var_ids, np.atleast_1d(np.asarray(u, float))))
    if v is not None and not isinstance(v, Mapping):
        v = dict(zip(net.edge_ids, np.atleast_1d(np.asarray(v, float))))
    return u, v


def potential_terms(net: TreeNetwork, u, v) -> dict[str, float]:
    """Individual terms of ``F(u, v)`` keyed by ``prior``, ``node:<id>`` and ``J:<id>``."""
    u, v = _as_maps(net, u, v)
    return model(net).terms(u, v)


def potential(net: TreeNetwork, u, v) -> float:
    """``F(u, v)`` in nats per coordinate of ``N``."""
    u, v = _as_maps(net, u, v)
    return model(net).value(u, v)


def compact_potential(net: TreeNetwork, u) -> tuple[float, dict[str, float]]:
    """``min_v F(u, v)`` and the minimising ``v`` (one inner problem per edge)."""
    u, _ = _as_maps(net, u)
    return model(net).compact(u)


def domain_box(net: TreeNetwork) -> dict[str, tuple[float, float]]:
    """Upper bounds of every coordinate; lower bounds are open at zero."""
    m = model(net)
    box = {f"u:{i}": (0.0, m.u_max(i)) for i in net.var_ids}
    for nid, em in m.edges.items():
        box[f"v:{nid}"] = (0.0, em.v_max)
    return box
