import copy
import json
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orthoglm import rmt
from orthoglm.errors import DomainError, SpecError
from orthoglm.network import (
    compact_potential,
    domain_box,
    load_network,
    network_to_dict,
    potential,
    potential_terms,
    signal_power,
    validate_network,
)
from orthoglm.scalar_info import BernoulliGaussianPrior, RademacherPrior, SignChannel

from conftest import CHAIN, glm_doc, law


def gaussian_glm_information(law_obj, eps=1.0):
    # I(X; Y) per coordinate of X for X ~ N(0, I), Y = A X + N(0, eps I)
    lam, w = law_obj.quadrature()
    return 0.5 * float(np.dot(w, np.log1p(lam / eps)))


class TestValidation:
    def test_chain_parses(self, chain_doc):
        net = validate_network(chain_doc)
        assert net.root == "x1"
        assert net.var_ids == ("x1", "x2")
        assert net.edge_ids == ("x2", "y")
        assert net.node["x2"].alpha == 1.0
        assert net.node["y"].alpha == 0.5
        assert net.coordinate_names == ("u:x1", "u:x2", "v:x2", "v:y")

    def test_round_trip(self, chain_doc):
        net = validate_network(chain_doc)
        assert validate_network(network_to_dict(net)) == net

    def test_sizes_relative_to_root(self):
        doc = glm_doc(law("marchenko_pastur", beta=0.5), 0.5)
        doc["root"]["N"] = 200
        del doc["edges"][0]["beta"]
        doc["edges"][0]["rows"] = 100
        assert validate_network(doc).edges[0].beta == 0.5

    def mutate(self, fn):
        doc = copy.deepcopy(CHAIN)
        fn(doc)
        return doc

    @pytest.mark.parametrize(
        "change",
        [
            lambda d: d["nodes"].append({"id": "x1", "kind": "var"}),
            lambda d: d["edges"].append({"parent": "x2", "child": "x1", "law": law("bernoulli", beta=0.5), "beta": 1}),
            lambda d: d["edges"].append({"parent": "y", "child": "x2", "law": law("bernoulli", beta=0.5), "beta": 1}),
            lambda d: d["nodes"][0].update(channel={"type": "additive", "eps": 1.0}),
            lambda d: d["nodes"][1].pop("channel"),
            lambda d: d["nodes"][1].update(alpha=0.3),
            lambda d: d["nodes"][1].update(kind="hidden"),
            lambda d: d["edges"][0].pop("beta"),
            lambda d: d["edges"][0].update(beta=-1.0),
            lambda d: d["edges"][0].update(law={"type": "nope", "params": {}}),
            lambda d: d["edges"][0].update(child="ghost"),
            lambda d: d["root"].update(id="y"),
            lambda d: d.update(extra=1),
            lambda d: d.update(defaults={"colour": "red"}),
            lambda d: d["root"].update(prior={"type": "bernoulli_gaussian", "rho": 2.0, "variance": 1.0}),
            lambda d: d["edges"][0].update(law=law("point_mass", lam=0.0)),
        ],
    )
    def test_rejects(self, change):
        with pytest.raises(SpecError):
            validate_network(self.mutate(change))

    def test_unconnected_node(self, chain_doc):
        chain_doc["nodes"].append({"id": "z", "kind": "var", "channel": {"type": "additive", "eps": 1.0}})
        with pytest.raises(SpecError, match="not connected"):
            validate_network(chain_doc)

    def test_load_rejects_bad_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(SpecError):
            load_network(p)

    def test_shipped_specs_load(self, specs_dir):
        paths = sorted(specs_dir.glob("*.json"))
        assert paths
        for p in paths:
            net = load_network(p)
            assert validate_network(json.loads(p.read_text())) == net

    def test_priors_and_channels(self):
        doc = glm_doc(law("bernoulli", beta=0.5), 0.5, prior={"type": "rademacher"})
        doc["nodes"][1]["channel"] = {"type": "sign", "eps": 0.2}
        net = validate_network(doc)
        assert net.prior == RademacherPrior()
        assert net.node["y"].channel == SignChannel(0.2)
        doc["root"]["prior"] = {"type": "bernoulli_gaussian", "rho": 0.1, "variance": 10.0}
        assert validate_network(doc).prior == BernoulliGaussianPrior(0.1, 10.0)


class TestSignalPower:
    def test_chain(self, chain_doc):
        tau2 = signal_power(validate_network(chain_doc))
        assert tau2["x2"] == pytest.approx(1.0)
        # x2 has power 1 + eps = 2, scaled by the mean eigenvalue 0.5 over 0.5 rows per unit
        assert tau2["y"] == pytest.approx(2.0)

    def test_scaled_law(self):
        net = validate_network(glm_doc(law("scaled", a=3.0, inner=law("marchenko_pastur", beta=1.0)), 2.0))
        assert signal_power(net)["y"] == pytest.approx(3.0 * 1.0 / 2.0)


class TestPotential:
    @pytest.mark.parametrize(
        "law_obj, beta", [(rmt.MarchenkoPastur(0.5), 0.5), (rmt.Bernoulli(0.5), 0.5), (rmt.MarchenkoPastur(2.0), 2.0)]
    )
    def test_gaussian_glm_minimum_equals_information(self, law_obj, beta):
        net = validate_network(glm_doc(rmt.law_to_dict(law_obj), beta))
        lam, w = law_obj.quadrature()
        mmse = float(np.dot(w, 1.0 / (1.0 + lam)))
        info = gaussian_glm_information(law_obj)
        assert compact_potential(net, [mmse])[0] == pytest.approx(info, abs=1e-9)
        # the MMSE is a minimiser; for a projection the potential is flat above it
        for u in np.linspace(0.05, 1.0, 20):
            assert compact_potential(net, [float(u)])[0] >= info - 1e-10

    def test_terms_sum_to_value(self, chain_doc):
        net = validate_network(chain_doc)
        u, v = {"x1": 0.8, "x2": 1.2}, {"x2": 0.6, "y": 0.5}
        terms = potential_terms(net, u, v)
        assert set(terms) == {"prior", "node:x2", "J:x2", "node:y", "J:y"}
        assert sum(terms.values()) == pytest.approx(potential(net, u, v), abs=1e-14)

    def test_domain_box(self, chain_doc):
        box = domain_box(validate_network(chain_doc))
        assert box["u:x1"] == (0.0, 1.0)
        assert box["u:x2"][1] == pytest.approx(2.0)  # Var(X2) = tau2 + eps
        assert box["v:y"][1] == pytest.approx(0.5 * 2.0)

    def test_outside_domain(self, chain_doc):
        net = validate_network(chain_doc)
        with pytest.raises(DomainError):
            potential(net, {"x1": 1.5, "x2": 0.5}, {"x2": 0.5, "y": 0.5})
        with pytest.raises(DomainError):
            potential(net, {"x1": 0.5, "x2": 0.5}, {"x2": 0.5, "y": 5.0})

    @given(r1=st.floats(0.05, 1.0), r2=st.floats(0.05, 1.0), f1=st.floats(0.01, 0.99), f2=st.floats(0.01, 0.99))
    @settings(max_examples=25, deadline=None)
    def test_compact_is_a_lower_bound(self, r1, r2, f1, f2):
        net = validate_network(copy.deepcopy(CHAIN))
        u = {"x1": r1, "x2": r2}
        val, vstar = compact_potential(net, u)
        for nid, f in (("x2", f1), ("y", f2)):
            v = dict(vstar)
            em_lo, em_hi = _v_range(net, u, nid)
            v[nid] = em_lo + f * (em_hi - em_lo)
            try:
                other = potential(net, u, v)
            except DomainError:
                continue
            assert val <= other + 1e-9
        assert potential(net, u, vstar) == pytest.approx(val, abs=1e-12)


def _v_range(net, u, nid):
    from orthoglm.network import model

    em = model(net).edges[nid]
    lo, hi = em.v_bounds(u[em.parent])
    return lo, hi * (1 - 1e-9)
