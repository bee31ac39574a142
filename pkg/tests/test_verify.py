import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import max_half_logderiv
from signstab.generators import chain_system, random_chain, random_tree_pairs
from signstab.graph import DecompositionError, build_network, decompose_chains
from signstab.metric import BlockMetric, build_chain_metric
from signstab.model import DynamicsSpec, Region
from signstab.verify import (
    averaged_jacobian_check,
    check_condition_ii,
    check_lmi,
    check_modules,
    sign_stability_verdict,
)

TWO_PI = (0.0, 2 * math.pi)
# max over t of 0.45 cos t / (1 + 0.9 sin t), from a dense grid (oracle) and in closed form
HALF_LOGDERIV_MAX = 1.032370799811861
HALF_LOGDERIV_EXACT = 0.45 / math.sqrt(0.19)
T_STAR_EXACT = 10 * math.log(19)


def periodic(alpha1, alpha2=2.0):
    return DynamicsSpec.from_strings([f"-{alpha1}*x1 + x2", f"-(1 + 0.9*sin(t))*x1 - {alpha2}*x2"])


def net_for(dyn, lo=-1.0, hi=1.0, t=(0.0, 0.0), samples=256):
    return build_network(dyn, Region.box(dyn.n, lo, hi, t), samples)


def test_frozen_oracle_values():
    v, _ = max_half_logderiv()
    assert v == pytest.approx(HALF_LOGDERIV_MAX, abs=1e-12)
    assert HALF_LOGDERIV_MAX == pytest.approx(HALF_LOGDERIV_EXACT, abs=1e-8)


class TestConditionII:
    @pytest.mark.parametrize("alpha,ok", [(1.0, False), (1.1, True), (1.04, True), (0.5, False)])
    def test_periodic_asymmetry(self, alpha, ok):
        dyn = periodic(alpha)
        res = check_condition_ii(net_for(dyn, t=TWO_PI), dyn)
        assert res.satisfied is ok
        # sampled margins can only be more optimistic than the exact one
        assert res.margin(1) >= alpha - HALF_LOGDERIV_EXACT - 1e-12
        assert res.margin(1) == pytest.approx(alpha - HALF_LOGDERIV_EXACT, abs=2e-3)

    def test_witness_for_violation(self):
        dyn = periodic(1.0)
        res = check_condition_ii(net_for(dyn, t=TWO_PI), dyn)
        (w,) = res.witnesses
        assert w["node"] == 1 and w["reason"] == "rate below asymmetry growth"
        assert 0.45 * math.cos(w["t"]) / (1 + 0.9 * math.sin(w["t"])) > 1.0

    def test_neighbour_sees_inverse_asymmetry(self):
        # node 2 uses bdot21/b21 = -bdot12/b12
        dyn = periodic(2.0, 0.5)
        res = check_condition_ii(net_for(dyn, t=TWO_PI), dyn)
        assert res.nodes[0].satisfied and not res.nodes[1].satisfied
        assert res.logderiv["1,2"] == "0.9 * cos(t)"

    def test_constant_asymmetries_reduce_to_positive_rates(self, triad, omega_box):
        res = check_condition_ii(build_network(triad, omega_box), triad)
        assert res.constant_shortcut and res.satisfied

    def test_nonpositive_rate(self):
        dyn = DynamicsSpec.from_strings(["x1 + x2", "-x1 - x2"])
        res = check_condition_ii(net_for(dyn), dyn)
        assert not res.satisfied and res.witnesses[0]["reason"] == "alpha not positive"

    def test_resampling(self):
        dyn = periodic(1.1)
        net = net_for(dyn, t=TWO_PI, samples=16)
        assert check_condition_ii(net, dyn, samples=512, seed=3).satisfied


class TestLMI:
    def test_zero_dynamics_identity_metric_not_strict(self):
        dyn = DynamicsSpec.from_strings(["0", "0"], modules=[[1, 2]])
        net = net_for(dyn, samples=8)
        res = check_lmi(net, BlockMetric.identity([[1, 2]]), dyn)
        assert not res.satisfied and res.max_eig == 0.0

    def test_identity_metric_on_negative_definite_jacobian(self):
        dyn = DynamicsSpec.from_strings(["-x1 + x2", "-x1 - x2"], modules=[[1, 2]])
        res = check_lmi(net_for(dyn, samples=8), BlockMetric.identity([[1, 2]]), dyn)
        assert res.satisfied and res.max_eig == pytest.approx(-2.0)

    @pytest.mark.parametrize("scale", [1e-6, 1.0, 1e6])
    def test_scale_free(self, scale):
        dyn = DynamicsSpec.from_strings(["-x1 + x2", f"-{scale}*x1 - x2"])
        net = net_for(dyn, samples=8)
        res = check_lmi(net, build_chain_metric(decompose_chains(net).chains[0], net), dyn)
        assert res.satisfied and res.max_eig_normalized == pytest.approx(-2.0 * min(scale, 1) / max(scale, 1))

    def test_monotone_in_rates(self):
        eigs = []
        for a in (0.1, 0.5, 1.0, 2.0):
            dyn = DynamicsSpec.from_strings([f"-{a}*x1 + x2", f"-3*x1 - {a}*x2 + x3", f"-x2 - {a}*x3"])
            net = net_for(dyn, samples=16)
            m = build_chain_metric(decompose_chains(net).chains[0], net)
            eigs.append(check_lmi(net, m, dyn).max_eig)
        assert all(x > y for x, y in zip(eigs, eigs[1:]))

    def test_periodic_chain_certificate(self):
        dyn = periodic(1.1)
        net = net_for(dyn, t=TWO_PI)
        res = check_lmi(net, build_chain_metric(decompose_chains(net).chains[0], net), dyn)
        assert res.satisfied and res.diagonal


@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
def test_constant_asymmetry_lmi_iff_positive_rates(seed, n):
    rng = np.random.default_rng(seed)
    pairs = random_tree_pairs(n, rng)
    alphas = [float(v) for v in rng.choice([-1.0, 1.0], n, p=[0.3, 0.7]) * rng.uniform(0.1, 3, n)]
    coupling = {}
    for p, c in pairs:
        k, b = float(rng.uniform(0.5, 2)), float(rng.uniform(0.2, 5))
        coupling[(p, c)], coupling[(c, p)] = k, -b * k
    dyn = chain_system(n, pairs, alphas, {}, coupling, factor="1.2 + sin(t)")
    net = net_for(dyn, t=(0, 5), samples=32)
    (c,) = decompose_chains(net).chains
    assert check_lmi(net, build_chain_metric(c, net), dyn).satisfied == all(a > 0 for a in alphas)
    assert check_condition_ii(net, dyn).satisfied == all(a > 0 for a in alphas)


class TestAveraged:
    def test_window_threshold(self):
        r5 = averaged_jacobian_check("1 + 0.9*sin(t)", 0.05, 5.0)
        r30 = averaged_jacobian_check("1 + 0.9*sin(t)", 0.05, 30.0)
        assert not r5.satisfied and r5.witness_t is not None
        assert r30.satisfied and r30.witness_t is None
        assert r5.T_star == pytest.approx(T_STAR_EXACT, abs=1e-6)
        assert r5.eps == pytest.approx(0.1, abs=1e-12) and r5.gamma == pytest.approx(1.9, abs=1e-12)

    def test_callable_input(self):
        r = averaged_jacobian_check(lambda t: 2 + np.cos(t), 1.0, 1.0, np.linspace(0, 20, 2001))
        assert r.satisfied and r.T_star == pytest.approx(math.log(3) / 2, abs=1e-9)

    @pytest.mark.parametrize("b,alpha,T", [("1 + 0.9*sin(t)", 0.0, 1.0), ("1 + 0.9*sin(t)", 1.0, 0.0),
                                           ("sin(t)", 1.0, 1.0), ("x1 + t", 1.0, 1.0)])
    def test_rejects(self, b, alpha, T):
        with pytest.raises(ValueError):
            averaged_jacobian_check(b, alpha, T)


class TestVerdict:
    def test_triad(self, triad, omega_box):
        rep = sign_stability_verdict(triad, omega_box)
        assert rep.verdict and rep.certificate and rep.constant_shortcut
        d = rep.to_dict()
        assert d["conditions"]["i"]["asymmetries"]["1,2"]["min"] == 2.0
        assert d["conditions"]["i"]["asymmetries"]["2,3"]["max"] == 2.0
        assert d["metrics"]["C1"]["1"]["weight"] == "b12"

    def test_ring(self):
        dyn = DynamicsSpec.from_strings(["-x1 + x3", "x1 - x2", "x2 - x3"])
        rep = sign_stability_verdict(dyn, Region.box(3, -1, 1))
        assert not rep.verdict and rep.condition_iii.cycles == ((1, 2, 3),)
        assert rep.certificate is None

    def test_mutual_activation(self):
        dyn = DynamicsSpec.from_strings(["-x1 + x2", "x1 - x2"])
        rep = sign_stability_verdict(dyn, Region.box(2, -1, 1))
        assert not rep.verdict and not rep.condition_i.satisfied

    def test_certificate_can_disagree_with_condition_ii(self):
        rep = sign_stability_verdict(periodic(1.1, 0.1), Region.box(2, -1, 1, TWO_PI))
        assert not rep.verdict and rep.certificate
        assert any("disagree" in n for n in rep.notes)

    def test_cascade_of_chains(self):
        f = ["-x1", "x1 - x2 + x3", "-x2 - x3", "x1 - x4 + x5", "-x4 - x5"]
        rep = sign_stability_verdict(DynamicsSpec.from_strings(f), Region.box(5, -1, 1))
        assert rep.verdict and rep.cascade.satisfied
        assert rep.cascade.cascade == (("x1", "C1"), ("x1", "C2"))

    def test_failing_singleton(self):
        f = ["0.5*x1", "x1 - x2"]
        rep = sign_stability_verdict(DynamicsSpec.from_strings(f), Region.box(2, -1, 1))
        assert not rep.verdict and rep.cascade.failing == ("x1",)

    def test_module_pipeline(self):
        f = ["-x1 + x2 + x3", "-x1 - x2", "-x1 - x3 + x4", "-x3 - x4"]
        dyn = DynamicsSpec.from_strings(f, modules=[[1, 2], [3, 4]])
        rep = sign_stability_verdict(dyn, Region.box(4, -1, 1))
        assert rep.modules is not None and rep.to_dict()["modules"]["compatibility"]["satisfied"]

    def test_modules_require_partition(self, triad, omega_box):
        with pytest.raises(ValueError):
            check_modules(build_network(triad, omega_box), triad)

    def test_decomposition_error_on_cycle_surfaces(self):
        with pytest.raises(DecompositionError):
            decompose_chains([(1, 2), (2, 3), (3, 1)])

    @given(st.integers(0, 2**32 - 1))
    def test_random_chains_certified(self, seed):
        ch = random_chain(np.random.default_rng(seed), n_max=6, time_varying=True)
        rep = sign_stability_verdict(ch.dyn, Region.box(ch.n, -1, 1, (0, 4)), 64)
        assert rep.verdict and rep.certificate and rep.constant_shortcut
