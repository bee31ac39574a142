import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import path_product_weights
from signstab.generators import chain_system, random_chain
from signstab.graph import build_network, decompose_chains
from signstab.metric import (
    BlockMetric,
    MetricError,
    assemble_cascade_report,
    build_chain_metric,
    check_block_compatibility,
    check_block_condition_ii,
)
from signstab.model import DynamicsSpec, Region
from signstab.verify import check_lmi, lmi_matrices


def chain_net(f, lo=-1.0, hi=1.0, t=(0.0, 0.0), samples=64):
    dyn = DynamicsSpec.from_strings(f)
    net = build_network(dyn, Region.box(dyn.n, lo, hi, t), samples)
    return dyn, net, decompose_chains(net)


# path 1-2-3 with b12 = 2, b32 = 3; the star adds x4 on x2 with b42 = 5
PATH = ["-x1 + x2", "-2*x1 - x2 + 3*x3", "-x2 - x3"]
STAR = ["-x1 + x2", "-2*x1 - x2 + 3*x3 + 5*x4", "-x2 - x3", "-x2 - x4"]


class TestChainMetric:
    def test_path_weights(self):
        _, net, dec = chain_net(PATH)
        m = build_chain_metric(dec.chains[0], net)
        assert [m.weight_text(k) for k in (1, 2, 3)] == ["b12", "1", "b32"]
        X, T = net.X[:1], net.T[:1]
        assert m.evaluate(X, T, 3).tolist() == [[2.0, 1.0, 3.0]]

    def test_star_weights(self):
        _, net, dec = chain_net(STAR)
        m = build_chain_metric(dec.chains[0], net)
        assert [m.weight_text(k) for k in (1, 2, 3, 4)] == ["b12", "1", "b32", "b42"]
        assert m.evaluate(net.X[:1], net.T[:1], 4).tolist() == [[2.0, 1.0, 3.0, 5.0]]
        assert m.to_dict()["4"]["weight"] == "b42"

    def test_deeper_weights_multiply_along_path(self):
        # 1-2-3-4 path: d4 = b32 * b43
        f = ["-x1 + x2", "-2*x1 - x2 + x3", "-4*x2 - x3 + x4", "-0.5*x3 - x4"]
        _, net, dec = chain_net(f)
        m = build_chain_metric(dec.chains[0], net)
        assert m.weight_text(4) == "b32*b43"
        assert m.evaluate(net.X[:1], net.T[:1], 4)[0].tolist() == [2.0, 1.0, 0.25, 0.5]

    def test_two_node_lmi_is_diagonal(self):
        # b = 3, alpha = 1, a12 = 2: L = diag(-6, -2)
        A = np.array([[[-1.0, 2.0], [-6.0, -1.0]]])
        L = lmi_matrices(A, np.array([[3.0, 1.0]]), np.zeros((1, 2)))
        assert L[0].tolist() == [[-6.0, 0.0], [0.0, -2.0]]

    def test_two_node_lmi_via_network(self):
        dyn, net, dec = chain_net(["-x1 + 2*x2", "-6*x1 - x2"])
        m = build_chain_metric(dec.chains[0], net)
        res = check_lmi(net, m, dyn)
        assert res.satisfied and res.diagonal
        assert res.max_eig == pytest.approx(-2.0, rel=1e-12)
        assert res.scale == 3.0 and res.max_eig_normalized == pytest.approx(-2.0 / 3.0)

    def test_time_varying_weight_derivative(self):
        dyn, net, dec = chain_net(["-x1 + x2", "-(1 + 0.9*sin(t))*x1 - x2"], t=(0.0, 6.3))
        m = build_chain_metric(dec.chains[0], net)
        dd = m.evaluate_derivative(dyn.f, net.X, net.T, 2)
        np.testing.assert_allclose(dd[:, 0], 0.9 * np.cos(net.T), atol=1e-14)
        assert np.all(dd[:, 1] == 0.0)

    def test_rejects_non_chain(self):
        _, net, dec = chain_net(PATH)
        bad = type(dec.chains[0])(1, (1, 3), {3: 1})
        with pytest.raises(MetricError):
            build_chain_metric(bad, net)


@given(st.integers(0, 2**32 - 1), st.booleans())
def test_weights_match_path_products(seed, tv):
    ch = random_chain(np.random.default_rng(seed), n_max=8, time_varying=tv)
    net = build_network(ch.dyn, Region.box(ch.n, -1, 1, (0, 3)), 8)
    (c,) = decompose_chains(net).chains
    m = build_chain_metric(c, net)
    got = dict(zip(m.order, m.evaluate(net.X[:1], net.T[:1], ch.n)[0]))
    want = path_product_weights([tuple(p) for p in ch.pairs], ch.asym, ch.n)
    for k in want:
        assert got[k] == pytest.approx(want[k], rel=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_offdiagonal_terms_cancel(seed):
    ch = random_chain(np.random.default_rng(seed), n_max=8, time_varying=True)
    net = build_network(ch.dyn, Region.box(ch.n, -1, 1, (0, 5)), 32)
    (c,) = decompose_chains(net).chains
    res = check_lmi(net, build_chain_metric(c, net), ch.dyn)
    assert res.diagonal and res.offdiag <= 1e-12
    # constant asymmetries: the metric certifies exactly when every rate is positive
    assert res.satisfied


@given(st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
def test_verdict_independent_of_labelling(seed, pseed):
    rng = np.random.default_rng(seed)
    ch = random_chain(rng, n_max=6)
    perm = [int(v) + 1 for v in np.random.default_rng(pseed).permutation(ch.n)]
    relabel = dict(zip(range(1, ch.n + 1), perm))
    coupling = {(relabel[i], relabel[j]): a for (i, j), a in ch.coupling.items()}
    alphas = [0.0] * ch.n
    for k, a in enumerate(ch.alphas, start=1):
        alphas[relabel[k] - 1] = a
    dyn2 = chain_system(ch.n, [], alphas, {}, coupling)
    results, weights = [], []
    for dyn, mapping in ((ch.dyn, {k: k for k in relabel}), (dyn2, relabel)):
        net = build_network(dyn, Region.box(ch.n, -1, 1), 4)
        (c,) = decompose_chains(net).chains
        m = build_chain_metric(c, net)
        w = dict(zip(m.order, m.evaluate(net.X[:1], net.T[:1], ch.n)[0]))
        weights.append(np.array([w[mapping[k]] for k in range(1, ch.n + 1)]))
        results.append(check_lmi(net, m, dyn))
    ratio = weights[0] / weights[1]
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)
    assert results[0].satisfied == results[1].satisfied
    assert results[0].max_eig_normalized == pytest.approx(results[1].max_eig_normalized, rel=1e-9)


class TestBlocks:
    def test_identity_metrics_commute(self):
        A = {(0, 1): np.arange(6.0).reshape(2, 3)}
        res = check_block_compatibility([np.eye(2), np.eye(3)], A)
        assert res.satisfied and res.detail["max_residual"] == 0.0

    def test_incompatible_metrics(self):
        A = {(0, 1): np.ones((5, 2, 2))}
        res = check_block_compatibility([np.diag([1.0, 2.0]), np.eye(2)], A)
        assert not res.satisfied and res.witnesses[0]["blocks"] == [0, 1]

    def test_shape_mismatch(self):
        with pytest.raises(MetricError):
            check_block_compatibility([np.eye(2), np.eye(2)], {(0, 1): np.ones((2, 3))})

    @pytest.mark.parametrize("s,ok", [(0.0, True), (1.9, True), (3.0, False)])
    def test_block_condition_ii(self, s, ok):
        A = -np.eye(2)
        res = check_block_condition_ii(np.eye(2), A, s)
        assert res.satisfied is ok
        assert res.detail["max_eig"] == pytest.approx(-2.0 + s)

    def test_block_condition_ii_per_sample(self):
        A = np.stack([-np.eye(2), -0.1 * np.eye(2)])
        res = check_block_condition_ii(np.diag([2.0, 1.0]), A, np.array([0.0, 0.5]))
        assert not res.satisfied and res.witnesses[0]["sample"] == 1

    @pytest.mark.parametrize("M", [np.array([[1.0, 2.0], [0.0, 1.0]]), np.diag([1.0, -1.0]),
                                   np.eye(3)])
    def test_block_metric_validation(self, M):
        with pytest.raises(MetricError):
            BlockMetric(((1, 2),), (M,))

    def test_identity_factory(self):
        bm = BlockMetric.identity([[1], [2, 3]])
        assert bm.modules == ((1,), (2, 3)) and bm.mats[1].tolist() == [[1, 0], [0, 1]]


class TestCascade:
    def test_report(self):
        f = ["-x1", "x1 - x2 + x3", "-x2 - x3", "x1 - x4 + x5", "-x4 - x5"]
        _, net, dec = chain_net(f)
        metrics = {c.label: build_chain_metric(c, net) for c in dec.chains}
        rep = assemble_cascade_report(dec, metrics, {"C1": True, "C2": True, "x1": True})
        assert rep.satisfied and rep.cascade == (("x1", "C1"), ("x1", "C2"))
        rep = assemble_cascade_report(dec, metrics, {"C1": True, "C2": False, "x1": True})
        assert not rep.satisfied and rep.failing == ("C2",)
        assert rep.to_dict()["failing"] == ["C2"]

    def test_missing_metric(self):
        _, net, dec = chain_net(PATH)
        with pytest.raises(MetricError):
            assemble_cascade_report(dec, {}, {})
