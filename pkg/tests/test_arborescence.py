from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onlinebn.arborescence import (
    ArborescenceSampler,
    ContractionState,
    WeightedDigraph,
    brute_force_log_count,
    count_arborescences,
    edge_inclusion_prob,
    edge_log_q_tensor,
    enumerate_arborescences,
    log_count_in_arborescences,
    log_det_root_minor,
    sample_arborescence,
    tree_expert_edge_weights,
)
from onlinebn.bayes_net import CptBank, SampleSet
from onlinebn.errors import NoArborescence, NonPositiveTotal


def random_digraph(seed: int, n: int, density: float = 1.0, spread: float = 3.0) -> WeightedDigraph:
    rng = np.random.default_rng(seed)
    lw = rng.uniform(-spread, spread, (n, n))
    lw[rng.random((n, n)) > density] = -np.inf
    return WeightedDigraph(n, lw, 1)


def exact_law(g: WeightedDigraph) -> dict[frozenset, float]:
    trees = enumerate_arborescences(g.n, g.root, set(g.arcs()))
    lw = np.array([sum(g.log_w[u - 1, v - 1] for u, v in t) for t in trees])
    p = np.exp(lw - np.logaddexp.reduce(lw))
    return dict(zip(trees, p))


def sampler_output_law(sampler: ArborescenceSampler) -> dict[frozenset, float]:
    """Walk every branch of the delete/contract decision tree and sum path probabilities."""
    law: Counter = Counter()
    g = sampler.g
    stack = [(ContractionState(frozenset({g.root}), frozenset()), 1.0)]
    while stack:
        st_, pr = stack.pop()
        arcs = st_.root_arcs(g.log_w)
        if not arcs:
            if len(st_.tree_vertices) == g.n:
                law[frozenset(st_.chosen)] += pr
            continue
        e = arcs[0]
        p_del = sampler.deletion_prob(st_, e)
        if p_del > 0:
            stack.append((ContractionState(st_.tree_vertices, st_.deleted | {e}, st_.chosen), pr * p_del))
        if p_del < 1:
            head = e[1]
            deleted = frozenset(a for a in st_.deleted if a[1] != head)
            stack.append((ContractionState(st_.tree_vertices | {head}, deleted, st_.chosen + (e,)), pr * (1 - p_del)))
    return dict(law)


def test_complete_graph_counts():
    assert np.exp(count_arborescences(WeightedDigraph.complete(3))) == pytest.approx(3)
    assert np.exp(count_arborescences(WeightedDigraph.complete(4))) == pytest.approx(16)
    assert count_arborescences(WeightedDigraph.complete(1)) == 0.0


def test_out_star_has_one_arborescence():
    g = WeightedDigraph.from_arcs(4, {(1, 2): 0.0, (1, 3): 0.0, (1, 4): 0.0})
    assert count_arborescences(g) == pytest.approx(0.0, abs=1e-12)


def test_unreachable_vertex_raises():
    g = WeightedDigraph.from_arcs(3, {(1, 2): 0.0, (3, 2): 0.0})
    with pytest.raises(NonPositiveTotal):
        count_arborescences(g)
    with pytest.raises(NoArborescence):
        ArborescenceSampler(g)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1), st.sampled_from([1.0, 0.7]))
def test_count_matches_enumeration(n, seed, density):
    g = random_digraph(seed, n, density)
    ref = brute_force_log_count(g)
    if not np.isfinite(ref):
        with pytest.raises(NonPositiveTotal):
            count_arborescences(g)
        return
    assert count_arborescences(g) == pytest.approx(ref, rel=1e-12, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 7), st.integers(0, 2**32 - 1))
def test_log_space_elimination_matches_slogdet(n, seed):
    g = random_digraph(seed, n, spread=2.0)
    w = np.exp(g.log_w)
    L = np.diag(w.sum(axis=0)) - w
    sign, ref = np.linalg.slogdet(L[1:, 1:])
    assert sign > 0
    assert count_arborescences(g) == pytest.approx(ref, rel=1e-10)


def test_extreme_weights_keep_relative_accuracy():
    # weights spanning ~1e+-300 would overflow a plain determinant
    g = random_digraph(7, 5, spread=700.0)
    assert count_arborescences(g) == pytest.approx(brute_force_log_count(g), rel=1e-12)


def test_batched_determinant_matches_loop():
    gs = [random_digraph(s, 5) for s in range(6)]
    lw = np.stack([g.log_w for g in gs])
    batched = log_det_root_minor(lw[:, 1:, 1:], lw[:, 0, 1:])
    assert np.allclose(batched, [count_arborescences(g) for g in gs], rtol=1e-13)


def test_in_arborescence_count_on_reversed_graph():
    g = random_digraph(3, 4)
    rev = WeightedDigraph(4, g.log_w.T.copy(), 1)
    assert log_count_in_arborescences(g) == pytest.approx(count_arborescences(rev), rel=1e-12)


def test_inclusion_probabilities():
    k3 = WeightedDigraph.complete(3)
    assert edge_inclusion_prob(k3, (1, 2)) == pytest.approx(2 / 3)
    assert edge_inclusion_prob(k3, (2, 1)) == 0.0
    path = WeightedDigraph.from_arcs(3, {(1, 2): 0.0, (2, 3): 0.0, (1, 3): 0.0})
    assert edge_inclusion_prob(path, (1, 2)) == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**32 - 1))
def test_inclusion_probability_matches_enumeration(n, seed):
    g = random_digraph(seed, n)
    law = exact_law(g)
    for arc in g.arcs():
        ref = sum(p for t, p in law.items() if arc in t)
        assert edge_inclusion_prob(g, arc) == pytest.approx(ref, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1), st.sampled_from([1.0, 0.8]))
def test_sampler_decision_tree_reproduces_exact_law(n, seed, density):
    g = random_digraph(seed, n, density)
    if not np.isfinite(brute_force_log_count(g)):
        return
    got = sampler_output_law(ArborescenceSampler(g))
    ref = exact_law(g)
    assert set(got) == set(ref)
    for t, p in ref.items():
        assert got[t] == pytest.approx(p, abs=1e-10)


def test_head_rescaling_leaves_law_unchanged():
    g = random_digraph(11, 4)
    h = g.scaled_into(3, 5.0)
    a, b = exact_law(g), exact_law(h)
    assert all(a[t] == pytest.approx(b[t], abs=1e-12) for t in a)
    sa, sb = sampler_output_law(ArborescenceSampler(g)), sampler_output_law(ArborescenceSampler(h))
    assert all(sa[t] == pytest.approx(sb[t], abs=1e-10) for t in sa)


def test_forced_path_sampled_with_certainty():
    g = WeightedDigraph.from_arcs(3, {(1, 2): 0.0, (2, 3): 0.0})
    rng = np.random.default_rng(0)
    assert all(sample_arborescence(g, rng).arcs == {(1, 2), (2, 3)} for _ in range(20))


def _empirical(g, m, seed):
    s = ArborescenceSampler(g)
    rng = np.random.default_rng(seed)
    c = Counter(s.sample(rng).arcs for _ in range(m))
    return {t: v / m for t, v in c.items()}


def test_k3_uniform_frequencies():
    emp = _empirical(WeightedDigraph.complete(3), 10**5, 1)
    assert len(emp) == 3
    assert all(abs(p - 1 / 3) <= 0.01 for p in emp.values())


def test_k3_doubled_weight_frequencies():
    lw = np.zeros((3, 3))
    lw[0, 1] = np.log(2)
    emp = _empirical(WeightedDigraph(3, lw), 10**5, 2)
    for t, p in emp.items():
        assert abs(p - (2 / 5 if (1, 2) in t else 1 / 5)) <= 0.01


def test_tree_expert_weights():
    rng = np.random.default_rng(0)
    est = SampleSet(2, 2, rng.integers(0, 2, (10, 2)))
    bank = CptBank(est, 1)
    online = SampleSet.from_rows([[1, 2]], 2, 2)
    assert np.all(tree_expert_edge_weights(bank, online, 0.7, t=1).log_w[[0, 1], [1, 0]] == 0)
    assert np.all(tree_expert_edge_weights(bank, online, 0.0).log_w[[0, 1], [1, 0]] == 0)
    g = tree_expert_edge_weights(bank, online, 0.7, t=2)
    assert g.log_w[0, 1] == pytest.approx(0.7 * np.log(bank.get(2, (1,)).table[0, 1]))
    assert g.log_w[1, 0] == pytest.approx(0.7 * np.log(bank.get(1, (2,)).table[1, 0]))
    Q = edge_log_q_tensor(bank, online.data)
    assert Q[0, 0, 1] == pytest.approx(np.log(bank.get(2, (1,)).table[0, 1]))
