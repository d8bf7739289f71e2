import itertools

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onlinebn.errors import NotChordal, TooLarge
from onlinebn.graph_core import (
    Dag,
    UndirectedGraph,
    build_clique_forest,
    build_clique_tree,
    clique_tree_violations,
    complete_graph,
    cycle_graph,
    enumerate_orientations,
    figure_graph,
    format_graph,
    is_acyclic,
    is_chordal,
    parse_graph,
    parse_orientation,
    format_orientation,
    path_graph,
    star_graph,
    topological_order,
    validate_partial_orientation,
)

from _corpus import chordal_corpus


graphs = st.integers(1, 7).flatmap(
    lambda n: st.sets(st.sampled_from(list(itertools.combinations(range(1, n + 1), 2)) or [(0, 0)]), max_size=12).map(
        lambda es: UndirectedGraph(n, [e for e in es if e != (0, 0)])
    )
)


def test_graph_rejects_bad_edges():
    with pytest.raises(ValueError):
        UndirectedGraph(3, [(1, 1)])
    with pytest.raises(ValueError):
        UndirectedGraph(3, [(1, 4)])
    with pytest.raises(ValueError):
        UndirectedGraph(3, [(1, 2), (2, 1)])


def test_dag_rejects_cycle_and_reports_parents():
    with pytest.raises(ValueError):
        Dag(3, [(1, 2), (2, 3), (3, 1)])
    g = Dag(4, [(3, 4), (1, 4), (2, 3)])
    assert g.parents(4) == (1, 3)
    assert g.max_indegree() == 2
    assert topological_order(4, g.arcs) == [1, 2, 3, 4]


def test_topological_order_raises_on_cycle():
    with pytest.raises(ValueError):
        topological_order(2, [(1, 2), (2, 1)])


def test_partial_orientation_validation():
    g = path_graph(3)
    assert validate_partial_orientation(g, [(2, 1)]) == {(1, 2): (2, 1)}
    with pytest.raises(ValueError):
        validate_partial_orientation(g, [(1, 3)])
    with pytest.raises(ValueError):
        validate_partial_orientation(g, [(1, 2), (2, 1)])


@settings(max_examples=150, deadline=None)
@given(graphs)
def test_chordality_agrees_with_networkx(g):
    G = nx.Graph()
    G.add_nodes_from(g.vertices)
    G.add_edges_from(g.edges)
    assert is_chordal(g)[0] == nx.is_chordal(G)


def test_cycles_are_not_chordal():
    assert not is_chordal(cycle_graph(4))[0]
    assert is_chordal(cycle_graph(3))[0]
    with pytest.raises(NotChordal):
        build_clique_tree(cycle_graph(5))


@pytest.mark.parametrize("name", sorted(chordal_corpus()))
def test_clique_trees_valid_for_every_root(name):
    g = chordal_corpus()[name]
    for comp_idx, comp in enumerate(g.components()):
        trees = build_clique_forest(g)
        for r in range(len(trees[comp_idx])):
            tree = build_clique_forest(g, {comp_idx: r})[comp_idx]
            assert clique_tree_violations(g, tree, comp) == []


@settings(max_examples=100, deadline=None)
@given(graphs)
def test_clique_forest_valid_on_random_chordal_graphs(g):
    if not is_chordal(g)[0]:
        return
    for comp, tree in zip(g.components(), build_clique_forest(g)):
        assert clique_tree_violations(g, tree, comp) == []
        assert len(tree.preorder()) == len(tree.postorder()) == len(tree)


def test_figure_graph_cliques():
    tree = build_clique_tree(figure_graph())
    got = sorted("".join("ABCDEFG"[v - 1] for v in sorted(c)) for c in tree.cliques)
    assert got == ["ABC", "ACDE", "DEG", "EF"]


def test_enumeration_spot_values():
    assert len(enumerate_orientations(path_graph(3), 1)) == 3
    assert len(enumerate_orientations(complete_graph(3), 1)) == 0
    assert len(enumerate_orientations(complete_graph(3), 2)) == 6
    assert len(enumerate_orientations(complete_graph(4), 3)) == 24
    # a star with d=1 must have the centre as the unique source
    assert len(enumerate_orientations(star_graph(5), 1)) == 5


def test_enumeration_respects_partial_and_cap():
    outs = enumerate_orientations(complete_graph(3), 2, partial=[(2, 1)])
    assert len(outs) == 3 and all((2, 1) in o for o in outs)
    with pytest.raises(TooLarge):
        enumerate_orientations(complete_graph(7), 6, cap=2**10)


@settings(max_examples=60, deadline=None)
@given(graphs, st.integers(0, 3))
def test_enumeration_matches_networkx_filter(g, d):
    if len(g.edges) > 10:
        return
    got = set(enumerate_orientations(g, d))
    ref = set()
    edges = sorted(g.edges)
    for bits in itertools.product((0, 1), repeat=len(edges)):
        D = nx.DiGraph()
        D.add_nodes_from(g.vertices)
        D.add_edges_from((b, a) if x else (a, b) for (a, b), x in zip(edges, bits))
        if nx.is_directed_acyclic_graph(D) and max((D.in_degree(v) for v in D), default=0) <= d:
            ref.add(frozenset(D.edges))
    assert got == ref


def test_is_acyclic():
    assert is_acyclic(3, [(1, 2), (2, 3)])
    assert not is_acyclic(3, [(1, 2), (2, 3), (3, 1)])


def test_graph_and_orientation_text_round_trip():
    g = figure_graph()
    assert parse_graph(format_graph(g)) == g
    arcs = [(2, 1), (1, 3)]
    assert sorted(parse_orientation(format_orientation(arcs))) == sorted(arcs)
    with pytest.raises(ValueError):
        parse_graph("3 2\n1 2\n")
