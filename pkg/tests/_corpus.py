"""Shared fixtures: the chordal skeleton corpus and small random helpers."""

import numpy as np

from onlinebn.bayes_net import CptBank, SampleSet
from onlinebn.chordal_dp import NodeWeights
from onlinebn.graph_core import UndirectedGraph, complete_graph, figure_graph, path_graph, star_graph


def two_tree_5() -> UndirectedGraph:
    # triangles 123, 234, 345 glued along edges
    return UndirectedGraph(5, [(1, 2), (1, 3), (2, 3), (2, 4), (3, 4), (3, 5), (4, 5)])


def two_tree_6() -> UndirectedGraph:
    # fan around edge 2-3 plus a pendant triangle
    return UndirectedGraph(6, [(1, 2), (1, 3), (2, 3), (2, 4), (3, 4), (2, 5), (3, 5), (5, 6), (3, 6)])


def chordal_corpus() -> dict[str, UndirectedGraph]:
    return {
        "path3": path_graph(3),
        "path5": path_graph(5),
        "star5": star_graph(5),
        "star6": star_graph(6),
        "K3": complete_graph(3),
        "K4": complete_graph(4),
        "2tree5": two_tree_5(),
        "2tree6": two_tree_6(),
        "figure": figure_graph(),
        "forest": UndirectedGraph(6, [(1, 2), (2, 3), (1, 3), (4, 5)]),
    }


def random_node_weights(g: UndirectedGraph, d: int, seed: int, rows: int = 5, k: int = 2, eta: float = 1.0):
    """NodeWeights from a random bank and a random online stream of ``rows`` rows."""
    rng = np.random.default_rng(seed)
    est = SampleSet(g.n, k, rng.integers(0, k, (20, g.n)))
    online = SampleSet(g.n, k, rng.integers(0, k, (rows, g.n)))
    bank = CptBank(est, d, skeleton=g)
    return NodeWeights(bank, online, eta), bank, online
