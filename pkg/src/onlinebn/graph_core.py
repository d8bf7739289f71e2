"""Undirected skeletons, DAGs, chordality and rooted clique trees.

Vertices are labelled ``1..n`` everywhere. An undirected edge is stored as a
sorted pair ``(a, b)`` with ``a < b``; an arc (directed edge) is an ordered
pair ``(u, v)`` meaning ``u -> v``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

from .errors import NotChordal, TooLarge

Edge = tuple[int, int]
Arc = tuple[int, int]

DEFAULT_ENUMERATION_CAP = 2**20


def norm_edge(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class UndirectedGraph:
    n: int
    edges: frozenset[Edge]
    adj: Mapping[int, frozenset[int]] = field(init=False, repr=False, compare=False)

    def __init__(self, n: int, edges: Iterable[tuple[int, int]] = ()):
        normed = set()
        for u, v in edges:
            if u == v:
                raise ValueError(f"self-loop at vertex {u}")
            if not (1 <= u <= n and 1 <= v <= n):
                raise ValueError(f"edge ({u}, {v}) outside vertex range 1..{n}")
            e = norm_edge(u, v)
            if e in normed:
                raise ValueError(f"duplicate edge {e}")
            normed.add(e)
        adj: dict[int, set[int]] = {v: set() for v in range(1, n + 1)}
        for a, b in normed:
            adj[a].add(b)
            adj[b].add(a)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "edges", frozenset(normed))
        object.__setattr__(self, "adj", {v: frozenset(s) for v, s in adj.items()})

    @property
    def vertices(self) -> range:
        return range(1, self.n + 1)

    def neighbors(self, v: int) -> frozenset[int]:
        return self.adj[v]

    def sorted_edges(self) -> list[Edge]:
        return sorted(self.edges)

    def has_edge(self, u: int, v: int) -> bool:
        return norm_edge(u, v) in self.edges

    def induced_edges(self, vertices: Iterable[int]) -> set[Edge]:
        vs = set(vertices)
        return {e for e in self.edges if e[0] in vs and e[1] in vs}

    def components(self) -> list[list[int]]:
        """Connected components, each sorted, ordered by smallest vertex."""
        seen: set[int] = set()
        comps = []
        for s in self.vertices:
            if s in seen:
                continue
            comp, stack = [], [s]
            seen.add(s)
            while stack:
                u = stack.pop()
                comp.append(u)
                for w in self.adj[u]:
                    if w not in seen:
                        seen.add(w)
                        stack.append(w)
            comps.append(sorted(comp))
        return comps

    def max_degree(self) -> int:
        return max((len(a) for a in self.adj.values()), default=0)


@dataclass(frozen=True)
class Dag:
    n: int
    arcs: frozenset[Arc]

    def __init__(self, n: int, arcs: Iterable[Arc]):
        arcs = frozenset((int(u), int(v)) for u, v in arcs)
        for u, v in arcs:
            if u == v or not (1 <= u <= n and 1 <= v <= n):
                raise ValueError(f"invalid arc ({u}, {v}) for n={n}")
            if (v, u) in arcs:
                raise ValueError(f"both directions of edge {norm_edge(u, v)} present")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "arcs", arcs)
        if not is_acyclic(n, arcs):
            raise ValueError("arcs contain a directed cycle")

    def parents(self, v: int) -> tuple[int, ...]:
        return tuple(sorted(u for u, w in self.arcs if w == v))

    def indegree(self, v: int) -> int:
        return sum(1 for _, w in self.arcs if w == v)

    def max_indegree(self) -> int:
        return max((self.indegree(v) for v in range(1, self.n + 1)), default=0)

    def topological_order(self) -> list[int]:
        return topological_order(self.n, self.arcs)

    def skeleton(self) -> UndirectedGraph:
        return UndirectedGraph(self.n, self.arcs)

    def sorted_arcs(self) -> list[Arc]:
        return sorted(self.arcs)


def topological_order(n: int, arcs: Iterable[Arc]) -> list[int]:
    """Kahn's algorithm with smallest-label-first tie-break; raises on a cycle."""
    import heapq

    indeg = {v: 0 for v in range(1, n + 1)}
    out: dict[int, list[int]] = {v: [] for v in range(1, n + 1)}
    for u, v in arcs:
        indeg[v] += 1
        out[u].append(v)
    heap = [v for v, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        u = heapq.heappop(heap)
        order.append(u)
        for w in out[u]:
            indeg[w] -= 1
            if indeg[w] == 0:
                heapq.heappush(heap, w)
    if len(order) != n:
        raise ValueError("directed cycle")
    return order


def is_acyclic(n: int, arcs: Iterable[Arc]) -> bool:
    """True iff the digraph on ``1..n`` with the given arcs has no directed cycle."""
    out: dict[int, list[int]] = {}
    for u, v in arcs:
        out.setdefault(u, []).append(v)
    # iterative three-colour DFS
    state: dict[int, int] = {}
    for s in range(1, n + 1):
        if state.get(s):
            continue
        stack = [(s, iter(out.get(s, ())))]
        state[s] = 1
        while stack:
            u, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                state[u] = 2
                stack.pop()
            elif state.get(nxt) == 1:
                return False
            elif not state.get(nxt):
                state[nxt] = 1
                stack.append((nxt, iter(out.get(nxt, ()))))
    return True


def validate_partial_orientation(g: UndirectedGraph, partial: Iterable[Arc]) -> dict[Edge, Arc]:
    """Turn a collection of arcs into an edge -> arc map, checking it against ``g``."""
    out: dict[Edge, Arc] = {}
    for u, v in partial:
        e = norm_edge(u, v)
        if e not in g.edges:
            raise ValueError(f"arc ({u}, {v}) is not an edge of the skeleton")
        if e in out:
            raise ValueError(f"edge {e} oriented twice")
        out[e] = (u, v)
    return out


# ---------------------------------------------------------------------------
# chordality


def max_cardinality_search(g: UndirectedGraph) -> list[int]:
    """Visit order of maximum-cardinality search (ties -> smallest label)."""
    weight = {v: 0 for v in g.vertices}
    visited: list[int] = []
    unvisited = set(g.vertices)
    while unvisited:
        v = min(unvisited, key=lambda u: (-weight[u], u))
        visited.append(v)
        unvisited.remove(v)
        for w in g.adj[v]:
            if w in unvisited:
                weight[w] += 1
    return visited


def is_chordal(g: UndirectedGraph) -> tuple[bool, list[int] | None]:
    """Chordality test via MCS plus the Tarjan-Yannakakis fill check.

    Returns ``(True, peo)`` with a perfect elimination ordering on success,
    ``(False, None)`` otherwise.
    """
    visit = max_cardinality_search(g)
    peo = visit[::-1]
    pos = {v: i for i, v in enumerate(peo)}
    for v in peo:
        later = [w for w in g.adj[v] if pos[w] > pos[v]]
        if not later:
            continue
        first = min(later, key=pos.__getitem__)
        for w in later:
            if w != first and w not in g.adj[first]:
                return False, None
    return True, peo


def maximal_cliques_chordal(g: UndirectedGraph, peo: list[int]) -> list[frozenset[int]]:
    pos = {v: i for i, v in enumerate(peo)}
    cands = []
    for v in peo:
        cands.append(frozenset({v} | {w for w in g.adj[v] if pos[w] > pos[v]}))
    maximal = [c for c in set(cands) if not any(c < o for o in cands)]
    return sorted(maximal, key=lambda c: tuple(sorted(c)))


@dataclass(frozen=True)
class CliqueTree:
    """Rooted clique tree of one connected chordal graph (or component)."""

    cliques: tuple[frozenset[int], ...]
    tree_edges: tuple[tuple[int, int], ...]
    root: int
    parent: tuple[int | None, ...]
    children: tuple[tuple[int, ...], ...]
    separators: tuple[frozenset[int], ...]
    subtree_vertices: tuple[frozenset[int], ...]
    link_edges: tuple[tuple[Edge, ...], ...]

    def __len__(self) -> int:
        return len(self.cliques)

    def postorder(self) -> list[int]:
        order, stack = [], [(self.root, False)]
        while stack:
            c, done = stack.pop()
            if done:
                order.append(c)
                continue
            stack.append((c, True))
            for ch in reversed(self.children[c]):
                stack.append((ch, False))
        return order

    def preorder(self) -> list[int]:
        order, stack = [], [self.root]
        while stack:
            c = stack.pop()
            order.append(c)
            stack.extend(reversed(self.children[c]))
        return order

    @property
    def vertices(self) -> frozenset[int]:
        return self.subtree_vertices[self.root]


def _root_tree(
    g: UndirectedGraph, cliques: list[frozenset[int]], tree_edges: list[tuple[int, int]], root: int
) -> CliqueTree:
    m = len(cliques)
    nbrs: dict[int, list[int]] = {i: [] for i in range(m)}
    for a, b in tree_edges:
        nbrs[a].append(b)
        nbrs[b].append(a)
    parent: list[int | None] = [None] * m
    children: list[list[int]] = [[] for _ in range(m)]
    order, seen, stack = [], {root}, [root]
    while stack:
        c = stack.pop()
        order.append(c)
        for o in sorted(nbrs[c]):
            if o not in seen:
                seen.add(o)
                parent[o] = c
                children[c].append(o)
                stack.append(o)
    if len(seen) != m:
        raise ValueError("clique graph is disconnected; build one tree per component")
    sub: list[frozenset[int]] = [frozenset()] * m
    for c in reversed(order):
        acc = set(cliques[c])
        for ch in children[c]:
            acc |= sub[ch]
        sub[c] = frozenset(acc)
    seps = [
        frozenset() if parent[c] is None else cliques[c] & cliques[parent[c]] for c in range(m)
    ]
    links = []
    for c in range(m):
        lk = {
            norm_edge(u, w)
            for u in cliques[c]
            for w in g.adj[u]
            if w in sub[c]
        }
        links.append(tuple(sorted(lk)))
    return CliqueTree(
        cliques=tuple(cliques),
        tree_edges=tuple(sorted(tree_edges)),
        root=root,
        parent=tuple(parent),
        children=tuple(tuple(ch) for ch in children),
        separators=tuple(seps),
        subtree_vertices=tuple(sub),
        link_edges=tuple(links),
    )


def _clique_spanning_tree(cliques: list[frozenset[int]]) -> list[tuple[int, int]]:
    # Kruskal on the clique-intersection graph, heaviest first, ties by index
    cand = []
    for i, j in itertools.combinations(range(len(cliques)), 2):
        w = len(cliques[i] & cliques[j])
        if w:
            cand.append((-w, i, j))
    cand.sort()
    parent = list(range(len(cliques)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    chosen = []
    for _, i, j in cand:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            chosen.append((i, j))
    return chosen


def build_clique_tree(g: UndirectedGraph, root: int | None = None) -> CliqueTree:
    """Rooted clique tree of a connected chordal graph.

    :param root: index into the (label-sorted) list of maximal cliques; the
        default picks clique 0.
    """
    ok, peo = is_chordal(g)
    if not ok:
        raise NotChordal("graph is not chordal")
    comps = g.components()
    if len(comps) > 1:
        raise ValueError("graph is disconnected; use build_clique_forest")
    cliques = maximal_cliques_chordal(g, peo)
    tree_edges = _clique_spanning_tree(cliques)
    r = 0 if root is None else root
    if not 0 <= r < len(cliques):
        raise ValueError(f"root index {r} out of range")
    return _root_tree(g, cliques, tree_edges, r)


def build_clique_forest(g: UndirectedGraph, roots: Mapping[int, int] | None = None) -> list[CliqueTree]:
    """One rooted clique tree per connected component.

    ``roots`` optionally maps a component index (components ordered by their
    smallest vertex) to a root clique index within that component.
    """
    ok, peo = is_chordal(g)
    if not ok:
        raise NotChordal("graph is not chordal")
    all_cliques = maximal_cliques_chordal(g, peo)
    forest = []
    for ci, comp in enumerate(g.components()):
        cs = set(comp)
        cliques = [c for c in all_cliques if c <= cs]
        tree_edges = _clique_spanning_tree(cliques)
        r = (roots or {}).get(ci, 0)
        forest.append(_root_tree(g, cliques, tree_edges, r))
    return forest


def clique_tree_violations(g: UndirectedGraph, tree: CliqueTree, component: Iterable[int] | None = None) -> list[str]:
    """Checks a clique tree against ``g``; returns human-readable violations."""
    problems = []
    comp = set(component) if component is not None else set(g.vertices)
    sub_edges = g.induced_edges(comp)
    cliques = tree.cliques
    for i, c in enumerate(cliques):
        for a, b in itertools.combinations(sorted(c), 2):
            if not g.has_edge(a, b):
                problems.append(f"clique {i} is not complete: missing {a}-{b}")
        for v in comp - c:
            if all(g.has_edge(v, u) for u in c):
                problems.append(f"clique {i} is not maximal: {v} extends it")
    covered = set()
    for c in cliques:
        covered |= {e for e in sub_edges if e[0] in c and e[1] in c}
    if covered != sub_edges:
        problems.append(f"edges not covered: {sorted(sub_edges - covered)}")
    if set().union(*cliques) != comp:
        problems.append("cliques do not cover the vertex set")
    nbrs: dict[int, set[int]] = {i: set() for i in range(len(cliques))}
    for a, b in tree.tree_edges:
        nbrs[a].add(b)
        nbrs[b].add(a)
    if len(tree.tree_edges) != len(cliques) - 1:
        problems.append("tree edge count is not #cliques - 1")
    for v in comp:
        holders = {i for i, c in enumerate(cliques) if v in c}
        start = next(iter(holders))
        seen, stack = {start}, [start]
        while stack:
            x = stack.pop()
            for y in nbrs[x]:
                if y in holders and y not in seen:
                    seen.add(y)
                    stack.append(y)
        if seen != holders:
            problems.append(f"cliques containing {v} are not a connected subtree")
    for i in range(len(cliques)):
        p = tree.parent[i]
        expect = frozenset() if p is None else cliques[i] & cliques[p]
        if tree.separators[i] != expect:
            problems.append(f"separator of clique {i} wrong")
        sub = tree.subtree_vertices[i]
        lk = {e for e in g.edges if (e[0] in cliques[i] and e[1] in sub) or (e[1] in cliques[i] and e[0] in sub)}
        if set(tree.link_edges[i]) != lk:
            problems.append(f"link set of clique {i} wrong")
    return problems


# ---------------------------------------------------------------------------
# brute-force orientation enumeration (test oracle)


def iter_orientations(edges: list[Edge]) -> Iterator[tuple[Arc, ...]]:
    """All 2^m orientations of ``edges``; bit i set means edge i is reversed."""
    m = len(edges)
    for mask in range(1 << m):
        yield tuple((b, a) if mask >> i & 1 else (a, b) for i, (a, b) in enumerate(edges))


def enumerate_orientations(
    g: UndirectedGraph,
    d: int,
    partial: Iterable[Arc] = (),
    edge_subset: Iterable[tuple[int, int]] | None = None,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> list[frozenset[Arc]]:
    """Every acyclic orientation of ``edge_subset`` with indegree <= d that
    agrees with ``partial`` on shared edges.

    Plain exhaustive enumeration over all 2^m orientations followed by a
    DFS cycle filter; intended as a correctness oracle.
    """
    edges = sorted(g.edges if edge_subset is None else {norm_edge(*e) for e in edge_subset})
    for e in edges:
        if e not in g.edges:
            raise ValueError(f"{e} is not an edge of the graph")
    fixed = validate_partial_orientation(g, partial)
    if (1 << len(edges)) > cap:
        raise TooLarge(f"2^{len(edges)} orientations exceed the enumeration cap {cap}")
    out = []
    for arcs in iter_orientations(edges):
        if any(e in fixed and fixed[e] != a for e, a in zip(edges, arcs)):
            continue
        indeg: dict[int, int] = {}
        for _, v in arcs:
            indeg[v] = indeg.get(v, 0) + 1
        if indeg and max(indeg.values()) > d:
            continue
        if not is_acyclic(g.n, arcs):
            continue
        out.append(frozenset(arcs))
    return out


# ---------------------------------------------------------------------------
# text formats


def read_graph(path) -> UndirectedGraph:
    with open(path) as fh:
        return parse_graph(fh.read())


def parse_graph(text: str) -> UndirectedGraph:
    lines = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ValueError("empty graph file")
    n, m = int(lines[0][0]), int(lines[0][1])
    body = lines[1:]
    if len(body) != m:
        raise ValueError(f"header says {m} edges, found {len(body)}")
    return UndirectedGraph(n, [(int(a), int(b)) for a, b in body])


def format_graph(g: UndirectedGraph) -> str:
    lines = [f"{g.n} {len(g.edges)}"] + [f"{a} {b}" for a, b in g.sorted_edges()]
    return "\n".join(lines) + "\n"


def write_graph(g: UndirectedGraph, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_graph(g))


def format_orientation(arcs: Iterable[Arc]) -> str:
    return "".join(f"{u} {v}\n" for u, v in sorted(arcs))


def parse_orientation(text: str) -> list[Arc]:
    return [(int(a), int(b)) for a, b in (ln.split() for ln in text.splitlines() if ln.strip())]


# ---------------------------------------------------------------------------
# fixtures


def path_graph(n: int) -> UndirectedGraph:
    return UndirectedGraph(n, [(i, i + 1) for i in range(1, n)])


def star_graph(n: int) -> UndirectedGraph:
    return UndirectedGraph(n, [(1, i) for i in range(2, n + 1)])


def complete_graph(n: int) -> UndirectedGraph:
    return UndirectedGraph(n, itertools.combinations(range(1, n + 1), 2))


def cycle_graph(n: int) -> UndirectedGraph:
    return UndirectedGraph(n, [(i, i + 1) for i in range(1, n)] + [(1, n)])


FIGURE_LABELS = "ABCDEFG"


def figure_graph() -> UndirectedGraph:
    """7-vertex chordal example with maximal cliques ABC, ACDE, DEG, EF.

    Vertices A..G map to 1..7. The clique structure follows the worked
    example (cliques ACDE and DEG appear as reference cliques there).
    """
    cliques = ["ABC", "ACDE", "DEG", "EF"]
    idx = {c: i + 1 for i, c in enumerate(FIGURE_LABELS)}
    edges = set()
    for cl in cliques:
        for a, b in itertools.combinations(cl, 2):
            edges.add(norm_edge(idx[a], idx[b]))
    return UndirectedGraph(7, edges)
