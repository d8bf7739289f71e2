"""Weighted counting, sampling and maximisation over indegree-bounded acyclic
orientations of a chordal skeleton, by dynamic programming on a rooted clique
tree.

For a clique ``C`` with subtree vertex set ``V[T_C]`` the table entry for an
orientation ``O_C`` of the link set ``lnk(C) = E(C, V[T_C])`` is

    Table[C, O_C] = log sum_{O in AO_d(G[T_C]; O_C)} sum_{v in V[T_C]} wt(v, in_C(v, O))

where ``wt(v, S)`` is a log node weight. Child subtrees only interact with
``C`` through the edges between their separator and their own subtree, and
those edges are already oriented by ``O_C``; so each child contributes an
independent factor

    M_i(O_C) = logsumexp_{O' ~ O_C} ( Table[C_i, O'] - sum_{v in sep(C_i)} wt(v, in_{C_i}(v, O')) )

and ``Table[C, O_C] = sum_{v in C} wt(v, in_C(v, O_C)) + sum_i M_i(O_C)``.
The subtraction removes the separator vertices' partial weights computed
inside the child, which are replaced by their full-subtree weight at ``C``.
Everything lives in log space; a table may carry a trailing batch axis so one
pass serves many weight vectors (e.g. every online round at once).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Hashable

import numpy as np

from .errors import NotOrientable, TooLarge
from .graph_core import Arc, CliqueTree, Dag, Edge, UndirectedGraph, build_clique_forest

NEG_INF = -np.inf
DEFAULT_LINK_CAP = 24
TIE_TOL = 1e-12

WeightFn = Callable[[int, tuple[int, ...]], "float | np.ndarray"]


def link_orientations(edges: list[Edge], d: int) -> list[tuple[int, ...]]:
    """Acyclic orientations of ``edges`` with indegree <= d, as bit tuples.

    Bit 0 orients ``(a, b)`` as ``a -> b``. Output is in lexicographic order
    of the bit tuples.
    """
    m = len(edges)
    out: list[tuple[int, ...]] = []
    indeg: dict[int, int] = {}
    succ: dict[int, list[int]] = {}
    bits: list[int] = []

    def reaches(src: int, dst: int) -> bool:
        stack, seen = [src], {src}
        while stack:
            u = stack.pop()
            if u == dst:
                return True
            for w in succ.get(u, ()):
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return False

    def rec(i: int) -> None:
        if i == m:
            out.append(tuple(bits))
            return
        a, b = edges[i]
        for bit, (u, v) in ((0, (a, b)), (1, (b, a))):
            if indeg.get(v, 0) >= d or reaches(v, u):
                continue
            indeg[v] = indeg.get(v, 0) + 1
            succ.setdefault(u, []).append(v)
            bits.append(bit)
            rec(i + 1)
            bits.pop()
            succ[u].pop()
            indeg[v] -= 1

    rec(0)
    return out


def bits_to_arcs(edges: list[Edge] | tuple[Edge, ...], bits) -> list[Arc]:
    return [(b, a) if bit else (a, b) for (a, b), bit in zip(edges, bits)]


@dataclass
class _Clique:
    tree: int
    index: int
    vertices: tuple[int, ...]
    edges: tuple[Edge, ...]
    entries: np.ndarray  # (E, L) bits
    own_keys: np.ndarray  # (E, |C|) indices into the structure's key list
    sep_keys: np.ndarray  # (E, |sep|)
    children: list[int] = field(default_factory=list)  # global ids
    # grouping of this clique's entries by their restriction to the parent
    group_of_entry: np.ndarray | None = None
    group_order: np.ndarray | None = None
    group_starts: np.ndarray | None = None
    n_groups: int = 1
    # for each child (same order as children): parent entry -> child group (or n_groups = none)
    child_group: list[np.ndarray] = field(default_factory=list)


class ChordalStructure:
    """Pure combinatorial part of the DP for one skeleton and indegree bound."""

    def __init__(
        self,
        skeleton: UndirectedGraph,
        d: int,
        forest: list[CliqueTree] | None = None,
        link_cap: int = DEFAULT_LINK_CAP,
    ):
        self.skeleton = skeleton
        self.d = d
        self.link_cap = link_cap
        self.forest = forest if forest is not None else build_clique_forest(skeleton)
        self.keys: list[tuple[int, tuple[int, ...]]] = []
        self._key_id: dict[tuple[int, tuple[int, ...]], int] = {}
        self.cliques: list[_Clique] = []
        self.roots: list[int] = []
        self.orientable = True
        gid: dict[tuple[int, int], int] = {}
        for ti, tree in enumerate(self.forest):
            for c in range(len(tree)):
                gid[(ti, c)] = len(gid)
        self._gid = gid
        for ti, tree in enumerate(self.forest):
            for c in range(len(tree)):
                self.cliques.append(self._build_clique(ti, tree, c))
            self.roots.append(gid[(ti, tree.root)])
        for ti, tree in enumerate(self.forest):
            for c in range(len(tree)):
                node = self.cliques[gid[(ti, c)]]
                node.children = [gid[(ti, ch)] for ch in tree.children[c]]
                for ch in node.children:
                    self._link_child(node, self.cliques[ch])
        self.preorder = [gid[(ti, c)] for ti, tree in enumerate(self.forest) for c in tree.preorder()]
        self.postorder = [gid[(ti, c)] for ti, tree in enumerate(self.forest) for c in tree.postorder()]

    def _key(self, v: int, parents) -> int:
        k = (v, tuple(sorted(parents)))
        i = self._key_id.get(k)
        if i is None:
            i = self._key_id[k] = len(self.keys)
            self.keys.append(k)
        return i

    def _build_clique(self, ti: int, tree: CliqueTree, c: int) -> _Clique:
        edges = list(tree.link_edges[c])
        if len(edges) > self.link_cap:
            raise TooLarge(f"link set of clique {sorted(tree.cliques[c])} has {len(edges)} edges")
        entries = link_orientations(edges, self.d)
        verts = tuple(sorted(tree.cliques[c]))
        sep = tuple(sorted(tree.separators[c]))
        if not entries:
            self.orientable = False
        own, sepk = [], []
        for bits in entries:
            arcs = bits_to_arcs(edges, bits)
            ins: dict[int, list[int]] = {}
            for u, v in arcs:
                ins.setdefault(v, []).append(u)
            own.append([self._key(v, ins.get(v, ())) for v in verts])
            sepk.append([self._key(v, ins.get(v, ())) for v in sep])
        E = len(entries)
        return _Clique(
            tree=ti,
            index=c,
            vertices=verts,
            edges=tuple(edges),
            entries=np.array(entries, dtype=np.int8).reshape(E, len(edges)),
            own_keys=np.array(own, dtype=np.int64).reshape(E, len(verts)),
            sep_keys=np.array(sepk, dtype=np.int64).reshape(E, len(sep)),
        )

    def _link_child(self, parent: _Clique, child: _Clique) -> None:
        shared = sorted(set(parent.edges) & set(child.edges))
        ppos = [parent.edges.index(e) for e in shared]
        cpos = [child.edges.index(e) for e in shared]
        ckeys = [tuple(r) for r in child.entries[:, cpos].tolist()]
        groups: dict[tuple, int] = {}
        gof = np.empty(len(ckeys), dtype=np.int64)
        for i, key in enumerate(ckeys):
            gof[i] = groups.setdefault(key, len(groups))
        order = np.argsort(gof, kind="stable")
        starts = np.searchsorted(gof[order], np.arange(len(groups)))
        child.group_of_entry, child.group_order, child.group_starts = gof, order, starts
        child.n_groups = len(groups)
        pkeys = [tuple(r) for r in parent.entries[:, ppos].tolist()]
        parent.child_group.append(np.array([groups.get(k, len(groups)) for k in pkeys], dtype=np.int64))

    # ------------------------------------------------------------------ eval

    def weight_matrix(self, weight: WeightFn) -> np.ndarray:
        """``(K, B)`` log-weights for every (vertex, in-set) key."""
        vals = [np.atleast_1d(np.asarray(weight(v, s), dtype=float)) for v, s in self.keys]
        if not vals:
            return np.zeros((0, 1))
        B = max(v.shape[0] for v in vals)
        return np.stack([np.broadcast_to(v, (B,)) for v in vals])

    def _run(self, W: np.ndarray, mode: str) -> list[np.ndarray]:
        B = W.shape[1]
        tables: list[np.ndarray | None] = [None] * len(self.cliques)
        for g in self.postorder:
            node = self.cliques[g]
            E = node.entries.shape[0]
            if E == 0:
                tables[g] = np.zeros((0, B))
                continue
            val = W[node.own_keys].sum(axis=1) if node.own_keys.shape[1] else np.zeros((E, B))
            for ch, cg in zip(node.children, node.child_group):
                msg = self._message(ch, tables[ch], W, mode)
                val = val + msg[cg]
            tables[g] = val
        return tables

    def _message(self, ch: int, table: np.ndarray, W: np.ndarray, mode: str) -> np.ndarray:
        node = self.cliques[ch]
        B = W.shape[1]
        out = np.full((node.n_groups + 1, B), NEG_INF)
        if table.shape[0] == 0:
            return out
        adj = table - (W[node.sep_keys].sum(axis=1) if node.sep_keys.shape[1] else 0.0)
        srt = adj[node.group_order]
        if mode == "sum":
            out[:-1] = _logaddexp_reduceat(srt, node.group_starts)
        else:
            out[:-1] = np.maximum.reduceat(srt, node.group_starts, axis=0)
        return out

    def root_total(self, tables: list[np.ndarray], mode: str = "sum") -> np.ndarray:
        B = tables[self.roots[0]].shape[1] if self.roots else 1
        total = np.zeros(B)
        for r in self.roots:
            t = tables[r]
            if t.shape[0] == 0:
                return np.full(B, NEG_INF)
            total = total + (np.logaddexp.reduce(t, axis=0) if mode == "sum" else t.max(axis=0))
        return total

    def count(self, weight: WeightFn | None = None) -> "DpTable":
        W = self.weight_matrix(weight if weight is not None else _zero_weight)
        tables = self._run(W, "sum")
        return DpTable(self, tables, W, self.root_total(tables, "sum"))

    def max_score(self, weight: WeightFn) -> np.ndarray:
        W = self.weight_matrix(weight)
        tables = self._run(W, "max")
        return self.root_total(tables, "max")

    def entry_arcs(self, g: int, e: int) -> list[Arc]:
        node = self.cliques[g]
        return bits_to_arcs(node.edges, node.entries[e])

    def assemble(self, choice: dict[int, int]) -> Dag:
        arcs: dict[Edge, Arc] = {}
        for g, e in choice.items():
            for a in self.entry_arcs(g, e):
                key = (min(a), max(a))
                if arcs.setdefault(key, a) != a:
                    raise AssertionError(f"inconsistent orientation of {key}")
        if set(arcs) != set(self.skeleton.edges):
            raise AssertionError("assembled orientation does not cover the skeleton")
        return Dag(self.skeleton.n, arcs.values())


def _zero_weight(v, s):
    return 0.0


def _logaddexp_reduceat(a: np.ndarray, starts: np.ndarray) -> np.ndarray:
    mx = np.maximum.reduceat(a, starts, axis=0)
    safe = np.where(np.isfinite(mx), mx, 0.0)
    ends = np.append(starts[1:], a.shape[0])
    rep = np.repeat(safe, ends - starts, axis=0)
    with np.errstate(divide="ignore"):
        return np.log(np.add.reduceat(np.exp(a - rep), starts, axis=0)) + safe


@dataclass
class DpTable:
    """Log-space DP tables for every clique, plus the root total."""

    structure: ChordalStructure
    tables: list[np.ndarray]
    weights: np.ndarray
    log_total_batch: np.ndarray

    @property
    def log_total(self) -> float:
        if self.log_total_batch.shape[0] != 1:
            raise ValueError("batched table; use log_total_batch")
        return float(self.log_total_batch[0])

    def entries(self, tree: int, clique: int) -> dict[tuple[Arc, ...], float]:
        """Table entries of one clique keyed by the sorted arcs of its link orientation."""
        g = self.structure._gid[(tree, clique)]
        return {
            tuple(sorted(self.structure.entry_arcs(g, e))): float(self.tables[g][e, 0])
            for e in range(self.tables[g].shape[0])
        }


class ChordalSampler:
    """Draws orientations from a (scalar) DP table, root clique first."""

    def __init__(self, table: DpTable):
        st = table.structure
        if table.log_total_batch.shape[0] != 1:
            raise ValueError("sampling needs an unbatched table")
        if not np.isfinite(table.log_total):
            raise NotOrientable("no acyclic orientation within the indegree bound")
        self.structure = st
        self._root_cdf = {}
        self._group_cdf: dict[int, list[tuple[np.ndarray, np.ndarray]]] = {}
        for r in st.roots:
            self._root_cdf[r] = _cdf(table.tables[r][:, 0])
        for g, node in enumerate(st.cliques):
            if node.group_order is None:
                continue
            vals = table.tables[g][:, 0]
            per = []
            for gi in range(node.n_groups):
                members = np.nonzero(node.group_of_entry == gi)[0]
                per.append((members, _cdf(vals[members])))
            self._group_cdf[g] = per
        self._parent = {}
        for g, node in enumerate(st.cliques):
            for pos, ch in enumerate(node.children):
                self._parent[ch] = (g, pos)
        self._cache: dict[tuple[int, ...], Dag] = {}

    def sample_choices(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """``(size, #cliques)`` chosen entry index per clique."""
        st = self.structure
        out = np.zeros((size, len(st.cliques)), dtype=np.int64)
        for g in st.preorder:
            u = rng.random(size)
            if g in self._root_cdf:
                out[:, g] = _draw(self._root_cdf[g], u)
                continue
            p, pos = self._parent[g]
            groups = st.cliques[p].child_group[pos][out[:, p]]
            for gi in np.unique(groups):
                mask = groups == gi
                members, cdf = self._group_cdf[g][gi]
                out[mask, g] = members[_draw(cdf, u[mask])]
        return out

    def to_dag(self, row) -> Dag:
        key = tuple(int(x) for x in row)
        dag = self._cache.get(key)
        if dag is None:
            dag = self._cache[key] = self.structure.assemble(dict(enumerate(key)))
        return dag

    def sample(self, rng: np.random.Generator) -> Dag:
        return self.to_dag(self.sample_choices(rng, 1)[0])

    def sample_many(self, rng: np.random.Generator, size: int) -> list[Dag]:
        return [self.to_dag(r) for r in self.sample_choices(rng, size)]


def _cdf(logv: np.ndarray) -> np.ndarray:
    if logv.size == 0 or not np.isfinite(logv).any():
        return np.zeros(0)
    p = np.exp(logv - logv.max())
    c = np.cumsum(p)
    return c / c[-1]


def _draw(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    if cdf.size == 0:
        raise NotOrientable("no consistent orientation to sample")
    return np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)


# ---------------------------------------------------------------------------
# node weights from a CPT bank and an online sample stream


class NodeWeights:
    """``wt(v, S, t) = eta * sum_{s<=t} log q_{v|S}(x_v^s | x_S^s)`` with prefix sums."""

    def __init__(self, bank, online, eta: float):
        self.bank = bank
        self.codes = online.data
        self.eta = float(eta)
        self._prefix: dict[tuple[int, tuple[int, ...]], np.ndarray] = {}

    @property
    def horizon(self) -> int:
        return self.codes.shape[0]

    def terms(self, v: int, parents) -> np.ndarray:
        return self.bank.get(v, parents).log_q(self.codes)

    def prefix(self, v: int, parents) -> np.ndarray:
        key = (v, tuple(sorted(parents)))
        arr = self._prefix.get(key)
        if arr is None:
            arr = self._prefix[key] = np.concatenate([[0.0], np.cumsum(self.terms(v, key[1]))])
        return arr

    def log_weight(self, v: int, parents, t: int) -> float:
        if not 0 <= t <= self.horizon:
            raise ValueError(f"t={t} outside 0..{self.horizon}")
        return self.eta * float(self.prefix(v, parents)[t])

    def at(self, t: int) -> WeightFn:
        return lambda v, s: self.log_weight(v, s, t)

    def at_many(self, ts) -> WeightFn:
        ts = np.asarray(ts, dtype=np.int64)
        return lambda v, s: self.eta * self.prefix(v, s)[ts]


def node_weight(weights: NodeWeights, v: int, in_set, t: int) -> float:
    return weights.log_weight(v, in_set, t)


def count_chordal(
    skeleton: UndirectedGraph,
    d: int,
    weights: NodeWeights | WeightFn | None = None,
    t: int = 0,
    forest: list[CliqueTree] | None = None,
    structure: ChordalStructure | None = None,
) -> DpTable:
    """Fill the DP tables bottom-up. A ``NodeWeights`` is evaluated at prefix ``t``."""
    st = structure or ChordalStructure(skeleton, d, forest)
    fn = weights.at(t) if isinstance(weights, NodeWeights) else weights
    return st.count(fn)


def sample_chordal_orientation(table: DpTable, rng: np.random.Generator) -> Dag:
    return ChordalSampler(table).sample(rng)


def max_likelihood_orientation(
    skeleton: UndirectedGraph,
    d: int,
    weights: NodeWeights | WeightFn | None = None,
    t: int | None = None,
    forest: list[CliqueTree] | None = None,
    structure: ChordalStructure | None = None,
) -> tuple[Dag, float]:
    """Max-product version of the DP with backtracking.

    Ties (within 1e-12) are broken top-down: the root clique, then each child
    clique in preorder, takes the lexicographically smallest link-orientation
    bit vector (edges in sorted order, bit 0 meaning ``low -> high``) among its
    optimal choices. Because child subtrees are independent given the parent,
    this returns the lexicographically smallest optimal orientation under the
    preorder edge ordering.
    """
    st = structure or ChordalStructure(skeleton, d, forest)
    if isinstance(weights, NodeWeights):
        fn = weights.at(weights.horizon if t is None else t)
    else:
        fn = weights if weights is not None else _zero_weight
    W = st.weight_matrix(fn)
    if W.shape[1] != 1:
        raise ValueError("max_likelihood_orientation needs scalar weights")
    tables = st._run(W, "max")
    score = float(st.root_total(tables, "max")[0])
    if not np.isfinite(score):
        raise NotOrientable("no acyclic orientation within the indegree bound")
    choice: dict[int, int] = {}
    for g in st.preorder:
        node = st.cliques[g]
        if g in st.roots:
            vals = tables[g][:, 0]
            choice[g] = _first_max(vals, np.arange(len(vals)))
        for pos, ch in enumerate(node.children):
            cnode = st.cliques[ch]
            gi = node.child_group[pos][choice[g]]
            members = np.nonzero(cnode.group_of_entry == gi)[0]
            adj = tables[ch][members, 0] - (W[cnode.sep_keys[members]].sum(axis=1)[:, 0] if cnode.sep_keys.shape[1] else 0.0)
            choice[ch] = _first_max(adj, members)
    return st.assemble(choice), score


def _first_max(vals: np.ndarray, ids: np.ndarray) -> int:
    best = vals.max()
    ok = np.nonzero(vals >= best - TIE_TOL)[0]
    return int(ids[ok[0]])


# ---------------------------------------------------------------------------
# brute-force oracles


def orientation_log_weight(dag_arcs, n: int, weight: WeightFn) -> float:
    ins: dict[int, list[int]] = {v: [] for v in range(1, n + 1)}
    for u, v in dag_arcs:
        ins[v].append(u)
    return float(sum(np.asarray(weight(v, tuple(sorted(ins[v])))).item() for v in range(1, n + 1)))


def brute_force_log_total(skeleton: UndirectedGraph, d: int, weight: WeightFn | None = None) -> float:
    from .graph_core import enumerate_orientations

    fn = weight if weight is not None else _zero_weight
    vals = [orientation_log_weight(o, skeleton.n, fn) for o in enumerate_orientations(skeleton, d)]
    return float(np.logaddexp.reduce(vals)) if vals else NEG_INF


def brute_force_law(skeleton: UndirectedGraph, d: int, weight: WeightFn | None = None) -> dict[frozenset, float]:
    from .graph_core import enumerate_orientations

    fn = weight if weight is not None else _zero_weight
    orients = enumerate_orientations(skeleton, d)
    lw = np.array([orientation_log_weight(o, skeleton.n, fn) for o in orients])
    p = np.exp(lw - np.logaddexp.reduce(lw))
    return dict(zip(orients, p))


def chordal_expert_count(skeleton: UndirectedGraph, d: int, structure: ChordalStructure | None = None) -> float:
    """Log of the number of acyclic orientations with indegree <= d."""
    st = structure or ChordalStructure(skeleton, d)
    return float(st.count().log_total)
