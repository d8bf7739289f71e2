"""Weighted counting and exact sampling of spanning out-arborescences.

Weights are carried as natural logs; an absent arc has log-weight ``-inf``.
The matrix-tree determinant ``det(L^r)`` (``L = D_in - A``, row and column of
the root removed) is computed by Gaussian elimination performed directly on
the log-weights. Because ``L^r`` is a column diagonally dominant M-matrix the
eliminated pivots can be written as sums of non-negative terms (the
Grassmann-Taksar-Heyman trick), so no subtraction ever happens and the result
keeps full relative accuracy even when the weights span hundreds of orders of
magnitude.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import NoArborescence, NonPositiveTotal, NumericalIntegrityError
from .graph_core import Arc, Dag

NEG_INF = -np.inf


@dataclass(frozen=True)
class WeightedDigraph:
    """``log_w[i-1, j-1]`` is the log-weight of arc ``i -> j``."""

    n: int
    log_w: np.ndarray
    root: int = 1

    def __post_init__(self):
        lw = np.array(self.log_w, dtype=float)
        if lw.shape != (self.n, self.n):
            raise ValueError(f"log_w must be {self.n}x{self.n}")
        if np.isnan(lw).any() or np.isposinf(lw).any():
            raise ValueError("log-weights must be finite or -inf")
        np.fill_diagonal(lw, NEG_INF)
        lw.setflags(write=False)
        object.__setattr__(self, "log_w", lw)
        if not 1 <= self.root <= self.n:
            raise ValueError("root out of range")

    @classmethod
    def complete(cls, n: int, root: int = 1) -> "WeightedDigraph":
        return cls(n, np.zeros((n, n)), root)

    @classmethod
    def from_arcs(cls, n: int, arcs: dict[Arc, float], root: int = 1) -> "WeightedDigraph":
        lw = np.full((n, n), NEG_INF)
        for (u, v), w in arcs.items():
            lw[u - 1, v - 1] = w
        return cls(n, lw, root)

    def arcs(self) -> list[Arc]:
        ii, jj = np.nonzero(np.isfinite(self.log_w))
        return [(int(i) + 1, int(j) + 1) for i, j in zip(ii, jj)]

    def without(self, arc: Arc) -> "WeightedDigraph":
        lw = self.log_w.copy()
        lw[arc[0] - 1, arc[1] - 1] = NEG_INF
        return WeightedDigraph(self.n, lw, self.root)

    def scaled_into(self, j: int, log_c: float) -> "WeightedDigraph":
        lw = self.log_w.copy()
        lw[:, j - 1] += log_c
        return WeightedDigraph(self.n, lw, self.root)


def log_det_root_minor(log_w: np.ndarray, root_source: np.ndarray) -> np.ndarray:
    """Batched ``log det`` of a root-removed in-Laplacian.

    :param log_w: ``(..., m, m)`` log-weights among the non-root vertices
        (diagonal ignored).
    :param root_source: ``(..., m)`` log-weight of arcs from the root into
        each non-root vertex.
    :return: ``(...)`` log-determinants, ``-inf`` where no arborescence exists.
    """
    W = np.array(log_w, dtype=float, copy=True)
    s = np.array(root_source, dtype=float, copy=True)
    m = W.shape[-1]
    batch = W.shape[:-2]
    idx = np.arange(m)
    W[..., idx, idx] = NEG_INF
    total = np.zeros(batch)
    dead = np.zeros(batch, dtype=bool)
    with np.errstate(invalid="ignore"):
        for p in range(m):
            col = W[..., :, p]
            piv = np.logaddexp(s[..., p], np.logaddexp.reduce(col, axis=-1)) if m > 1 else s[..., p]
            dead |= np.isneginf(piv)
            piv_safe = np.where(np.isneginf(piv), 0.0, piv)
            total += piv_safe
            row = W[..., p, :].copy()
            sp = s[..., p].copy()
            col = col.copy()
            # route flow through p: i -> p -> j, and root -> p -> j
            W = np.logaddexp(W, col[..., :, None] + row[..., None, :] - piv_safe[..., None, None])
            s = np.logaddexp(s, (sp - piv_safe)[..., None] + row)
            W[..., p, :] = NEG_INF
            W[..., :, p] = NEG_INF
            W[..., idx, idx] = NEG_INF
            s[..., p] = NEG_INF
    return np.where(dead, NEG_INF, total)


def _split_root(log_w: np.ndarray, root: int) -> tuple[np.ndarray, np.ndarray]:
    n = log_w.shape[-1]
    keep = [i for i in range(n) if i != root - 1]
    inner = log_w[..., keep, :][..., :, keep]
    src = log_w[..., root - 1, keep]
    return inner, src


def log_count(log_w: np.ndarray, root: int = 1) -> np.ndarray:
    """``log sum_T prod w`` for a (batch of) ``(n, n)`` log-weight matrices."""
    log_w = np.asarray(log_w, dtype=float)
    if log_w.shape[-1] == 1:
        return np.zeros(log_w.shape[:-2])
    inner, src = _split_root(log_w, root)
    return log_det_root_minor(inner, src)


def reachable_from(n: int, log_w: np.ndarray, root: int) -> set[int]:
    seen, stack = {root}, [root]
    finite = np.isfinite(log_w)
    while stack:
        u = stack.pop()
        for v in np.nonzero(finite[u - 1])[0] + 1:
            if int(v) not in seen:
                seen.add(int(v))
                stack.append(int(v))
    return seen


def count_arborescences(g: WeightedDigraph) -> float:
    """Log of the total product-weight of arborescences rooted at ``g.root``."""
    val = float(log_count(g.log_w, g.root))
    if not np.isfinite(val):
        raise NonPositiveTotal("no spanning arborescence of positive weight")
    return val


def edge_inclusion_prob(g: WeightedDigraph, arc: Arc) -> float:
    """Probability that ``arc`` appears in a product-weight random arborescence."""
    base = count_arborescences(g)
    if not np.isfinite(g.log_w[arc[0] - 1, arc[1] - 1]):
        return 0.0
    rest = float(log_count(g.without(arc).log_w, g.root))
    return _clamp(1.0 - np.exp(rest - base))


def _clamp(p: float) -> float:
    if p < -1e-9 or p > 1 + 1e-9 or np.isnan(p):
        raise NumericalIntegrityError(f"probability {p} outside [0, 1]")
    return min(1.0, max(0.0, p))


@dataclass
class ContractionState:
    """State of the deletion/contraction walk.

    Only the root ever absorbs contracted vertices, so every other vertex of
    the current multigraph is still an original vertex and each current arc
    maps back to exactly one original arc.
    """

    tree_vertices: frozenset[int]
    deleted: frozenset[Arc]
    chosen: tuple[Arc, ...] = ()

    def minor(self, log_w: np.ndarray) -> tuple[np.ndarray, np.ndarray, list[int]]:
        n = log_w.shape[0]
        rest = [v for v in range(1, n + 1) if v not in self.tree_vertices]
        lw = log_w.copy()
        for u, v in self.deleted:
            lw[u - 1, v - 1] = NEG_INF
        ri = [v - 1 for v in rest]
        ti = [v - 1 for v in sorted(self.tree_vertices)]
        inner = lw[np.ix_(ri, ri)]
        # parallel arcs from the contracted root add their weights
        src = np.logaddexp.reduce(lw[np.ix_(ti, ri)], axis=0) if ri else np.zeros(0)
        return inner, src, rest

    def root_arcs(self, log_w: np.ndarray) -> list[Arc]:
        """Remaining arcs leaving the contracted root, by (head, tail) label."""
        out = []
        for u in self.tree_vertices:
            for v in range(1, log_w.shape[0] + 1):
                if v in self.tree_vertices or (u, v) in self.deleted:
                    continue
                if np.isfinite(log_w[u - 1, v - 1]):
                    out.append((u, v))
        return sorted(out, key=lambda a: (a[1], a[0]))


class ArborescenceSampler:
    """Exact sampler for the product arborescence distribution.

    Repeated draws share a memo of log-determinants keyed by the contraction
    state, so many draws from one graph are cheap.
    """

    def __init__(self, g: WeightedDigraph):
        self.g = g
        self._memo: dict[tuple[frozenset[int], frozenset[Arc]], float] = {}
        start = ContractionState(frozenset({g.root}), frozenset())
        if not np.isfinite(self._log_det(start)):
            raise NoArborescence("graph has no spanning arborescence from the root")

    def _log_det(self, st: ContractionState) -> float:
        key = (st.tree_vertices, st.deleted)
        val = self._memo.get(key)
        if val is None:
            inner, src, rest = st.minor(self.g.log_w)
            val = 0.0 if not rest else float(log_det_root_minor(inner, src))
            self._memo[key] = val
        return val

    def deletion_prob(self, st: ContractionState, arc: Arc) -> float:
        base = self._log_det(st)
        after = self._log_det(ContractionState(st.tree_vertices, st.deleted | {arc}))
        return _clamp(float(np.exp(after - base)) if np.isfinite(after) else 0.0)

    def sample(self, rng: np.random.Generator) -> Dag:
        st = ContractionState(frozenset({self.g.root}), frozenset())
        while True:
            arcs = st.root_arcs(self.g.log_w)
            if not arcs:
                break
            e = arcs[0]
            if rng.random() < self.deletion_prob(st, e):
                st = ContractionState(st.tree_vertices, st.deleted | {e}, st.chosen)
            else:
                # contraction: arcs between the root group and e's head vanish
                head = e[1]
                deleted = frozenset(a for a in st.deleted if a[1] != head)
                st = ContractionState(st.tree_vertices | {head}, deleted, st.chosen + (e,))
        if len(st.tree_vertices) != self.g.n:
            raise NoArborescence("sampler stopped before spanning all vertices")
        return Dag(self.g.n, st.chosen)


def sample_arborescence(g: WeightedDigraph, rng: np.random.Generator) -> Dag:
    return ArborescenceSampler(g).sample(rng)


def enumerate_arborescences(n: int, root: int = 1, arcs: set[Arc] | None = None) -> list[frozenset[Arc]]:
    """All out-arborescences rooted at ``root`` (brute force over parent maps)."""
    others = [v for v in range(1, n + 1) if v != root]
    out = []
    for pars in itertools.product(range(1, n + 1), repeat=len(others)):
        tree = []
        ok = True
        for v, p in zip(others, pars):
            if p == v or (arcs is not None and (p, v) not in arcs):
                ok = False
                break
            tree.append((p, v))
        if not ok:
            continue
        # every vertex must reach the root by following parents
        par = dict(zip(others, pars))
        good = True
        for v in others:
            seen, u = set(), v
            while u != root:
                if u in seen:
                    good = False
                    break
                seen.add(u)
                u = par[u]
            if not good:
                break
        if good:
            out.append(frozenset(tree))
    return out


def brute_force_log_count(g: WeightedDigraph) -> float:
    trees = enumerate_arborescences(g.n, g.root, set(g.arcs()))
    if not trees:
        return NEG_INF
    vals = [sum(g.log_w[u - 1, v - 1] for u, v in t) for t in trees]
    return float(np.logaddexp.reduce(vals))


def log_count_in_arborescences(g: WeightedDigraph) -> float:
    """In-arborescences rooted at ``g.root`` via the out-Laplacian (test helper)."""
    return float(log_count(np.swapaxes(g.log_w, -1, -2), g.root))


def tree_expert_edge_weights(bank, online, eta: float, t: int | None = None) -> WeightedDigraph:
    """Log-weights ``eta * sum_{s<t} log q_{j|i}(x_j | x_i)`` on the complete digraph.

    :param online: a :class:`~onlinebn.bayes_net.SampleSet`; rows ``0..t-2``
        (the first ``t-1``) are used. ``t=None`` uses all rows.
    The root's own factor is left out: it is common to every expert.
    """
    n = bank.n
    codes = online.data if t is None else online.data[: max(t - 1, 0)]
    lw = np.zeros((n, n))
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            if i != j:
                lw[i - 1, j - 1] = eta * float(bank.get(j, (i,)).log_q(codes).sum()) if len(codes) else 0.0
    return WeightedDigraph(n, lw, 1)


def edge_log_q_tensor(bank, codes: np.ndarray) -> np.ndarray:
    """``Q[s, i, j] = log q_{j|i}(x^s_j | x^s_i)``; zeros on the diagonal."""
    n = bank.n
    Q = np.zeros((codes.shape[0], n, n))
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            if i != j:
                Q[:, i - 1, j - 1] = bank.get(j, (i,)).log_q(codes)
    return Q
