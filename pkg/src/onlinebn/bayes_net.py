"""Discrete Bayes nets over [k]^n with add-one (Laplace) conditionals.

Values are 1-based at the API and file boundary (``x in [k]^n``) and 0-based
codes inside arrays. Parent assignments are indexed mixed-radix with the
lowest-labelled parent as the most significant digit.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
from dataclasses import dataclass
from math import comb
from typing import Iterable, Mapping

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError, MissingCpt, TooLarge
from .graph_core import Dag, UndirectedGraph

DEFAULT_KL_CAP = 2**20
DEFAULT_BANK_CAP = 10**7


@dataclass(frozen=True)
class SampleSet:
    """``data`` holds 0-based codes, shape ``(rows, n)``."""

    n: int
    k: int
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.int64).reshape(-1, self.n)
        if data.size and (data.min() < 0 or data.max() >= self.k):
            raise DomainError(f"sample values outside 1..{self.k}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_rows(cls, rows: Iterable[Iterable[int]], n: int, k: int) -> "SampleSet":
        arr = np.asarray([list(r) for r in rows], dtype=np.int64).reshape(-1, n)
        if arr.size and (arr.min() < 1 or arr.max() > k):
            raise DomainError(f"sample values outside 1..{k}")
        return cls(n, k, arr - 1)

    @classmethod
    def empty(cls, n: int, k: int) -> "SampleSet":
        return cls(n, k, np.zeros((0, n), dtype=np.int64))

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def rows(self) -> np.ndarray:
        return self.data + 1

    def slice(self, start: int, stop: int | None = None) -> "SampleSet":
        return SampleSet(self.n, self.k, self.data[start:stop])

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.n},{self.k};".encode())
        h.update(np.ascontiguousarray(self.data, dtype=np.int64).tobytes())
        return h.hexdigest()


def parent_index(codes: np.ndarray, parents: tuple[int, ...], k: int) -> np.ndarray:
    """Mixed-radix row index of each sample's parent assignment."""
    idx = np.zeros(codes.shape[0], dtype=np.int64)
    for p in parents:
        idx = idx * k + codes[:, p - 1]
    return idx


@dataclass(frozen=True)
class Cpt:
    v: int
    parents: tuple[int, ...]
    table: np.ndarray  # shape (k**len(parents), k)

    def __post_init__(self):
        t = np.array(self.table, dtype=float)
        if t.ndim != 2 or t.shape[0] != t.shape[1] ** len(self.parents):
            raise ValueError(f"CPT of node {self.v} needs shape (k^|pa|, k), got {t.shape}")
        if (t < 0).any() or not np.allclose(t.sum(axis=1), 1.0, atol=1e-12, rtol=0):
            raise ValueError(f"CPT rows of node {self.v} must be probability vectors")
        t.setflags(write=False)
        object.__setattr__(self, "parents", tuple(self.parents))
        object.__setattr__(self, "table", t)
        with np.errstate(divide="ignore"):
            object.__setattr__(self, "log_table", np.log(t))

    @property
    def k(self) -> int:
        return self.table.shape[1]

    def log_q(self, codes: np.ndarray) -> np.ndarray:
        """Per-row ``log q(x_v | x_pa)`` for a ``(m, n)`` array of codes."""
        rows = parent_index(codes, self.parents, self.k)
        return self.log_table[rows, codes[:, self.v - 1]]

    def min_entry(self) -> float:
        return float(self.table.min())


def add_one_counts(samples: SampleSet, v: int, parents: Iterable[int]) -> tuple[np.ndarray, np.ndarray]:
    pa = tuple(sorted(parents))
    k = samples.k
    codes = samples.data
    rows = parent_index(codes, pa, k)
    joint = np.bincount(rows * k + codes[:, v - 1], minlength=k ** (len(pa) + 1)).reshape(-1, k)
    return joint, joint.sum(axis=1)


def add_one_cpt(samples: SampleSet, v: int, parents: Iterable[int]) -> Cpt:
    """(count(v=z, pa=y) + 1) / (count(pa=y) + k) for every row y."""
    pa = tuple(sorted(parents))
    if v in pa:
        raise ValueError(f"node {v} cannot be its own parent")
    joint, marg = add_one_counts(samples, v, pa)
    table = (joint + 1.0) / (marg[:, None] + samples.k)
    return Cpt(v, pa, table)


class CptBank:
    """Add-one CPTs for every (node, candidate parent set) pair.

    With a skeleton the candidate parents of ``v`` are subsets of its
    neighbours; otherwise all subsets of the other nodes. Sets have size <= d.
    """

    def __init__(
        self,
        samples: SampleSet,
        d: int,
        skeleton: UndirectedGraph | None = None,
        cap: int = DEFAULT_BANK_CAP,
    ):
        self.n, self.k, self.d = samples.n, samples.k, d
        self.skeleton = skeleton
        self.samples = samples
        entries = 0
        keys = []
        for v in range(1, self.n + 1):
            pool = sorted(skeleton.neighbors(v)) if skeleton is not None else [u for u in range(1, self.n + 1) if u != v]
            for size in range(min(d, len(pool)) + 1):
                entries += comb(len(pool), size) * self.k ** (size + 1)
                keys.extend((v, s) for s in itertools.combinations(pool, size))
        if entries > cap:
            raise TooLarge(f"CPT bank would hold {entries} table entries (cap {cap})")
        self.cpts: dict[tuple[int, tuple[int, ...]], Cpt] = {
            (v, s): add_one_cpt(samples, v, s) for v, s in keys
        }

    def __len__(self) -> int:
        return len(self.cpts)

    def __contains__(self, key) -> bool:
        v, s = key
        return (v, tuple(sorted(s))) in self.cpts

    def get(self, v: int, parents: Iterable[int]) -> Cpt:
        key = (v, tuple(sorted(parents)))
        try:
            return self.cpts[key]
        except KeyError:
            raise MissingCpt(f"no CPT for node {v} with parents {key[1]}") from None

    def min_entry(self) -> float:
        return min(c.min_entry() for c in self.cpts.values())

    def min_entry_per_node(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for (v, _), c in self.cpts.items():
            out[v] = min(out.get(v, 1.0), c.min_entry())
        return out

    def bayes_net(self, dag: Dag) -> "BayesNet":
        return BayesNet(dag, {v: self.get(v, dag.parents(v)) for v in range(1, dag.n + 1)}, self.k)


def build_cpt_bank(samples: SampleSet, skeleton: UndirectedGraph | None, d: int, cap: int = DEFAULT_BANK_CAP) -> CptBank:
    return CptBank(samples, d, skeleton=skeleton, cap=cap)


class BayesNet:
    def __init__(self, dag: Dag, cpts: Mapping[int, Cpt], k: int):
        self.dag = dag
        self.k = k
        self.n = dag.n
        self.cpts = dict(cpts)
        for v in range(1, self.n + 1):
            c = self.cpts.get(v)
            if c is None:
                raise ValueError(f"missing CPT for node {v}")
            if c.parents != dag.parents(v):
                raise ValueError(f"CPT parents {c.parents} of node {v} disagree with DAG {dag.parents(v)}")
            if c.table.shape != (k ** len(c.parents), k):
                raise ValueError(f"CPT table for node {v} has wrong shape {c.table.shape}")
            if not np.allclose(c.table.sum(axis=1), 1.0, atol=1e-12, rtol=0):
                raise ValueError(f"CPT rows of node {v} do not sum to 1")
        self._order = dag.topological_order()

    def log_prob_codes(self, codes: np.ndarray) -> np.ndarray:
        codes = np.atleast_2d(codes)
        total = np.zeros(codes.shape[0])
        for c in self.cpts.values():
            total += c.log_q(codes)
        return total

    def log_prob(self, x) -> float:
        return float(self.log_prob_codes(_check_point(x, self.n, self.k))[0])

    def sample_codes(self, rng: np.random.Generator, size: int) -> np.ndarray:
        out = np.zeros((size, self.n), dtype=np.int64)
        for v in self._order:
            c = self.cpts[v]
            probs = c.table[parent_index(out, c.parents, self.k)]
            u = rng.random(size)
            cdf = np.cumsum(probs, axis=1)
            out[:, v - 1] = np.minimum((u[:, None] >= cdf).sum(axis=1), self.k - 1)
        return out

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """One ancestral sample, 1-based."""
        return self.sample_codes(rng, 1)[0] + 1

    def sample_set(self, rng: np.random.Generator, size: int) -> SampleSet:
        return SampleSet(self.n, self.k, self.sample_codes(rng, size))

    def min_entry(self) -> float:
        return min(c.min_entry() for c in self.cpts.values())


def _check_point(x, n: int, k: int) -> np.ndarray:
    arr = np.asarray(x, dtype=np.int64).reshape(-1)
    if arr.shape[0] != n:
        raise DomainError(f"expected a vector of length {n}")
    if arr.min() < 1 or arr.max() > k:
        raise DomainError(f"coordinates must lie in 1..{k}")
    return (arr - 1)[None, :]


def log_prob(p: BayesNet, x) -> float:
    return p.log_prob(x)


def sample(p: BayesNet, rng: np.random.Generator) -> np.ndarray:
    return p.sample(rng)


def all_points(n: int, k: int, cap: int = DEFAULT_KL_CAP) -> np.ndarray:
    if k**n > cap:
        raise TooLarge(f"k^n = {k**n} exceeds the enumeration cap {cap}")
    return np.array(list(itertools.product(range(k), repeat=n)), dtype=np.int64).reshape(-1, n)


def exact_kl(p_star, q, cap: int = DEFAULT_KL_CAP) -> float:
    """KL(p_star || q) in nats by summing over all of [k]^n.

    Both arguments need ``n``, ``k`` and ``log_prob_codes``.
    """
    pts = all_points(p_star.n, p_star.k, cap)
    lp = p_star.log_prob_codes(pts)
    lq = q.log_prob_codes(pts)
    p = np.exp(lp)
    mask = p > 0
    return max(0.0, float(np.sum(p[mask] * (lp[mask] - lq[mask]))))


def empirical_kl(p_star, q, holdout: SampleSet) -> tuple[float, float]:
    """Monte-Carlo KL estimate on ``holdout`` rows drawn from ``p_star``.

    Returns ``(mean, standard error)``.
    """
    lr = p_star.log_prob_codes(holdout.data) - q.log_prob_codes(holdout.data)
    if len(lr) == 0:
        return 0.0, 0.0
    se = float(lr.std(ddof=1) / np.sqrt(len(lr))) if len(lr) > 1 else 0.0
    return float(lr.mean()), se


def tv_distance(p, q, cap: int = DEFAULT_KL_CAP) -> float:
    pts = all_points(p.n, p.k, cap)
    return 0.5 * float(np.abs(np.exp(p.log_prob_codes(pts)) - np.exp(q.log_prob_codes(pts))).sum())


def total_log_mass(model, cap: int = DEFAULT_KL_CAP) -> float:
    pts = all_points(model.n, model.k, cap)
    return float(logsumexp(model.log_prob_codes(pts)))


# ---------------------------------------------------------------------------
# files


def write_samples_csv(samples: SampleSet, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(1, samples.n + 1)])
        w.writerows(samples.rows.tolist())


def read_samples_csv(path, k: int | None = None) -> SampleSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n = len(header)
        if header != [f"x{i}" for i in range(1, n + 1)]:
            raise ValueError(f"bad sample header {header}")
        rows = [[int(c) for c in r] for r in reader if r]
    arr = np.asarray(rows, dtype=np.int64).reshape(-1, n)
    if k is None:
        k = int(arr.max()) if arr.size else 1
    return SampleSet.from_rows(arr, n, k)


def bayes_net_to_dict(p: BayesNet) -> dict:
    return {
        "type": "bayes_net",
        "n": p.n,
        "k": p.k,
        "edges": [list(a) for a in p.dag.sorted_arcs()],
        "cpts": {
            str(v): {"parents": list(c.parents), "table": c.table.tolist()}
            for v, c in sorted(p.cpts.items())
        },
    }


def bayes_net_from_dict(doc: Mapping) -> BayesNet:
    n, k = int(doc["n"]), int(doc["k"])
    dag = Dag(n, [tuple(e) for e in doc["edges"]])
    cpts = {
        int(v): Cpt(int(v), tuple(c["parents"]), np.asarray(c["table"], dtype=float))
        for v, c in doc["cpts"].items()
    }
    return BayesNet(dag, cpts, k)


def dump_json(doc, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)
