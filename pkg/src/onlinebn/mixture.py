"""The improper EWA output: a uniform mixture over rounds of the forecaster's
predictive distribution.

Round ``t`` (1..T) predicts with the weighted average of all experts, each
expert weighted by ``exp(eta * sum_{s<t} log P_E(x^s))``. Neither the mixture
nor the per-round predictors are stored as explicit expert lists; both are
evaluated through the matrix-tree determinant (trees) or the clique-tree DP
(chordal skeletons), batched over all rounds at once.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .arborescence import ArborescenceSampler, WeightedDigraph, edge_log_q_tensor, log_count
from .bayes_net import BayesNet, CptBank, SampleSet
from .chordal_dp import ChordalSampler, ChordalStructure, NodeWeights
from .errors import NotOrientable
from .graph_core import Dag, UndirectedGraph

FAMILIES = ("tree", "chordal")


class MixtureModel:
    """``P(x) = (1/T) sum_{t=1..T} Phat_t(x)``.

    :param family: ``"tree"`` (arborescences rooted at 1) or ``"chordal"``.
    :param bank: add-one CPT bank built from the estimation block.
    :param online: the online stream; its length is ``T``.
    :param eta: learning rate of the forecaster.
    """

    def __init__(
        self,
        family: str,
        bank: CptBank,
        online: SampleSet,
        eta: float,
        skeleton: UndirectedGraph | None = None,
        d: int | None = None,
        structure: ChordalStructure | None = None,
    ):
        if family not in FAMILIES:
            raise ValueError(f"unknown family {family!r}")
        if len(online) < 1:
            raise ValueError("the online stream must have at least one row")
        self.family = family
        self.bank = bank
        self.online = online
        self.eta = float(eta)
        self.n, self.k = bank.n, bank.k
        self.T = len(online)
        if family == "tree":
            self.d = 1
            self.skeleton = None
            Q = edge_log_q_tensor(bank, online.data)
            cum = np.concatenate([np.zeros((1, self.n, self.n)), np.cumsum(Q, axis=0)])
            # state before round t (t = 1..T) is cum[t-1]
            self._state = self.eta * cum[: self.T]
            self._root_cpt = bank.get(1, ())
            self._log_norm = log_count(self._state, 1)
        else:
            if skeleton is None or d is None:
                raise ValueError("chordal mixtures need a skeleton and d")
            self.skeleton, self.d = skeleton, d
            self.structure = structure or ChordalStructure(skeleton, d)
            self.weights = NodeWeights(bank, online, self.eta)
            self._ts = np.arange(self.T)
            self._log_norm = self.structure.count(self.weights.at_many(self._ts)).log_total_batch
        if not np.all(np.isfinite(self._log_norm)):
            raise NotOrientable("some round has zero total expert weight")

    # ------------------------------------------------------------ densities

    def round_log_probs(self, codes: np.ndarray) -> np.ndarray:
        """``(m, T)`` array of ``log Phat_t(x)`` for each row of ``codes``."""
        codes = np.atleast_2d(np.asarray(codes, dtype=np.int64))
        out = np.empty((codes.shape[0], self.T))
        if self.family == "tree":
            edge = edge_log_q_tensor(self.bank, codes)  # (m, n, n)
            root = self._root_cpt.log_q(codes)
            step = max(1, 200_000 // max(self.T, 1))
            for a in range(0, codes.shape[0], step):
                blk = self._state[None, :, :, :] + edge[a : a + step, None, :, :]
                out[a : a + step] = root[a : a + step, None] + log_count(blk, 1) - self._log_norm[None, :]
        else:
            base = self.weights
            for i, x in enumerate(codes):
                xr = x[None, :]

                def wt(v, s, xr=xr):
                    return base.eta * base.prefix(v, s)[self._ts] + float(self.bank.get(v, s).log_q(xr)[0])

                out[i] = self.structure.count(wt).log_total_batch - self._log_norm
        return out

    def log_prob_codes(self, codes: np.ndarray) -> np.ndarray:
        return logsumexp(self.round_log_probs(codes), axis=1) - np.log(self.T)

    def log_prob(self, x) -> float:
        from .bayes_net import _check_point

        return float(self.log_prob_codes(_check_point(x, self.n, self.k))[0])

    # ------------------------------------------------------------ sampling

    def structure_sampler(self, t: int):
        """Sampler over structures from the weight state before round ``t``."""
        if not 1 <= t <= self.T:
            raise ValueError(f"round {t} outside 1..{self.T}")
        if self.family == "tree":
            return ArborescenceSampler(WeightedDigraph(self.n, self._state[t - 1], 1))
        return ChordalSampler(self.structure.count(self.weights.at(t - 1)))

    def sample_structures(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, list[Dag]]:
        ts = rng.integers(1, self.T + 1, size=size)
        dags: list[Dag | None] = [None] * size
        for t in np.unique(ts):
            idx = np.nonzero(ts == t)[0]
            sampler = self.structure_sampler(int(t))
            if self.family == "tree":
                for i in idx:
                    dags[i] = sampler.sample(rng)
            else:
                for i, g in zip(idx, sampler.sample_many(rng, len(idx))):
                    dags[i] = g
        return ts, dags  # type: ignore[return-value]

    def sample_codes(self, rng: np.random.Generator, size: int) -> np.ndarray:
        _, dags = self.sample_structures(rng, size)
        out = np.empty((size, self.n), dtype=np.int64)
        nets: dict[frozenset, tuple[BayesNet, list[int]]] = {}
        for i, g in enumerate(dags):
            nets.setdefault(g.arcs, (self.bank.bayes_net(g), []))[1].append(i)
        for key in sorted(nets, key=lambda a: sorted(a)):
            net, idx = nets[key]
            out[idx] = net.sample_codes(rng, len(idx))
        return out

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.sample_codes(rng, 1)[0] + 1

    # ------------------------------------------------------------ files

    def to_dict(self) -> dict:
        return {
            "type": "mixture",
            "family": self.family,
            "eta": self.eta,
            "n": self.n,
            "k": self.k,
            "d": self.d,
            "skeleton": None if self.skeleton is None else [list(e) for e in self.skeleton.sorted_edges()],
            "estimation": {"rows": self.bank.samples.rows.tolist(), "sha256": self.bank.samples.digest()},
            "online": {"rows": self.online.rows.tolist(), "sha256": self.online.digest()},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MixtureModel":
        n, k, d = int(doc["n"]), int(doc["k"]), int(doc["d"])
        est = SampleSet.from_rows(doc["estimation"]["rows"], n, k)
        onl = SampleSet.from_rows(doc["online"]["rows"], n, k)
        for blk, s in (("estimation", est), ("online", onl)):
            if doc[blk].get("sha256") not in (None, s.digest()):
                raise ValueError(f"{blk} block digest mismatch")
        skel = None if doc["skeleton"] is None else UndirectedGraph(n, [tuple(e) for e in doc["skeleton"]])
        bank = CptBank(est, d, skeleton=skel)
        return cls(doc["family"], bank, onl, float(doc["eta"]), skeleton=skel, d=d)
