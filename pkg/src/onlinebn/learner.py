"""Online learners over structure families: EWA (improper mixture), RWM
(one sampled proper Bayes net), maximum likelihood, and regret bookkeeping.

Every expert is a Bayes net whose structure lies in the family and whose
conditionals are the add-one CPTs of a bank built on a held-out estimation
block. Loss is log-loss, ``-log P(x)``.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field, fields

import networkx as nx
import numpy as np

from .arborescence import (
    ArborescenceSampler,
    WeightedDigraph,
    edge_log_q_tensor,
    enumerate_arborescences,
    log_count,
    tree_expert_edge_weights,
)
from .bayes_net import BayesNet, CptBank, SampleSet
from .chordal_dp import ChordalSampler, ChordalStructure, NodeWeights, max_likelihood_orientation
from .errors import InsufficientSamples
from .graph_core import Dag, UndirectedGraph
from .mixture import MixtureModel

ETA_POLICIES = ("ewa-realizable", "rwm", "agnostic-ewa")
TAU_MODES = ("analytic", "realized")
TREE_ENUMERATION_MAX_N = 6
TIE_TOL = 1e-12


@dataclass
class LearnerConfig:
    """Learner settings. ``eta`` overrides ``eta_policy`` when given."""

    family: str = "tree"
    T: int = 1000
    estimation_size: int = 1000
    d: int = 1
    skeleton: UndirectedGraph | None = None
    eta: float | None = None
    eta_policy: str | None = None
    epsilon: float = 0.1
    delta: float = 0.1
    tau_mode: str = "analytic"

    def __post_init__(self):
        if self.family not in ("tree", "chordal"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.estimation_size < 0:
            raise ValueError("estimation_size must be >= 0")
        if self.eta is not None and not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.eta_policy is not None and self.eta_policy not in ETA_POLICIES:
            raise ValueError(f"unknown eta policy {self.eta_policy!r}")
        if self.tau_mode not in TAU_MODES:
            raise ValueError(f"unknown tau mode {self.tau_mode!r}")
        if self.family == "chordal" and self.skeleton is None:
            raise ValueError("the chordal family needs a skeleton")
        if self.family == "tree":
            self.d = 1


# ---------------------------------------------------------------------------
# learning-rate policies


def log_expert_bound(n: int, config: LearnerConfig) -> float:
    """Upper bound on log(#experts): Cayley for trees, 2^|E| for chordal skeletons."""
    if config.family == "tree":
        return (n - 1) * math.log(n) if n > 1 else 0.0
    return len(config.skeleton.edges) * math.log(2)


def rwm_eta(log_n: float, T: int) -> float:
    return math.sqrt(8.0 * log_n / T)


def analytic_log_inv_tau(n: int, k: int, epsilon: float) -> float:
    """``log(1/tau)`` for the class-wide bound ``min_x P(x) >= (eps / (24 n k^2))^n``."""
    return n * math.log(24 * n * k * k / epsilon)


def realized_log_inv_tau(bank: CptBank) -> float:
    """``log(1/tau)`` with ``tau`` the product over nodes of the bank's smallest entry."""
    return -sum(math.log(m) for m in bank.min_entry_per_node().values())


def resolve_eta(config: LearnerConfig, n: int, bank: CptBank | None = None, algo: str = "ewa") -> float:
    if config.eta is not None:
        return float(config.eta)
    policy = config.eta_policy or ("rwm" if algo == "rwm" else "ewa-realizable")
    if policy == "ewa-realizable":
        return 1.0
    if policy == "rwm":
        log_n = log_expert_bound(n, config)
        # a single expert makes the rate irrelevant; keep eta positive
        return rwm_eta(log_n, config.T) if log_n > 0 else 1.0
    if config.tau_mode == "realized":
        if bank is None:
            raise ValueError("realized tau needs the CPT bank")
        lit = realized_log_inv_tau(bank)
    else:
        lit = analytic_log_inv_tau(n, bank.k if bank is not None else 2, config.epsilon)
    return config.epsilon / (2 * math.sqrt(config.T) * lit * math.sqrt(math.log(1 / config.delta)))


# ---------------------------------------------------------------------------
# data plumbing


def split_samples(s: SampleSet, config: LearnerConfig) -> tuple[SampleSet, SampleSet]:
    """Prefix for the CPT bank, the next ``T`` rows as the online stream."""
    need = config.estimation_size + config.T
    if len(s) < need:
        raise InsufficientSamples(f"need {need} rows ({config.estimation_size} + T={config.T}), got {len(s)}")
    est = s.slice(0, config.estimation_size)
    return est, s.slice(config.estimation_size, need)


def build_bank(est: SampleSet, config: LearnerConfig) -> CptBank:
    return CptBank(est, config.d, skeleton=config.skeleton if config.family == "chordal" else None)


def is_family_member(dag: Dag, config: LearnerConfig) -> bool:
    if config.family == "tree":
        return dag.parents(1) == () and all(dag.indegree(v) == 1 for v in range(2, dag.n + 1))
    skel = config.skeleton
    return dag.skeleton().edges == skel.edges and dag.max_indegree() <= config.d


# ---------------------------------------------------------------------------
# learners


@dataclass
class LearnResult:
    model: BayesNet | MixtureModel
    eta: float
    info: dict = field(default_factory=dict)


def ewa_learn(s: SampleSet, config: LearnerConfig) -> LearnResult:
    est, online = split_samples(s, config)
    bank = build_bank(est, config)
    eta = resolve_eta(config, s.n, bank, "ewa")
    model = MixtureModel(config.family, bank, online, eta, skeleton=config.skeleton, d=config.d)
    return LearnResult(model, eta, {"T": config.T})


def rwm_learn(s: SampleSet, config: LearnerConfig, rng: np.random.Generator) -> LearnResult:
    """Draw ``t`` uniformly from 1..T, use the first ``t-1`` online rows, sample one structure."""
    est, online = split_samples(s, config)
    bank = build_bank(est, config)
    eta = resolve_eta(config, s.n, bank, "rwm")
    t = int(rng.integers(1, config.T + 1))
    if config.family == "tree":
        dag = ArborescenceSampler(tree_expert_edge_weights(bank, online, eta, t)).sample(rng)
    else:
        st = ChordalStructure(config.skeleton, config.d)
        dag = ChordalSampler(st.count(NodeWeights(bank, online, eta).at(t - 1))).sample(rng)
    return LearnResult(bank.bayes_net(dag), eta, {"t": t})


def best_tree(bank: CptBank, codes: np.ndarray) -> tuple[Dag, float, str]:
    """Highest log-likelihood arborescence rooted at 1 on ``codes``.

    Exhaustive for n <= 6 (first maximiser in enumeration order within 1e-12);
    otherwise Chu-Liu/Edmonds on the complete digraph with arcs into 1 removed.
    """
    n = bank.n
    root_ll = float(bank.get(1, ()).log_q(codes).sum())
    C = edge_log_q_tensor(bank, codes).sum(axis=0)
    if n == 1:
        return Dag(1, ()), root_ll, "exact"
    if n <= TREE_ENUMERATION_MAX_N:
        trees = [sorted(t) for t in enumerate_arborescences(n, 1)]
        trees.sort()
        vals = np.array([sum(C[u - 1, v - 1] for u, v in t) for t in trees])
        i = int(np.nonzero(vals >= vals.max() - TIE_TOL)[0][0])
        return Dag(n, trees[i]), root_ll + float(vals[i]), "exact"
    G = nx.DiGraph()
    G.add_nodes_from(range(1, n + 1))
    for u in range(1, n + 1):
        for v in range(2, n + 1):
            if u != v:
                G.add_edge(u, v, weight=float(C[u - 1, v - 1]))
    arb = nx.maximum_spanning_arborescence(G, attr="weight", preserve_attrs=True)
    arcs = sorted(arb.edges())
    return Dag(n, arcs), root_ll + sum(float(C[u - 1, v - 1]) for u, v in arcs), "edmonds (diagnostic)"


def mle_learn(s: SampleSet, config: LearnerConfig) -> LearnResult:
    est, online = split_samples(s, config)
    bank = build_bank(est, config)
    if config.family == "tree":
        dag, score, route = best_tree(bank, online.data)
    else:
        dag, score = max_likelihood_orientation(
            config.skeleton, config.d, NodeWeights(bank, online, 1.0), t=len(online)
        )
        route = "clique-tree max DP"
    return LearnResult(bank.bayes_net(dag), 1.0, {"log_likelihood": score, "route": route})


# ---------------------------------------------------------------------------
# regret


@dataclass
class RegretReport:
    losses: np.ndarray
    best_expert_losses: np.ndarray
    log_num_experts: float
    eta: float
    algo: str = "ewa"

    @property
    def cumulative_regret(self) -> np.ndarray:
        return np.cumsum(self.losses) - self.best_expert_losses

    @property
    def regret(self) -> float:
        return float(self.cumulative_regret[-1])

    @property
    def ewa_bound(self) -> float:
        return self.log_num_experts / self.eta

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["round", "loss", "best_expert_loss", "cumulative_regret"])
            for t, (l, b, r) in enumerate(zip(self.losses, self.best_expert_losses, self.cumulative_regret), 1):
                w.writerow([t, repr(float(l)), repr(float(b)), repr(float(r))])

    def summary(self) -> dict:
        return {
            "algo": self.algo,
            "rounds": int(len(self.losses)),
            "eta": self.eta,
            "log_num_experts": self.log_num_experts,
            "regret": self.regret,
            "ewa_bound": self.ewa_bound,
        }


def log_num_experts(n: int, config: LearnerConfig) -> float:
    """Exact log of the family size."""
    if config.family == "tree":
        return (n - 2) * math.log(n) if n > 1 else 0.0
    return float(ChordalStructure(config.skeleton, config.d).count().log_total)


def ewa_round_losses(model: MixtureModel) -> np.ndarray:
    """``-log Phat_t(x^t)`` for t = 1..T, from the forecaster state before each round."""
    codes = model.online.data
    if model.family == "tree":
        Q = edge_log_q_tensor(model.bank, codes)
        num = log_count(model._state + Q, 1) + model.bank.get(1, ()).log_q(codes)
        return -(num - model._log_norm)
    w, ts = model.weights, model._ts

    def wt(v, s):
        return w.eta * w.prefix(v, s)[ts] + w.terms(v, s)

    return -(model.structure.count(wt).log_total_batch - model._log_norm)


def best_expert_prefix_losses(bank: CptBank, online: SampleSet, config: LearnerConfig) -> np.ndarray:
    """Cumulative loss of the best expert in hindsight after each round."""
    n, T = bank.n, len(online)
    if config.family == "chordal":
        w = NodeWeights(bank, online, 1.0)
        st = ChordalStructure(config.skeleton, config.d)
        return -st.max_score(w.at_many(np.arange(1, T + 1)))
    root = np.cumsum(bank.get(1, ()).log_q(online.data))
    C = np.cumsum(edge_log_q_tensor(bank, online.data), axis=0)
    if n == 1:
        return -root
    if n <= TREE_ENUMERATION_MAX_N:
        trees = enumerate_arborescences(n, 1)
        idx = np.array([[(u - 1) * n + (v - 1) for u, v in sorted(t)] for t in trees])
        flat = C.reshape(T, n * n)
        return -(root + flat[:, idx].sum(axis=2).max(axis=1))
    return np.array([-best_tree(bank, online.data[: t + 1])[1] for t in range(T)])


def compute_regret(
    online: SampleSet,
    config: LearnerConfig,
    bank: CptBank,
    eta: float,
    algo: str = "ewa",
    rng: np.random.Generator | None = None,
) -> RegretReport:
    """Per-round regret trace.

    ``ewa`` uses the exact forecaster pmf each round. ``rwm`` draws one expert
    per round from the weight state (needs ``rng``) and charges its loss.
    """
    best = best_expert_prefix_losses(bank, online, config)
    if algo == "ewa":
        model = MixtureModel(config.family, bank, online, eta, skeleton=config.skeleton, d=config.d)
        losses = ewa_round_losses(model)
    elif algo == "rwm":
        if rng is None:
            raise ValueError("rwm regret needs an rng")
        losses = rwm_round_losses(bank, online, config, eta, rng)
    else:
        raise ValueError(f"regret trace undefined for {algo!r}")
    return RegretReport(losses, best, log_num_experts(online.n, config), eta, algo)


def rwm_round_losses(bank: CptBank, online: SampleSet, config: LearnerConfig, eta: float, rng) -> np.ndarray:
    T = len(online)
    out = np.empty(T)
    st = ChordalStructure(config.skeleton, config.d) if config.family == "chordal" else None
    w = NodeWeights(bank, online, eta) if st is not None else None
    for t in range(1, T + 1):
        if st is None:
            dag = ArborescenceSampler(tree_expert_edge_weights(bank, online, eta, t)).sample(rng)
        else:
            dag = ChordalSampler(st.count(w.at(t - 1))).sample(rng)
        out[t - 1] = -bank.bayes_net(dag).log_prob_codes(online.data[t - 1 : t])[0]
    return out


def config_to_dict(config: LearnerConfig) -> dict:
    doc = {f.name: getattr(config, f.name) for f in fields(config)}
    doc["skeleton"] = None if config.skeleton is None else [list(e) for e in config.skeleton.sorted_edges()]
    return doc
