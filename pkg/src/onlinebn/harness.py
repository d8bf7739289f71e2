"""Synthetic instances, seeded random streams and the end-to-end experiment
pipeline (generate, split, learn, evaluate, write reports).

Randomness: one integer seed feeds ``SeedSequence(seed, spawn_key=(stage,))``
and a Philox counter-based generator per pipeline stage, so stages never share
a stream and adding draws in one stage does not shift another.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arborescence import ArborescenceSampler, WeightedDigraph
from .bayes_net import (
    BayesNet,
    Cpt,
    SampleSet,
    bayes_net_from_dict,
    bayes_net_to_dict,
    dump_json,
    empirical_kl,
    exact_kl,
    load_json,
    write_samples_csv,
)
from .chordal_dp import ChordalSampler, ChordalStructure
from .errors import GenerationFailed, OnlineBNError, TooLarge
from .graph_core import Dag, UndirectedGraph, is_chordal, read_graph, write_graph
from .learner import LearnerConfig, build_bank, compute_regret, ewa_learn, mle_learn, rwm_learn, split_samples
from .mixture import MixtureModel

OUTPUT_ROOT_ENV = "ONLINEBN_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "runs"

STAGES = {"gen": 1, "data": 2, "learn": 3, "eval": 4, "sample": 5, "regret": 6, "online": 7}
SAMPLE_CHUNK = 1024


def stage_rng(seed: int, stage: str | int) -> np.random.Generator:
    sid = STAGES[stage] if isinstance(stage, str) else int(stage)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(sid,))))


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT))


# ---------------------------------------------------------------------------
# instance generation


@dataclass
class InstanceParams:
    """Fixture parameters for synthetic ground truths (our choice, not canonical)."""

    family: str = "tree"
    n: int = 5
    k: int = 2
    d: int = 1
    cpt_min: float = 0.1
    edge_keep: float = 0.8
    max_retries: int = 50
    skeleton: UndirectedGraph | None = None


@dataclass
class GroundTruth:
    p_star: BayesNet
    skeleton: UndirectedGraph
    meta: dict = field(default_factory=dict)


def random_cpts(dag: Dag, k: int, cpt_min: float, rng: np.random.Generator) -> dict[int, Cpt]:
    """Rows ``b + (1 - k b) * Dirichlet(1)``: every entry at least ``b``."""
    if not 0 <= cpt_min * k <= 1:
        raise ValueError("cpt_min must satisfy 0 <= k * cpt_min <= 1")
    out = {}
    for v in range(1, dag.n + 1):
        pa = dag.parents(v)
        rows = rng.dirichlet(np.ones(k), size=k ** len(pa))
        out[v] = Cpt(v, pa, cpt_min + (1 - k * cpt_min) * rows)
    return out


def random_d_tree(n: int, d: int, rng: np.random.Generator) -> UndirectedGraph:
    """Random d-tree on n vertices (complete graph when n <= d + 1)."""
    order = [int(v) for v in rng.permutation(np.arange(1, n + 1))]
    base = order[: d + 1]
    edges = {(min(a, b), max(a, b)) for i, a in enumerate(base) for b in base[i + 1 :]}
    cliques = [tuple(sorted(base))] if len(base) == d + 1 else []
    for v in order[d + 1 :]:
        host = cliques[int(rng.integers(len(cliques)))]
        drop = int(rng.integers(len(host)))
        face = tuple(u for i, u in enumerate(host) if i != drop)
        edges |= {(min(u, v), max(u, v)) for u in face}
        cliques.append(tuple(sorted(face + (v,))))
    return UndirectedGraph(n, edges)


def thin_chordal(g: UndirectedGraph, keep: float, rng: np.random.Generator) -> UndirectedGraph:
    """Delete each edge (random order) with probability ``1 - keep`` if the result stays chordal."""
    edges = set(g.edges)
    for i in rng.permutation(len(g.sorted_edges())):
        e = g.sorted_edges()[int(i)]
        if rng.random() < keep:
            continue
        trial = UndirectedGraph(g.n, edges - {e})
        if is_chordal(trial)[0]:
            edges.discard(e)
    return UndirectedGraph(g.n, edges)


def gen_instance(params: InstanceParams, seed: int) -> GroundTruth:
    rng = stage_rng(seed, "gen")
    n, k, d = params.n, params.k, params.d
    if params.family == "tree":
        dag = ArborescenceSampler(WeightedDigraph.complete(n)).sample(rng) if n > 1 else Dag(1, ())
        skel = dag.skeleton()
        attempts = 1
    elif params.family == "chordal":
        skel, dag, attempts = None, None, 0
        for attempts in range(1, params.max_retries + 1):
            cand = params.skeleton or thin_chordal(random_d_tree(n, d, rng), params.edge_keep, rng)
            if not is_chordal(cand)[0]:
                raise GenerationFailed("supplied skeleton is not chordal")
            try:
                st = ChordalStructure(cand, d)
                table = st.count()
            except TooLarge:
                continue
            if np.isfinite(table.log_total):
                skel, dag = cand, ChordalSampler(table).sample(rng)
                break
            if params.skeleton is not None:
                break
        if dag is None:
            raise GenerationFailed(f"no orientable chordal skeleton after {attempts} attempts")
    else:
        raise ValueError(f"unknown family {params.family!r}")
    p = BayesNet(dag, random_cpts(dag, k, params.cpt_min, rng), k)
    meta = {"seed": int(seed), "family": params.family, "n": n, "k": k, "d": d, "cpt_min": params.cpt_min,
            "attempts": attempts, "fixture": "synthetic generator parameters chosen for this artifact"}
    return GroundTruth(p, skel, meta)


def sample_prefix_stable(p: BayesNet, rng: np.random.Generator, size: int, chunk: int = SAMPLE_CHUNK) -> SampleSet:
    """Ancestral samples drawn in fixed-size chunks, so the first ``m`` rows do not depend on ``size``."""
    blocks = [p.sample_codes(rng, chunk) for _ in range(-(-size // chunk))]
    data = np.vstack(blocks)[:size] if blocks else np.zeros((0, p.n), dtype=np.int64)
    return SampleSet(p.n, p.k, data)


def draw_dataset(p: BayesNet, seed: int, estimation_size: int, T: int) -> SampleSet:
    """Estimation block then online stream, each from its own substream.

    Runs that differ only in ``T`` share the same estimation block and nested
    online streams.
    """
    est = sample_prefix_stable(p, stage_rng(seed, "data"), estimation_size)
    online = sample_prefix_stable(p, stage_rng(seed, "online"), T)
    return SampleSet(p.n, p.k, np.vstack([est.data, online.data]))


# ---------------------------------------------------------------------------
# model files


def model_to_dict(model) -> dict:
    return model.to_dict() if isinstance(model, MixtureModel) else bayes_net_to_dict(model)


def model_from_dict(doc: dict):
    kind = doc.get("type")
    if kind == "mixture":
        return MixtureModel.from_dict(doc)
    if kind == "bayes_net":
        return bayes_net_from_dict(doc)
    raise ValueError(f"unknown model type {kind!r}")


def load_model(path):
    return model_from_dict(load_json(path))


# ---------------------------------------------------------------------------
# experiments


@dataclass
class ExperimentConfig:
    """Flat experiment description; every key can be set from JSON or ``--set``."""

    family: str = "tree"
    algo: str = "ewa"
    n: int = 5
    k: int = 2
    d: int = 1
    graph: str = ""
    cpt_min: float = 0.1
    edge_keep: float = 0.8
    T: int = 500
    estimation_size: int = 500
    eta: float = 0.0
    eta_policy: str = ""
    epsilon: float = 0.1
    delta: float = 0.1
    tau_mode: str = "analytic"
    seed: int = 0
    holdout_size: int = 0
    kl_cap: int = 2**16
    regret: bool = True

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        names = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(doc) - set(names)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**{k: _coerce(names[k].type, v) for k, v in doc.items()})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def learner_config(self, skeleton: UndirectedGraph | None) -> LearnerConfig:
        return LearnerConfig(
            family=self.family,
            T=self.T,
            estimation_size=self.estimation_size,
            d=self.d,
            skeleton=skeleton if self.family == "chordal" else None,
            eta=self.eta or None,
            eta_policy=self.eta_policy or None,
            epsilon=self.epsilon,
            delta=self.delta,
            tau_mode=self.tau_mode,
        )


def _coerce(typ, value):
    typ = typ if isinstance(typ, str) else typ.__name__
    if typ == "bool":
        if isinstance(value, str):
            if value.lower() in ("1", "true", "yes"):
                return True
            if value.lower() in ("0", "false", "no"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        return bool(value)
    if typ == "int":
        return int(value)
    if typ == "float":
        return float(value)
    return str(value)


def learn_model(algo: str, samples: SampleSet, cfg: LearnerConfig, rng: np.random.Generator):
    if algo == "ewa":
        return ewa_learn(samples, cfg)
    if algo == "rwm":
        return rwm_learn(samples, cfg, rng)
    if algo == "mle":
        return mle_learn(samples, cfg)
    raise ValueError(f"unknown algo {algo!r}")


def evaluate(p_star: BayesNet, model, cap: int, holdout: SampleSet | None) -> dict:
    out: dict = {}
    if p_star.k ** p_star.n <= cap:
        out["kl_exact"] = exact_kl(p_star, model, cap)
    if holdout is not None and len(holdout):
        m, se = empirical_kl(p_star, model, holdout)
        out["kl_empirical"], out["kl_empirical_se"] = m, se
    return out


def run_experiment(config: ExperimentConfig, out_dir: str | Path | None = None) -> dict:
    """gen -> split -> learn -> evaluate; writes all artifacts into ``out_dir``.

    ``metrics.json`` is a pure function of the config; wall time goes to
    ``timing.json``.
    """
    t0 = time.perf_counter()
    out = Path(out_dir) if out_dir is not None else output_root() / f"{config.family}-{config.algo}-seed{config.seed}"
    out.mkdir(parents=True, exist_ok=True)
    skel_in = read_graph(config.graph) if config.graph else None
    params = InstanceParams(config.family, config.n if skel_in is None else skel_in.n, config.k, config.d,
                            config.cpt_min, config.edge_keep, skeleton=skel_in)
    stage = "gen"
    try:
        truth = gen_instance(params, config.seed)
        stage = "data"
        data = draw_dataset(truth.p_star, config.seed, config.estimation_size, config.T)
        holdout = (sample_prefix_stable(truth.p_star, stage_rng(config.seed, "eval"), config.holdout_size)
                   if config.holdout_size else None)
        stage = "learn"
        lcfg = config.learner_config(truth.skeleton)
        res = learn_model(config.algo, data, lcfg, stage_rng(config.seed, "learn"))
        stage = "eval"
        metrics = {"seed": config.seed, "family": config.family, "algo": config.algo, "eta": res.eta,
                   "n": truth.p_star.n, "k": config.k, "d": lcfg.d, "T": config.T,
                   "estimation_size": config.estimation_size}
        metrics.update(evaluate(truth.p_star, res.model, config.kl_cap, holdout))
        metrics.update({k: v for k, v in res.info.items() if k != "T"})
        if isinstance(res.model, BayesNet):
            metrics["structure"] = [list(a) for a in res.model.dag.sorted_arcs()]
        stage = "regret"
        if config.regret and config.algo in ("ewa", "rwm"):
            est, online = split_samples(data, lcfg)
            rep = compute_regret(online, lcfg, build_bank(est, lcfg), res.eta, config.algo,
                                 stage_rng(config.seed, "regret"))
            rep.write_csv(out / "regret.csv")
            metrics["regret"] = rep.summary()
    except OnlineBNError as exc:
        raise type(exc)(f"stage {stage}: {exc}") from exc
    dump_json(bayes_net_to_dict(truth.p_star), out / "p_star.json")
    write_graph(truth.skeleton, out / "skeleton.txt")
    write_samples_csv(data, out / "samples.csv")
    dump_json(model_to_dict(res.model), out / "model.json")
    dump_json(config.to_dict(), out / "config.json")
    dump_json(metrics, out / "metrics.json")
    dump_json({"wall_seconds": time.perf_counter() - t0}, out / "timing.json")
    return metrics
