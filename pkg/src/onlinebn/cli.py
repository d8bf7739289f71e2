"""Command-line front end.

Exit codes: 0 success, 2 usage or invalid input, 3 numerical failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .arborescence import ArborescenceSampler, WeightedDigraph, count_arborescences
from .bayes_net import CptBank, dump_json, exact_kl, empirical_kl, load_json, read_samples_csv, write_samples_csv, bayes_net_to_dict
from .chordal_dp import ChordalSampler, ChordalStructure, NodeWeights
from .errors import NumericError, OnlineBNError
from .graph_core import format_orientation, read_graph, write_graph
from .harness import (
    ExperimentConfig,
    InstanceParams,
    gen_instance,
    learn_model,
    load_model,
    model_to_dict,
    output_root,
    run_experiment,
    sample_prefix_stable,
    stage_rng,
)
from .learner import LearnerConfig, build_bank, compute_regret, split_samples

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _add_family(p: argparse.ArgumentParser, need_n: bool = False) -> None:
    p.add_argument("--family", choices=["tree", "chordal"], required=True)
    p.add_argument("-n", "--n", type=int, help="number of vertices (tree family)")
    p.add_argument("--graph", help="chordal skeleton file ('n m' header, then one 'u v' edge per line)")
    p.add_argument("-d", "--d", type=int, default=1, help="indegree bound (chordal family)")


def _add_learner(p: argparse.ArgumentParser) -> None:
    p.add_argument("--samples", required=True, help="CSV sample file")
    p.add_argument("-k", "--k", type=int, help="alphabet size (default: max value in the samples)")
    p.add_argument("--T", type=int, required=True, help="online rounds")
    p.add_argument("--estimation-size", type=int, required=True)
    p.add_argument("--eta", type=float)
    p.add_argument("--eta-policy", choices=["ewa-realizable", "rwm", "agnostic-ewa"])
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--tau-mode", choices=["analytic", "realized"], default="analytic")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="onlinebn", description=__doc__)
    ap.add_argument("--show-config", action="store_true", help="print the default experiment config and exit")
    sub = ap.add_subparsers(dest="cmd")

    p = sub.add_parser("gen", help="generate a ground-truth Bayes net and samples")
    p.add_argument("--family", choices=["tree", "chordal"], required=True)
    p.add_argument("-n", "--n", type=int, required=True)
    p.add_argument("-k", "--k", type=int, default=2)
    p.add_argument("-d", "--d", type=int, default=1)
    p.add_argument("--cpt-min", type=float, default=0.1)
    p.add_argument("--edge-keep", type=float, default=0.8)
    p.add_argument("--graph", help="use this chordal skeleton instead of a random one")
    p.add_argument("--samples", type=int, default=1000, help="rows to draw")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory (default: $ONLINEBN_OUTPUT_ROOT/gen-seed<seed>)")

    p = sub.add_parser("learn", help="learn a model from samples")
    p.add_argument("--algo", choices=["ewa", "rwm", "mle"], required=True)
    _add_family(p)
    _add_learner(p)
    p.add_argument("--out", required=True, help="model JSON path")

    p = sub.add_parser("eval", help="KL divergence between two model files")
    p.add_argument("p", help="reference model (the first KL argument)")
    p.add_argument("q", help="approximating model")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--exact", action="store_true", help="sum over the whole domain (default)")
    g.add_argument("--holdout", help="CSV of samples from p for a Monte-Carlo estimate")

    p = sub.add_parser("count", help="weighted count of arborescences or orientations")
    _add_family(p)
    p.add_argument("--weights", help="tree: n x n whitespace matrix of positive arc weights (row = tail)")
    p.add_argument("--samples", help="chordal: CSV samples defining node weights via add-one CPTs")
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--t", type=int, help="chordal: number of sample rows in the weight (default all)")
    p.add_argument("--log", action="store_true", help="print the natural log of the count")

    p = sub.add_parser("sample-structure", help="draw structures (one arc list per block)")
    _add_family(p)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("regret", help="per-round regret report of EWA or RWM")
    p.add_argument("--algo", choices=["ewa", "rwm"], default="ewa")
    _add_family(p)
    _add_learner(p)
    p.add_argument("--out", required=True, help="CSV path")

    p = sub.add_parser("run", help="full pipeline from a flat JSON config")
    p.add_argument("--config", help="JSON file; keys as printed by --show-config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one key")
    p.add_argument("--out", help="run directory (default: $ONLINEBN_OUTPUT_ROOT/<family>-<algo>-seed<seed>)")
    return ap


class UsageError(Exception):
    pass


def _skeleton(args):
    if args.family == "chordal":
        if not args.graph:
            raise UsageError("--graph is required for the chordal family")
        return read_graph(args.graph)
    return None


def _learner_config(args, skeleton) -> LearnerConfig:
    return LearnerConfig(
        family=args.family, T=args.T, estimation_size=args.estimation_size, d=args.d, skeleton=skeleton,
        eta=args.eta, eta_policy=args.eta_policy, epsilon=args.epsilon, delta=args.delta, tau_mode=args.tau_mode,
    )


def _print_count(log_total: float, as_log: bool, unit: bool) -> None:
    if as_log:
        print(repr(float(log_total)))
    elif not math.isfinite(log_total):
        print(0)
    elif unit:
        print(int(round(math.exp(log_total))))
    else:
        print(repr(math.exp(log_total)))


def cmd_gen(args) -> None:
    skel = read_graph(args.graph) if args.graph else None
    params = InstanceParams(args.family, skel.n if skel else args.n, args.k, args.d, args.cpt_min, args.edge_keep,
                            skeleton=skel)
    truth = gen_instance(params, args.seed)
    out = Path(args.out) if args.out else output_root() / f"gen-seed{args.seed}"
    out.mkdir(parents=True, exist_ok=True)
    dump_json(bayes_net_to_dict(truth.p_star), out / "p_star.json")
    write_graph(truth.skeleton, out / "skeleton.txt")
    write_samples_csv(sample_prefix_stable(truth.p_star, stage_rng(args.seed, "data"), args.samples), out / "samples.csv")
    dump_json(truth.meta, out / "instance.json")
    print(out)


def cmd_learn(args) -> None:
    skel = _skeleton(args)
    samples = read_samples_csv(args.samples, args.k)
    res = learn_model(args.algo, samples, _learner_config(args, skel), stage_rng(args.seed, "learn"))
    dump_json(model_to_dict(res.model), args.out)
    print(json.dumps({"eta": res.eta, **res.info}, sort_keys=True))


def cmd_eval(args) -> None:
    p, q = load_model(args.p), load_model(args.q)
    if (p.n, p.k) != (q.n, q.k):
        raise UsageError("models live on different domains")
    if args.holdout:
        m, se = empirical_kl(p, q, read_samples_csv(args.holdout, p.k))
        print(f"{m!r} {se!r}")
    else:
        print(repr(exact_kl(p, q)))


def cmd_count(args) -> None:
    if args.family == "tree":
        if args.n is None:
            raise UsageError("-n is required for the tree family")
        if args.weights:
            w = np.loadtxt(args.weights, ndmin=2)
            if w.shape != (args.n, args.n) or (w < 0).any():
                raise UsageError("weights must be a non-negative n x n matrix")
            with np.errstate(divide="ignore"):
                g = WeightedDigraph(args.n, np.log(w))
        else:
            g = WeightedDigraph.complete(args.n)
        _print_count(count_arborescences(g), args.log, not args.weights)
        return
    skel = _skeleton(args)
    st = ChordalStructure(skel, args.d)
    if args.samples:
        s = read_samples_csv(args.samples)
        w = NodeWeights(CptBank(s, args.d, skeleton=skel), s, args.eta)
        total = st.count(w.at(len(s) if args.t is None else args.t)).log_total
    else:
        total = st.count().log_total
    _print_count(total, args.log, not args.samples)


def cmd_sample_structure(args) -> None:
    rng = stage_rng(args.seed, "sample")
    if args.family == "tree":
        if args.n is None:
            raise UsageError("-n is required for the tree family")
        sampler = ArborescenceSampler(WeightedDigraph.complete(args.n))
        dags = [sampler.sample(rng) for _ in range(args.count)]
    else:
        dags = ChordalSampler(ChordalStructure(_skeleton(args), args.d).count()).sample_many(rng, args.count)
    sys.stdout.write("\n".join(format_orientation(d.arcs) for d in dags))


def cmd_regret(args) -> None:
    skel = _skeleton(args)
    samples = read_samples_csv(args.samples, args.k)
    cfg = _learner_config(args, skel)
    est, online = split_samples(samples, cfg)
    bank = build_bank(est, cfg)
    from .learner import resolve_eta

    eta = resolve_eta(cfg, samples.n, bank, args.algo)
    rep = compute_regret(online, cfg, bank, eta, args.algo, stage_rng(args.seed, "regret"))
    rep.write_csv(args.out)
    print(json.dumps(rep.summary(), sort_keys=True))


def cmd_run(args) -> None:
    doc = load_json(args.config) if args.config else {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        doc[k] = v
    metrics = run_experiment(ExperimentConfig.from_dict(doc), args.out)
    print(json.dumps(metrics, sort_keys=True))


COMMANDS = {
    "gen": cmd_gen,
    "learn": cmd_learn,
    "eval": cmd_eval,
    "count": cmd_count,
    "sample-structure": cmd_sample_structure,
    "regret": cmd_regret,
    "run": cmd_run,
}


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.show_config:
        print(json.dumps(ExperimentConfig().to_dict(), indent=1, sort_keys=True))
        return EXIT_OK
    if args.cmd is None:
        ap.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        COMMANDS[args.cmd](args)
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, json.JSONDecodeError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, OnlineBNError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
