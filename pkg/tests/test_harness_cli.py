import json
import subprocess
import sys

import numpy as np
import pytest

from onlinebn.bayes_net import bayes_net_to_dict, dump_json, read_samples_csv
from onlinebn.chordal_dp import ChordalStructure
from onlinebn.cli import main
from onlinebn.graph_core import format_graph, is_chordal, parse_orientation, path_graph
from onlinebn.arborescence import enumerate_arborescences
from onlinebn.harness import (
    ExperimentConfig,
    InstanceParams,
    gen_instance,
    random_d_tree,
    run_experiment,
    stage_rng,
)


def test_stage_streams_are_distinct_and_reproducible():
    a = stage_rng(7, "gen").random(5)
    assert np.array_equal(a, stage_rng(7, "gen").random(5))
    assert not np.array_equal(a, stage_rng(7, "data").random(5))
    assert not np.array_equal(a, stage_rng(8, "gen").random(5))


def test_single_node_instance():
    truth = gen_instance(InstanceParams("tree", n=1, k=3), 0)
    assert truth.p_star.n == 1
    assert truth.p_star.cpts[1].table.shape == (1, 3)


def test_tree_instance_deterministic_and_in_range():
    a = gen_instance(InstanceParams("tree", n=5), 11)
    b = gen_instance(InstanceParams("tree", n=5), 11)
    assert bayes_net_to_dict(a.p_star) == bayes_net_to_dict(b.p_star)
    assert a.p_star.dag.parents(1) == ()
    assert all(a.p_star.dag.indegree(v) == 1 for v in range(2, 6))
    assert 0.1 - 1e-12 <= a.p_star.min_entry()
    assert max(c.table.max() for c in a.p_star.cpts.values()) <= 0.9 + 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_chordal_instance_valid(seed):
    truth = gen_instance(InstanceParams("chordal", n=6, d=2), seed)
    assert is_chordal(truth.skeleton)[0]
    assert np.isfinite(ChordalStructure(truth.skeleton, 2).count().log_total)
    assert truth.p_star.dag.skeleton().edges == truth.skeleton.edges
    assert truth.p_star.dag.max_indegree() <= 2


def test_random_d_tree_is_chordal_with_right_edge_count():
    rng = np.random.default_rng(0)
    for n, d in [(6, 2), (7, 3), (3, 2)]:
        g = random_d_tree(n, d, rng)
        assert is_chordal(g)[0]
        m = d * (d + 1) // 2 + (n - d - 1) * d if n > d else n * (n - 1) // 2
        assert len(g.edges) == m


def test_trivial_experiment(tmp_path):
    m = run_experiment(ExperimentConfig(n=1, T=10, estimation_size=5), tmp_path / "r")
    assert m["kl_exact"] >= 0
    for f in ["p_star.json", "model.json", "metrics.json", "regret.csv", "samples.csv", "timing.json"]:
        assert (tmp_path / "r" / f).exists()


@pytest.mark.parametrize("family,algo,d", [("tree", "ewa", 1), ("chordal", "rwm", 2), ("chordal", "mle", 2)])
def test_experiment_files_are_bit_identical_on_rerun(tmp_path, family, algo, d):
    cfg = ExperimentConfig(family=family, algo=algo, d=d, n=5, T=100, estimation_size=100, seed=3, holdout_size=50)
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    for f in ["p_star.json", "model.json", "metrics.json", "samples.csv", "skeleton.txt", "config.json"]:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    if algo != "mle":
        assert (tmp_path / "a" / "regret.csv").read_bytes() == (tmp_path / "b" / "regret.csv").read_bytes()


def test_config_from_dict_coerces_and_rejects_unknown():
    cfg = ExperimentConfig.from_dict({"T": "20", "regret": "false", "eta": "0.5"})
    assert cfg.T == 20 and cfg.regret is False and cfg.eta == 0.5
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"bogus": 1})


# ---------------------------------------------------------------------------
# CLI


def run_cli(capsys, *args):
    code = main(list(args))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def path3(tmp_path):
    p = tmp_path / "path3.txt"
    p.write_text(format_graph(path_graph(3)))
    return p


def test_count_examples(capsys, path3):
    assert run_cli(capsys, "count", "--family", "tree", "-n", "4")[:2] == (0, "16\n")
    assert run_cli(capsys, "count", "--family", "chordal", "--graph", str(path3), "-d", "1")[:2] == (0, "3\n")
    code, out, _ = run_cli(capsys, "count", "--family", "tree", "-n", "3", "--log")
    assert float(out) == pytest.approx(np.log(3))


def test_weighted_tree_count(capsys, tmp_path):
    w = np.ones((3, 3))
    w[0, 1] = 2.0
    np.savetxt(tmp_path / "w.txt", w)
    code, out, _ = run_cli(capsys, "count", "--family", "tree", "-n", "3", "--weights", str(tmp_path / "w.txt"))
    assert code == 0 and float(out) == pytest.approx(5.0)


def test_eval_self_is_zero(capsys, tmp_path):
    truth = gen_instance(InstanceParams("tree", n=4), 0)
    dump_json(bayes_net_to_dict(truth.p_star), tmp_path / "p.json")
    code, out, _ = run_cli(capsys, "eval", "--exact", str(tmp_path / "p.json"), str(tmp_path / "p.json"))
    assert code == 0 and float(out) == 0.0


def test_gen_learn_eval_regret_pipeline(capsys, tmp_path):
    assert run_cli(capsys, "gen", "--family", "chordal", "-n", "5", "-d", "2", "--samples", "400",
                   "--seed", "2", "--out", str(tmp_path / "g"))[0] == 0
    g = tmp_path / "g"
    common = ["--family", "chordal", "--graph", str(g / "skeleton.txt"), "-d", "2", "--samples",
              str(g / "samples.csv"), "-k", "2", "--T", "200", "--estimation-size", "200"]
    for algo in ("ewa", "rwm", "mle"):
        code, out, err = run_cli(capsys, "learn", "--algo", algo, *common, "--out", str(tmp_path / f"{algo}.json"))
        assert code == 0, err
        code, out, _ = run_cli(capsys, "eval", str(g / "p_star.json"), str(tmp_path / f"{algo}.json"))
        assert code == 0 and float(out) >= 0
    code, out, _ = run_cli(capsys, "eval", str(g / "p_star.json"), str(tmp_path / "ewa.json"),
                           "--holdout", str(g / "samples.csv"))
    assert code == 0 and len(out.split()) == 2
    code, out, _ = run_cli(capsys, "regret", *common, "--out", str(tmp_path / "r.csv"))
    assert code == 0
    summary = json.loads(out)
    assert summary["regret"] <= summary["ewa_bound"]
    assert len(read_samples_csv(g / "samples.csv")) == 400


def test_sample_structure_support_has_positive_weight(capsys):
    code, out, _ = run_cli(capsys, "sample-structure", "--family", "tree", "-n", "4", "--count", "300", "--seed", "1")
    assert code == 0
    support = set(enumerate_arborescences(4, 1))
    blocks = [b for b in out.split("\n\n") if b.strip()]
    assert len(blocks) == 300
    assert all(frozenset(parse_orientation(b)) in support for b in blocks)
    again = run_cli(capsys, "sample-structure", "--family", "tree", "-n", "4", "--count", "300", "--seed", "1")[1]
    assert again == out


def test_exit_codes(capsys, tmp_path, path3):
    assert run_cli(capsys, "count", "--family", "chordal", "--graph", str(tmp_path / "missing.txt"))[0] == 4
    assert run_cli(capsys, "sample-structure", "--family", "chordal", "--graph", str(path3), "-d", "0")[0] == 3
    assert run_cli(capsys, "count", "--family", "chordal")[0] == 2
    assert run_cli(capsys, "count", "--family", "tree")[0] == 2
    with pytest.raises(SystemExit) as exc:
        main(["count", "--family", "nope"])
    assert exc.value.code == 2
    assert main([]) == 2
    capsys.readouterr()


def test_show_config_lists_defaults(capsys):
    code, out, _ = run_cli(capsys, "--show-config")
    assert code == 0
    assert json.loads(out) == ExperimentConfig().to_dict()


def test_run_uses_env_output_root(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("ONLINEBN_OUTPUT_ROOT", str(tmp_path / "root"))
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n": 3, "T": 30, "estimation_size": 30, "seed": 4}))
    code, out, err = run_cli(capsys, "run", "--config", str(cfg), "--set", "algo=rwm")
    assert code == 0, err
    assert (tmp_path / "root" / "tree-rwm-seed4" / "metrics.json").exists()
    assert run_cli(capsys, "run", "--set", "nokey")[0] == 2


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "onlinebn", "count", "--family", "tree", "-n", "5"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip() == "125"
