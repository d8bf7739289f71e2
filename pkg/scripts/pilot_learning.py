"""Pilot runs for the end-to-end learning criteria.

Prints exact KL per seed for tree EWA and chordal RWM (and the proper/improper
comparison) at two horizons, plus medians. Used to freeze the thresholds in
the acceptance suite.

    python3 scripts/pilot_learning.py --seeds 10 --family tree --algo ewa
"""

import argparse
import statistics
import time

from onlinebn.harness import ExperimentConfig, run_experiment


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--family", default="tree", choices=["tree", "chordal"])
    ap.add_argument("--algo", default="ewa", choices=["ewa", "rwm", "mle"])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--horizons", default="500,5000")
    ap.add_argument("--estimation-size", type=int, default=5000)
    ap.add_argument("--out", default="/tmp/pilot")
    a = ap.parse_args()
    for T in [int(x) for x in a.horizons.split(",")]:
        t0 = time.perf_counter()
        kls = []
        for seed in range(a.seeds):
            cfg = ExperimentConfig(family=a.family, algo=a.algo, n=5, k=2, d=a.d if a.family == "chordal" else 1,
                                   cpt_min=0.1, T=T, estimation_size=a.estimation_size, seed=seed, regret=False)
            kls.append(run_experiment(cfg, f"{a.out}/{a.family}-{a.algo}-T{T}-s{seed}")["kl_exact"])
        print(f"T={T} median={statistics.median(kls):.4f} max={max(kls):.4f} "
              f"kls={[round(x, 4) for x in kls]} ({time.perf_counter() - t0:.1f}s)")


if __name__ == "__main__":
    main()
