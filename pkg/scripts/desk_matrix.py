"""Evaluate the directional acceptance checks on a desk-scale sweep matrix.

Usage: python scripts/desk_matrix.py [--rho0] [--dim N] [--lr F] [--alpha F] [--bs N]
Prints per-seed quantities and the P6-P11 verdicts.
"""

import argparse
import time

import numpy as np

from feedsim import engine, experiment, graph, learners

ALGOS = ["random", "chronological", "minimize_rho", "ncf", "widedeep"]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rho0", action="store_true")
    ap.add_argument("--dim", type=int, default=8)
    ap.add_argument("--mlp", type=str, default="16,8")
    ap.add_argument("--lr", type=float, default=0.3)
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--bs", type=int, default=128)
    ap.add_argument("--netseed", type=int, default=99)
    ap.add_argument("--seeds", type=str, default="1,2,3")
    args = ap.parse_args()
    mlp = tuple(int(x) for x in args.mlp.split(","))
    seeds = [int(s) for s in args.seeds.split(",")]

    net = graph.generate_synthetic(5000, 40_000, 500, seed=args.netseed)
    R = {}
    for seed in seeds:
        if args.rho0:
            traits = graph.assign_traits(net, 0.15, target_rho=0.0, tolerance=0.005, seed=seed)
        else:
            traits = graph.assign_traits(net, 0.15, seed=seed)
        for algo in ALGOS:
            cfg = engine.SimConfig(seed=seed, algorithm=algo, prevalence=0.15, feed_length=30)
            lcfg = learners.LearnerConfig(seed=seed, embedding_dim=args.dim, mlp_layers=mlp,
                                          learning_rate=args.lr, focal_alpha=args.alpha,
                                          batch_size=args.bs)
            ranker = experiment.build_ranker(cfg, lcfg, net, traits)
            t0 = time.perf_counter()
            rows, _ = engine.run_simulation(net, traits, cfg, ranker)
            R[(algo, seed)] = rows
            b = np.mean([r.b_local for r in rows[10:24]])
            print(f"s{seed} {algo:14s} {time.perf_counter()-t0:5.1f}s b={b:+.4f} "
                  f"gini23={rows[23].gini:.3f} uniq23={rows[23].unique_edges_seen} "
                  f"p30 t5={rows[5].precision_at_30:.4f} t23={rows[23].precision_at_30:.4f}",
                  flush=True)

    def meanb(algo, seed):
        return abs(np.mean([r.b_local for r in R[(algo, seed)][10:24]]))

    def raw_meanb(algo, seed):
        return np.mean([r.b_local for r in R[(algo, seed)][10:24]])

    print("\n--- P6: |b| random & minrho each < ncf & widedeep ---")
    p6 = 0
    for seed in seeds:
        ok = all(meanb(low, seed) < meanb(hi, seed)
                 for low in ("random", "minimize_rho") for hi in ("ncf", "widedeep"))
        p6 += ok
        print(f"  s{seed}: random={meanb('random',seed):.4f} minrho={meanb('minimize_rho',seed):.4f} "
              f"ncf={meanb('ncf',seed):.4f} wd={meanb('widedeep',seed):.4f} -> {ok}")
    print(f"  P6 {'PASS' if p6 >= 2 else 'FAIL'} ({p6}/{len(seeds)})")

    print("--- P7: ncf & wd mean b < 0 ---")
    p7 = sum(raw_meanb("ncf", s) < 0 and raw_meanb("widedeep", s) < 0 for s in seeds)
    print(f"  P7 {'PASS' if p7 >= 2 else 'FAIL'} ({p7}/{len(seeds)})")

    print("--- P8: gini23 random & chrono below ncf & wd; minrho gini2 < gini23 ---")
    p8 = 0
    for seed in seeds:
        g = {a: R[(a, seed)][23].gini for a in ALGOS}
        ok = all(g[lo] < g[hi] for lo in ("random", "chronological") for hi in ("ncf", "widedeep"))
        p8 += ok
        print(f"  s{seed}: {({a: round(g[a],3) for a in ALGOS})} -> {ok}")
    mr_ok = all(R[("minimize_rho", s)][2].gini < R[("minimize_rho", s)][23].gini for s in seeds)
    print(f"  P8 {'PASS' if p8 >= 2 and mr_ok else 'FAIL'} ({p8}/{len(seeds)}, minrho rise={mr_ok})")

    print("--- P9: uniq23 random > minrho > min(ncf, wd) ---")
    p9 = 0
    for seed in seeds:
        u = {a: R[(a, seed)][23].unique_edges_seen for a in ALGOS}
        ok = u["random"] > u["minimize_rho"] > min(u["ncf"], u["widedeep"])
        p9 += ok
        print(f"  s{seed}: {({a: u[a] for a in ALGOS})} -> {ok}")
    print(f"  P9 {'PASS' if p9 >= 2 else 'FAIL'} ({p9}/{len(seeds)})")

    print("--- P10: uniq drop at 24, monotone 0-23 and 24-35 (every run) ---")
    p10 = True
    for (algo, seed), rows in R.items():
        u = [r.unique_edges_seen for r in rows]
        ok = u[24] < u[23] and all(u[t] >= u[t-1] for t in range(1, 24)) \
            and all(u[t] >= u[t-1] for t in range(25, 36))
        if not ok:
            p10 = False
            print(f"  VIOLATION {algo} s{seed}")
    print(f"  P10 {'PASS' if p10 else 'FAIL'}")

    print("--- P11: p30(t23) >= p30(t5) per algorithm ---")
    p11_all = True
    for algo in ALGOS:
        n_ok = sum(R[(algo, s)][23].precision_at_30 >= R[(algo, s)][5].precision_at_30
                   for s in seeds)
        print(f"  {algo}: {n_ok}/{len(seeds)}")
        if n_ok < 2:
            p11_all = False
    print(f"  P11 {'PASS' if p11_all else 'FAIL'}")


if __name__ == "__main__":
    main()
