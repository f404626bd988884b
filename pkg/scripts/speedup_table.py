"""PF-off vs PF-on for PR, BFS and SSSP on one graph; prints a small table.

    python3 scripts/speedup_table.py --graph "uniform n=10000 deg=8 seed=1"
"""
import argparse

from prodigy_tm.config import TmConfig
from prodigy_tm.harness import parse_graph
from prodigy_tm.kernels import run_kernel
from prodigy_tm.metrics import miss_rate, prefetch_accuracy
from prodigy_tm.sim import run_baseline_and_pf


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--graph", default="uniform n=10000 deg=8 seed=1")
    ap.add_argument("--iters", type=int, default=1)
    ap.add_argument("--tiles", type=int, default=4)
    ap.add_argument("--gpes", type=int, default=16)
    args = ap.parse_args()
    g = parse_graph(args.graph).build()
    cfg = TmConfig(tiles=args.tiles, gpes_per_tile=args.gpes)
    print(f"{'kernel':10s} {'miss off':>9s} {'miss on':>9s} {'reduction':>9s} {'accuracy':>9s} {'speedup':>8s}")
    for k in ("pagerank", "bfs", "sssp"):
        kr = run_kernel(k, g, cfg.num_gpes, **({"iters": args.iters} if k == "pagerank" else {}))
        out = run_baseline_and_pf(kr, cfg)
        off, on = miss_rate(out["baseline"].stats), miss_rate(out["pf"].stats)
        print(f"{k:10s} {off:9.4f} {on:9.4f} {1 - on / off:9.2%} "
              f"{prefetch_accuracy(out['pf'].stats):9.2%} {out['speedup']:8.3f}")


if __name__ == "__main__":
    main()
