"""Prefetch distance (aggressiveness) sweep for one kernel.

    python3 scripts/distance_sweep.py --kernel bfs --distances 1 2 4 8 16 32
"""
import argparse

from prodigy_tm.config import TmConfig
from prodigy_tm.harness import parse_graph
from prodigy_tm.kernels import run_kernel
from prodigy_tm.sim import run_simulation


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--graph", default="uniform n=10000 deg=8 seed=1")
    ap.add_argument("--kernel", default="pagerank")
    ap.add_argument("--distances", type=int, nargs="*", default=[1, 2, 4, 8, 16, 32])
    args = ap.parse_args()
    g = parse_graph(args.graph).build()
    cfg = TmConfig()
    kr = run_kernel(args.kernel, g, cfg.num_gpes, **({"iters": 1} if args.kernel == "pagerank" else {}))
    base = run_simulation(kr, cfg).total_cycles
    print(f"no prefetch: {base} cycles")
    for d in args.distances:
        r = run_simulation(kr, cfg.with_(pf_enabled=True, pf_distance=d))
        rec = r.record()
        print(f"d={d:3d} cycles {r.total_cycles:8d} speedup {base / r.total_cycles:6.3f} "
              f"accuracy {rec['prefetch_accuracy']:.3f} dropped {rec['pf_dropped']}")


if __name__ == "__main__":
    main()
