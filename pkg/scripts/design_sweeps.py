"""Run the design-space presets for one graph and write a CSV per preset.

    python3 scripts/design_sweeps.py --graph "kron scale=12 ef=8" --out results/ --parallel 4
"""
import argparse
from pathlib import Path

from prodigy_tm.harness import parse_graph, preset, run_experiment

DEFAULT = ("mode-compare", "l1-sweep", "l2-bank-sweep", "tm-size-sweep", "pf-ablation")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--graph", default="uniform n=10000 deg=8 seed=1")
    ap.add_argument("--kernel", default="pagerank")
    ap.add_argument("--iters", type=int, default=1)
    ap.add_argument("--presets", nargs="*", default=DEFAULT)
    ap.add_argument("--out", default="results")
    ap.add_argument("--parallel", type=int, default=1)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gs = parse_graph(args.graph)
    params = {"iters": args.iters} if args.kernel == "pagerank" else {}
    for name in args.presets:
        spec = preset(name, gs, args.kernel, params)
        rows, code = run_experiment(spec, out / f"{name}.csv", args.parallel)
        print(f"{name}: {len(rows)} rows" + (" (some failed)" if code else ""))
        for r in rows:
            print(f"  point {r['point']:2d} cycles {r['total_cycles']!s:>9} speedup {r['speedup']:.3f}")


if __name__ == "__main__":
    main()
