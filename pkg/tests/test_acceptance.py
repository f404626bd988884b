"""End-to-end acceptance checks at desk scale.

Runs are cached for the whole module so each (workload, config) pair is
simulated once and shared by every criterion that needs it.
"""
from functools import lru_cache

import numpy as np

from conftest import ACCEPTANCE
from oracles import bfs_queue, dijkstra, pagerank_dense
from prodigy_tm.config import TmConfig
from prodigy_tm.graph import gen_kronecker, gen_uniform_random
from prodigy_tm.harness import report_text, run_experiment, spec_from_dict
from prodigy_tm.kernels import run_bfs, run_kernel, run_pagerank, run_sssp
from prodigy_tm.metrics import contention_ratio, miss_rate, prefetch_placement
from prodigy_tm.prefetcher.pfhr import FusedPFHRArray
from prodigy_tm.sim import run_simulation

BASE = TmConfig()  # 4x16, 16kB L1/bank, 4 L2 banks/tile
GRAPHS = {
    "ur10k": lambda: gen_uniform_random(10_000, 8, seed=1),
    "ur4k": lambda: gen_uniform_random(4096, 8, seed=1),
    "kron12": lambda: gen_kronecker(12, 8, seed=1),
}
KPARAMS = {"pagerank": {"iters": 1}, "bfs": {}, "sssp": {}}
RUNS: dict = {}


def record(n, ok, detail):
    ACCEPTANCE[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


@lru_cache(maxsize=None)
def graph(name):
    return GRAPHS[name]()


@lru_cache(maxsize=None)
def kernel_run(kernel, gname, gpes=64):
    return run_kernel(kernel, graph(gname), gpes, **KPARAMS[kernel])


def sim(kernel, gname, **cfg):
    key = (kernel, gname, tuple(sorted(cfg.items())))
    if key not in RUNS:
        tm = BASE.with_(**cfg)
        kr = kernel_run(kernel, gname, tm.num_gpes)
        RUNS[key] = (kr, run_simulation(kr, tm))
    return RUNS[key][1]


def cycles(*a, **kw):
    return sim(*a, **kw).total_cycles


# 1 ---------------------------------------------------------------------------
def test_c1_kernel_oracles():
    bad = []
    graphs = []
    for seed in range(12):
        graphs.append(("uniform", seed, gen_uniform_random(100 + 150 * seed, 4, seed, weighted=True)))
    for seed in range(10):
        graphs.append(("kron", seed, gen_kronecker(6 + seed % 5, 6, seed, weighted=True)))
    for kind, seed, g in graphs:
        assert g.num_vertices <= 2000
        pr = run_pagerank(g, 16, iters=10)
        if np.max(np.abs(pr.result - pagerank_dense(g, iters=10))) >= 1e-9:
            bad.append((kind, seed, "pagerank"))
        if not np.array_equal(run_bfs(g, 16).result, bfs_queue(g)):
            bad.append((kind, seed, "bfs"))
        if not np.array_equal(run_sssp(g, 16).result, dijkstra(g)):
            bad.append((kind, seed, "sssp"))
    record(1, not bad, f"{len(graphs)} graphs x 3 kernels, mismatches: {bad or 'none'}")
    assert not bad


# 2 ---------------------------------------------------------------------------
def test_c2_handshake_placement():
    full = prefetch_placement(sim("pagerank", "ur10k", pf_enabled=True).stats)
    naive = prefetch_placement(sim("pagerank", "ur10k", pf_enabled=True, ablate_handshake=True).stats)
    ok = full == 1.0 and abs(naive - 1 / 16) <= 0.05
    record(2, ok, f"placement with handshake {full:.4f}, ablated {naive:.4f} (target 0.0625 +- 0.05)")
    assert full == 1.0
    assert abs(naive - 1 / 16) <= 0.05


# 3 ---------------------------------------------------------------------------
def test_c3_squash_isolation():
    rng = np.random.default_rng(2024)
    log = []
    arr = FusedPFHRArray(16, 8, log=log)
    wrong_failure = 0
    events = 100_000
    for cycle in range(events):
        eng = int(rng.integers(16))
        gpe = int(rng.integers(24))
        if rng.random() < 0.25 and arr.live_entries():
            live = arr.live_entries()
            arr.retire(live[int(rng.integers(len(live)))])
            continue
        same = any(e is not None and e.gpe_id == gpe for b in arr.banks for e in b)
        free = any(e is None for b in arr.banks for e in b)
        got = arr.allocate(eng, gpe, 0, 0, 1, 0, int(rng.integers(1000)), cycle)
        if (got is None) != (not free and not same):
            wrong_failure += 1
    cross = sum(1 for ev in log if ev[0] == "squash" and ev[5] != ev[6])
    squashes = sum(1 for ev in log if ev[0] == "squash")
    ok = cross == 0 and wrong_failure == 0 and squashes > 0
    record(3, ok, f"{events} events, {squashes} squashes, cross-GPE {cross}, "
                  f"unexpected allocation outcomes {wrong_failure}")
    assert ok


# 4 ---------------------------------------------------------------------------
def test_c4_miss_rate_reduction_and_speedup():
    parts, fast = [], 0
    ok = True
    for k in ("pagerank", "bfs", "sssp"):
        off, on = sim(k, "ur10k"), sim(k, "ur10k", pf_enabled=True)
        red = 1 - miss_rate(on.stats) / miss_rate(off.stats)
        sp = off.total_cycles / on.total_cycles
        fast += sp > 1.05
        ok &= red >= 0.15
        parts.append(f"{k} reduction {red:.2f} speedup {sp:.2f}")
    ok &= fast >= 2
    record(4, ok, "; ".join(parts))
    assert ok


# 5 ---------------------------------------------------------------------------
def test_c5_baseline_miss_rate():
    mr = miss_rate(sim("pagerank", "ur10k").stats)
    record(5, mr >= 0.15, f"PF-off PR L1 miss rate {mr:.4f} (need >= 0.15)")
    assert mr >= 0.15


# 6 ---------------------------------------------------------------------------
def test_c6_shared_beats_private():
    res = {(m, pf): cycles("pagerank", "kron12", cache_mode=m, pf_enabled=pf)
           for m in ("shared", "private") for pf in (False, True)}
    ok = all(res["shared", pf] < res["private", pf] for pf in (False, True))
    record(6, ok, ", ".join(f"{m}/pf={pf}: {c}" for (m, pf), c in res.items()))
    assert ok


# 7 ---------------------------------------------------------------------------
def test_c7_l1_size_saturation():
    base = cycles("pagerank", "ur10k", l1_size_kb_per_bank=4)
    sp = {s: base / cycles("pagerank", "ur10k", l1_size_kb_per_bank=s, pf_enabled=True)
          for s in (4, 8, 16, 32)}
    mono = sp[4] <= sp[8] <= sp[16]
    sat = sp[32] - sp[16] < sp[16] - sp[8]
    record(7, mono and sat, "speedups " + ", ".join(f"{s}kB {v:.4f}" for s, v in sp.items()))
    assert mono and sat


# 8 ---------------------------------------------------------------------------
def test_c8_l2_banks():
    runs = {b: sim("pagerank", "ur10k", l2_banks_per_tile=b, pf_enabled=True) for b in (1, 2, 4)}
    cr = {b: contention_ratio(r.stats) for b, r in runs.items()}
    sp = {b: 1.0 / r.total_cycles for b, r in runs.items()}
    dec = cr[1] > cr[2] > cr[4]
    sat = sp[4] / sp[2] < sp[2] / sp[1]
    record(8, dec and sat, f"contention {cr[1]:.2f} > {cr[2]:.2f} > {cr[4]:.2f}; "
                           f"gain 1->2 {sp[2] / sp[1]:.3f}, 2->4 {sp[4] / sp[2]:.3f}")
    assert dec and sat


# 9 ---------------------------------------------------------------------------
def test_c9_small_tm_with_pf():
    # 4x8 keeps the total L1 capacity of the 4x16 design
    small = dict(gpes_per_tile=8, l1_size_kb_per_bank=32, pf_enabled=True)
    pairs = []
    for k in ("pagerank", "bfs", "sssp"):
        pairs.append((k, cycles(k, "ur10k", **small), cycles(k, "ur10k")))
        if pairs[-1][1] < pairs[-1][2]:
            break
    ok = any(a < b for _, a, b in pairs)
    record(9, ok, "4x8+PF vs 4x16 no-PF: " + "; ".join(f"{k} {a} vs {b}" for k, a, b in pairs))
    assert ok


# 10 --------------------------------------------------------------------------
def test_c10_sparse_uniform_advantage():
    assert graph("ur4k").num_edges == graph("kron12").num_edges
    sp = {g: cycles("sssp", g) / cycles("sssp", g, pf_enabled=True) for g in ("ur4k", "kron12")}
    ok = sp["ur4k"] > sp["kron12"]
    record(10, ok, f"SSSP speedup uniform {sp['ur4k']:.3f} vs kronecker {sp['kron12']:.3f}")
    assert ok


# 11 --------------------------------------------------------------------------
def test_c11_determinism():
    d = {"name": "det", "graph": "uniform n=10000 deg=8 seed=1", "kernel": "pagerank",
         "kernel_params": {"iters": 1}, "sweep": {"pf_enabled": [False, True]},
         "baseline": {"pf_enabled": False}}
    a = report_text(run_experiment(spec_from_dict(d))[0])
    b = report_text(run_experiment(spec_from_dict(d))[0])
    ok = a == b and len(a.splitlines()) == 3
    record(11, ok, f"two runs of a 2-point experiment, {len(a)} bytes each, identical={a == b}")
    assert ok


# 12 --------------------------------------------------------------------------
def test_c12_conservation():
    problems = []
    for key, (kr, res) in RUNS.items():
        st = res.stats
        if st.core_refs_retired != kr.total_refs:
            problems.append((key, "retired"))
        for b in st.l1:
            if b.hits + b.misses != b.accesses:
                problems.append((key, "hits+misses"))
            if b.demand_fills != b.misses - b.mshr_merges:
                problems.append((key, "fills"))
        rec = res.record()
        for k in ("l1_miss_rate", "prefetch_accuracy", "prefetch_placement"):
            if not (np.isnan(rec[k]) or 0.0 <= rec[k] <= 1.0):
                problems.append((key, k))
    ok = not problems and len(RUNS) > 0
    record(12, ok, f"{len(RUNS)} acceptance runs checked, problems: {problems[:3] or 'none'}")
    assert ok
