import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prodigy_tm.config import ConfigError, TmConfig
from prodigy_tm.graph import gen_kronecker, gen_uniform_random
from prodigy_tm.kernels import IMAGE_BASE, LOAD, STORE, Stream, run_kernel
from prodigy_tm.sim import (
    ReconfigurationError, SimulationAbort, Simulator, phase_barrier, run_baseline_and_pf,
    run_simulation,
)

SMALL = TmConfig(tiles=1, gpes_per_tile=2, l2_banks_per_tile=1, l2_total_kb=16)


def _stream(refs):
    addr = np.array([a for a, _ in refs], np.int64)
    kind = np.array([k for _, k in refs], np.int8)
    return Stream(addr, kind, np.zeros(len(refs), np.int32))


def _with_streams(streams, gpes=2):
    g = gen_uniform_random(64, 2, 0)
    return dataclasses.replace(run_kernel("pagerank", g, gpes, iters=1), streams=streams)


def test_single_cold_load_timing():
    # L1 miss at 0, crossbar at 1, L2 miss at 2, HBM done 3+8+100, fills at 111/112
    kr = _with_streams([_stream([(IMAGE_BASE, LOAD)]), _stream([])])
    assert Simulator(kr, SMALL, hbm_draw=100).run().total_cycles == 113


def test_l2_hit_reaches_l1_two_cycles_later():
    cfg = SMALL.with_(cache_mode="private")
    first = _stream([(IMAGE_BASE, LOAD)])
    # the second core asks for the same block well after the L2 fill
    late = Stream(np.array([IMAGE_BASE], np.int64), np.array([LOAD], np.int8),
                  np.array([500], np.int32))
    sim = Simulator(_with_streams([first, late]), cfg, hbm_draw=100)
    res = sim.run()
    # 500 L1 miss, 501 xbar, 502 L2 hit, 504 L1 fill, data at 505
    assert res.total_cycles == 505
    assert res.stats.l2_hits == 1


def test_empty_streams_take_zero_cycles():
    kr = _with_streams([_stream([]), _stream([])])
    assert run_simulation(kr, SMALL).total_cycles == 0


def test_store_is_posted():
    kr = _with_streams([_stream([(IMAGE_BASE, STORE)]), _stream([])])
    res = Simulator(kr, SMALL, hbm_draw=100).run()
    assert res.stats.core_cycles_stalled == 0
    assert res.total_cycles == 113  # the fill still has to land


def test_phase_barrier():
    assert phase_barrier([3, 9, 4]) == 10
    assert phase_barrier([]) is None


def test_kernel_config_mismatch():
    kr = _with_streams([_stream([])] * 3, gpes=3)
    with pytest.raises(ValueError):
        run_simulation(kr, SMALL)


def test_bad_config_rejected():
    with pytest.raises(ConfigError):
        TmConfig(l1_assoc=3)
    with pytest.raises(ConfigError):
        TmConfig(cache_mode="banked")


def test_max_cycles_abort():
    g = gen_uniform_random(200, 4, 0)
    kr = run_kernel("pagerank", g, 2, iters=1)
    with pytest.raises(SimulationAbort):
        run_simulation(kr, SMALL.with_(max_cycles=50))


def _check_conservation(res, kr):
    st_ = res.stats
    assert st_.core_refs_retired == kr.total_refs
    assert st_.core_loads_retired + st_.core_stores_retired == kr.total_refs
    for b in st_.l1:
        assert b.hits + b.misses == b.accesses
        assert b.demand_fills == b.misses - b.mshr_merges
        assert b.fills == b.demand_fills + b.prefetch_fills
        assert b.prefetch_fills_used + b.prefetch_fills_evicted_unused <= b.prefetch_fills
        assert b.prefetch_fills_right_bank <= b.prefetch_fills
    assert st_.l2_hits + st_.l2_misses <= st_.l2_accesses
    rec = res.record()
    for k in ("l1_miss_rate", "prefetch_accuracy", "prefetch_placement"):
        v = rec[k]
        assert np.isnan(v) or 0.0 <= v <= 1.0


CFG = TmConfig(tiles=2, gpes_per_tile=4, l1_size_kb_per_bank=1, l1_assoc=2,
               l2_banks_per_tile=2, l2_total_kb=16)


@settings(max_examples=15, deadline=None)
@given(st.sampled_from(["pagerank", "bfs", "sssp"]), st.integers(0, 1000),
       st.sampled_from(["shared", "private"]), st.booleans(), st.booleans())
def test_conservation_and_determinism(kernel, seed, mode, pf, ablate):
    g = gen_uniform_random(150, 3, seed, weighted=True)
    kw = {"iters": 2} if kernel == "pagerank" else {}
    kr = run_kernel(kernel, g, 8, **kw)
    cfg = CFG.with_(cache_mode=mode, pf_enabled=pf, ablate_handshake=ablate, seed=seed)
    a = run_simulation(kr, cfg)
    _check_conservation(a, kr)
    b = run_simulation(kr, cfg)
    assert a.record() == b.record() or np.isnan(a.record()["prefetch_accuracy"])
    assert a.total_cycles == b.total_cycles
    # the arbitration fast path and the fully logged path agree
    c = Simulator(kr, cfg, record_events=True).run()
    assert c.total_cycles == a.total_cycles


def test_event_log_invariants():
    g = gen_kronecker(7, 4, 1)
    kr = run_kernel("pagerank", g, 8, iters=2)
    sim = Simulator(kr, CFG.with_(pf_enabled=True), record_events=True)
    res = sim.run()
    ev = res.events
    assert sim.coloring_violations() == 0
    per_cycle = {}
    for e in ev:
        if e[0] == "pfhr_access":
            per_cycle.setdefault(e[1:4], set()).add(e[4])
        if e[0] == "squash":
            assert e[5] == e[6]
    # each PFHR bank serves at most one engine per cycle
    assert all(len(v) == 1 for v in per_cycle.values())
    fills = [e for e in ev if e[0] == "fill" and e[4]]
    assert len(fills) == res.stats.total("prefetch_fills")
    assert all(e[3] % 4 == e[2] % 4 for e in fills)


def test_zero_latency_memory_is_not_slower():
    g = gen_uniform_random(300, 4, 2)
    for kernel in ("pagerank", "bfs"):
        kr = run_kernel(kernel, g, 8, **({"iters": 1} if kernel == "pagerank" else {}))
        for pf in (False, True):
            slow = run_simulation(kr, CFG.with_(pf_enabled=pf)).total_cycles
            fast = run_simulation(kr, CFG.with_(pf_enabled=pf, hbm_lat_min=0, hbm_lat_max=0)).total_cycles
            assert fast <= slow


def test_reconfigure():
    g = gen_uniform_random(100, 3, 0)
    kr = run_kernel("pagerank", g, 8, iters=1)
    sim = Simulator(kr, CFG.with_(pf_enabled=True))
    sim.run()
    bank = sim.l1[0]
    dirty = sum(1 for s in bank.sets for ln in s.values() if ln.dirty)
    sim.reconfigure(0, "private")
    assert sim.modes[0] == "private" and not sim.pf[0].pfhr.fused
    assert list(bank.resident_blocks()) == []
    assert dirty == 0 or sim.l2[0] is not None
    sim.l1[1].mshrs[5] = object()
    with pytest.raises(ReconfigurationError):
        sim.reconfigure(0, "shared")


def test_baseline_and_pf():
    g = gen_uniform_random(400, 4, 1)
    kr = run_kernel("pagerank", g, 8, iters=1)
    out = run_baseline_and_pf(kr, CFG)
    assert out["speedup"] == out["baseline"].total_cycles / out["pf"].total_cycles
    assert out["pf"].stats.pf_issued > 0 and out["baseline"].stats.pf_issued == 0
