"""Cycle driver for the Transmuter memory system with Prodigy-style prefetching.

Per simulated cycle the phases run in a fixed order:

1. timed events due this cycle (L2 fills from HBM, L1 fills from L2);
2. cores whose next reference is ready issue into their L1 bank;
3. each tile's PF engines arbitrate for the PFHR array and run one op;
4. PF engines issue the heads of their inboxes into their banks;
5. the L1->L2 crossbar moves at most one packet per output port;
6. every L2 bank handles the head of its input queue.

Cycles in which nothing is queued are skipped by jumping to the next timed
event or core wake-up, so the cost scales with activity rather than time.

Fixed latencies (cycles): L1 tag check 1, crossbar traversal 1, L2 tag
check 1, L2 -> L1 response 1.  A core whose load completes at the fill
cycle ``f`` can use the data at ``f + 1``.
"""
from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field

import numpy as np

from .config import TmConfig
from .kernels import BARRIER, LOAD, KernelRun
from .memory.cache import PRIVATE, SHARED, CacheBank, Line, Mshr
from .memory.hbm import HbmModel
from .memory.xbar import READ, WRITEBACK, Crossbar, Packet
from .metrics import CycleStats, L1BankStats, flat_record
from .prefetcher.engine import PrefetchUnit

log = logging.getLogger(__name__)

L1_FILL = 0
L2_FILL = 1

L2_INPUT_DEPTH = 2
# MSHRs a prefetch must leave free for demand misses
PF_MSHR_RESERVE = 1
LIVELOCK_CYCLES = 1_000_000


class SimulationAbort(RuntimeError):
    pass


class ReconfigurationError(RuntimeError):
    pass


@dataclass
class SimResult:
    total_cycles: int
    stats: CycleStats
    result: np.ndarray
    kernel: str = ""
    config: dict = field(default_factory=dict)
    events: list | None = None

    def record(self) -> dict:
        return flat_record(self.total_cycles, self.stats)


def phase_barrier(arrivals: list[int]) -> int | None:
    """Release cycle for cores arriving at the given cycles (None if nobody arrives)."""
    if not arrivals:
        return None
    return max(arrivals) + 1


class Simulator:
    def __init__(self, kr: KernelRun, cfg: TmConfig, record_events: bool = False,
                 hbm_draw: int | None = None):
        if kr.num_gpes != cfg.num_gpes:
            raise ValueError(f"kernel run has {kr.num_gpes} GPEs, config needs {cfg.num_gpes}")
        self.kr = kr
        self.cfg = cfg
        self.G = cfg.gpes_per_tile
        self.T = cfg.tiles
        self.block_size = cfg.block_bytes
        self.shift = cfg.block_bytes.bit_length() - 1
        self.events_log: list | None = [] if record_events else None
        l1cfg = cfg.l1_config()
        l2cfg = cfg.l2_config()
        self.modes = [cfg.cache_mode] * self.T
        inter = self.G if cfg.cache_mode == SHARED else 1
        self.l1 = [CacheBank(l1cfg, b, interleave=inter) for b in range(cfg.num_gpes)]
        self.nl2 = cfg.num_l2_banks
        self.l2 = [CacheBank(l2cfg, b, interleave=self.nl2) for b in range(self.nl2)]
        self.l2q = [[] for _ in range(self.nl2)]
        self.l2_head = [0] * self.nl2
        self.active_l2: set[int] = set()
        self.l2_stall_cycles = 0
        self.xbar = Crossbar(cfg.num_gpes, self.nl2, cfg.contention_window)
        self.hbm = HbmModel(cfg.hbm_channels, cfg.hbm_lat_min, cfg.hbm_lat_max,
                            cfg.hbm_occupancy, seed=cfg.seed)
        self.hbm_draw = hbm_draw
        pcfg = cfg.prefetch_config()
        self.pf: list[PrefetchUnit] | None = None
        if pcfg.enabled:
            self.pf = [PrefetchUnit(t, self.G, kr.dig, pcfg, cfg.cache_mode, cfg.block_bytes,
                                    log=self.events_log) for t in range(self.T)]
        self.events: list = []
        self._seq = 0
        # cores
        self.addr = [s.address.tolist() for s in kr.streams]
        self.kind = [s.kind.tolist() for s in kr.streams]
        self.gap = [s.gap.tolist() for s in kr.streams]
        n = cfg.num_gpes
        self.pos = [0] * n
        self.finish = [0] * n
        self.stalled = [0] * n
        self.miss_start = [0] * n
        self.retired = [0] * n
        self.loads = [0] * n
        self.stores = [0] * n
        self.wake: dict[int, list[int]] = {}
        self.wake_heap: list[int] = []
        self.barrier_wait: list[int] = []
        self.participants = sum(1 for a in self.addr if a)
        self.last_activity = -1
        self.last_progress = 0

    # -- scheduling helpers --------------------------------------------
    def _schedule(self, core: int, cycle: int):
        lst = self.wake.get(cycle)
        if lst is None:
            self.wake[cycle] = [core]
            heapq.heappush(self.wake_heap, cycle)
        else:
            lst.append(core)

    def _event(self, cycle: int, kind: int, a: int, b: int):
        self._seq += 1
        heapq.heappush(self.events, (cycle, self._seq, kind, a, b))

    def _retire(self, c: int, t: int):
        """Reference of core ``c`` completed with data usable at ``t + 1``."""
        self.retired[c] += 1
        p = self.pos[c] + 1
        self.pos[c] = p
        self.last_progress = t
        if p < len(self.addr[c]):
            self._schedule(c, t + 1 + self.gap[c][p])
        else:
            self.finish[c] = t + 1

    def _release_barrier(self, t: int):
        for c in sorted(self.barrier_wait):
            p = self.pos[c]
            if p < len(self.addr[c]):
                self._schedule(c, t + 1 + self.gap[c][p])
            else:
                self.finish[c] = t + 1
        self.barrier_wait.clear()
        self.last_progress = t

    def bank_for(self, core: int, block: int) -> int:
        tile = core // self.G
        if self.modes[tile] == SHARED:
            return tile * self.G + block % self.G
        return core

    # -- cores ----------------------------------------------------------
    def _issue(self, c: int, t: int):
        p = self.pos[c]
        k = self.kind[c][p]
        if k == BARRIER:
            self.pos[c] = p + 1
            self.barrier_wait.append(c)
            if len(self.barrier_wait) == self.participants:
                self._release_barrier(t)
            return
        addr = self.addr[c][p]
        block = addr >> self.shift
        tile = c // self.G
        bid = tile * self.G + block % self.G if self.modes[tile] == SHARED else c
        bank = self.l1[bid]
        if bank.port_cycle == t:
            bank.blocked += 1
            self.stalled[c] += 1
            self._schedule(c, t + 1)
            return
        s = bank.sets[(block // bank.interleave) % bank.num_sets]
        line = s.get(block)
        ev = self.events_log
        if line is not None:
            bank.port_cycle = t
            bank.accesses += 1
            bank.hits += 1
            s.move_to_end(block)
            if line.prefetch and not line.used:
                bank.prefetch_fills_used += 1
                if ev is not None:
                    ev.append(("pf_use", t, bid, block))
            line.used = True
            if k == LOAD:
                self.loads[c] += 1
            else:
                line.dirty = True
                self.stores[c] += 1
            if ev is not None:
                ev.append(("access", t, bid, block, "hit"))
            self._retire(c, t)
        else:
            m = bank.mshrs.get(block)
            if m is not None:
                bank.port_cycle = t
                bank.accesses += 1
                bank.misses += 1
                bank.mshr_merges += 1
                if m.is_prefetch and not m.demand_merged:
                    m.demand_merged = True
                if ev is not None:
                    ev.append(("access", t, bid, block, "merge"))
            elif len(bank.mshrs) < bank.mshr_count:
                bank.port_cycle = t
                bank.accesses += 1
                bank.misses += 1
                m = Mshr(block, False, t)
                bank.mshrs[block] = m
                self.xbar.push(bid, Packet(block % self.nl2, block, bid, READ, t + 1))
                if ev is not None:
                    ev.append(("access", t, bid, block, "miss"))
            else:
                bank.blocked += 1
                self.stalled[c] += 1
                self._schedule(c, t + 1)
                return
            if k == LOAD:
                self.loads[c] += 1
                m.waiters.append(c)
                self.miss_start[c] = t
            else:
                self.stores[c] += 1
                m.dirty = True
                self._retire(c, t)
        if self.pf is not None and k == LOAD:
            unit = self.pf[tile]
            if unit.trigger_lo <= addr < unit.trigger_hi:
                unit.observe_demand(bid - tile * self.G, c, addr, t)

    # -- L1 fills --------------------------------------------------------
    def _l1_fill(self, bid: int, block: int, t: int):
        bank = self.l1[bid]
        m = bank.mshrs.pop(block)
        line = Line(m.dirty, m.is_prefetch, m.demand_merged)
        victim = bank.install(block, line)
        ev = self.events_log
        if victim is not None:
            vb, vl = victim
            if ev is not None:
                ev.append(("evict", t, bid, vb, vl.prefetch, vl.used))
            if vl.dirty:
                bank.writebacks += 1
                self.xbar.push(bid, Packet(vb % self.nl2, vb, bid, WRITEBACK, t + 1))
        bank.fills += 1
        if m.is_prefetch:
            bank.prefetch_fills += 1
            if m.demand_merged:
                bank.prefetch_fills_used += 1
            tile = bid // self.G
            if self.modes[tile] == SHARED:
                if block % self.G == bid - tile * self.G:
                    bank.prefetch_fills_right_bank += 1
            else:
                bank.prefetch_fills_right_bank += 1
        else:
            bank.demand_fills += 1
        if ev is not None:
            ev.append(("fill", t, bid, block, m.is_prefetch, m.demand_merged))
        for c in m.waiters:
            self.stalled[c] += t + 1 - self.miss_start[c]
            self._retire(c, t)
        self.last_progress = t
        if self.pf is not None:
            tile = bid // self.G
            self.pf[tile].notify_fill(bid - tile * self.G, block)

    # -- prefetch issue -------------------------------------------------
    def _pf_issue(self, unit: PrefetchUnit, t: int):
        base = unit.tile * self.G
        for local in sorted(unit.active_inbox):
            eng = unit.engines[local]
            inbox = eng.inbox
            ready, block, _src = inbox[0]
            if ready <= t:
                bid = base + local
                bank = self.l1[bid]
                if bank.port_cycle != t:
                    if bank.lookup(block) is not None:
                        bank.port_cycle = t
                        bank.prefetch_probes += 1
                        inbox.popleft()
                        eng.redundant += 1
                        unit.notify_fill(local, block)
                    elif block in bank.mshrs:
                        bank.port_cycle = t
                        bank.prefetch_probes += 1
                        inbox.popleft()
                        eng.redundant += 1
                    elif len(bank.mshrs) < bank.mshr_count - PF_MSHR_RESERVE:
                        bank.port_cycle = t
                        bank.prefetch_probes += 1
                        inbox.popleft()
                        eng.issued += 1
                        bank.mshrs[block] = Mshr(block, True, t)
                        self.xbar.push(bid, Packet(block % self.nl2, block, bid, READ, t + 1))
                        if self.events_log is not None:
                            self.events_log.append(("pf_issue", t, bid, block))
            if not inbox:
                unit.active_inbox.discard(local)

    # -- L2 -------------------------------------------------------------
    def _l2_can_accept(self, out: int) -> bool:
        return len(self.l2q[out]) - self.l2_head[out] < L2_INPUT_DEPTH

    def _l2_step(self, t: int):
        for b in sorted(self.active_l2):
            q = self.l2q[b]
            h = self.l2_head[b]
            pkt = q[h]
            if pkt.ready > t:
                continue
            bank = self.l2[b]
            block = pkt.block
            if pkt.kind == WRITEBACK:
                bank.accesses += 1
                line = bank.lookup(block)
                if line is not None:
                    bank.touch(block).dirty = True
                else:
                    victim = bank.install(block, Line(True))
                    if victim is not None and victim[1].dirty:
                        self.hbm.write(victim[0], t)
            else:
                line = bank.lookup(block)
                if line is not None:
                    bank.accesses += 1
                    bank.hits += 1
                    bank.touch(block)
                    self._event(t + 2, L1_FILL, pkt.src, block)
                else:
                    m = bank.mshrs.get(block)
                    if m is not None:
                        bank.accesses += 1
                        bank.misses += 1
                        bank.mshr_merges += 1
                        m.waiters.append(pkt.src)
                    elif len(bank.mshrs) < bank.mshr_count:
                        bank.accesses += 1
                        bank.misses += 1
                        m = Mshr(block, False, t)
                        m.waiters.append(pkt.src)
                        bank.mshrs[block] = m
                        done = self.hbm.request(block, t + 1, self.hbm_draw)
                        self._event(done, L2_FILL, b, block)
                    else:
                        self.l2_stall_cycles += 1
                        continue
            h += 1
            if h == len(q):
                q.clear()
                h = 0
                self.active_l2.discard(b)
            self.l2_head[b] = h

    def _l2_fill(self, b: int, block: int, t: int):
        bank = self.l2[b]
        m = bank.mshrs.pop(block)
        bank.fills += 1
        victim = bank.install(block, Line(m.dirty))
        if victim is not None and victim[1].dirty:
            self.hbm.write(victim[0], t)
        for src in m.waiters:
            self._event(t + 1, L1_FILL, src, block)
        self.last_progress = t

    # -- reconfiguration ------------------------------------------------
    def reconfigure(self, tile: int, new_mode: str):
        """Switch a tile between private and shared L1 at a phase boundary."""
        if new_mode not in (PRIVATE, SHARED):
            raise ValueError(f"unknown cache mode {new_mode!r}")
        banks = self.l1[tile * self.G:(tile + 1) * self.G]
        if any(b.mshrs for b in banks):
            raise ReconfigurationError("reconfigure with outstanding misses")
        if self.modes[tile] == new_mode:
            return
        for bank in banks:
            for vb in bank.invalidate_all():
                l2b = self.l2[vb % self.nl2]
                victim = l2b.install(vb, Line(True))
                if victim is not None and victim[1].dirty:
                    self.hbm.write(victim[0], max(self.last_activity, 0))
            bank.interleave = self.G if new_mode == SHARED else 1
        self.modes[tile] = new_mode
        if self.pf is not None:
            self.pf[tile].set_mode(new_mode)

    # -- main loop --------------------------------------------------------
    def run(self) -> SimResult:
        for c, a in enumerate(self.addr):
            if a:
                self._schedule(c, self.gap[c][0])
        events = self.events
        wake = self.wake
        wake_heap = self.wake_heap
        xbar = self.xbar
        pf = self.pf
        l2q = self.l2q
        max_cycles = self.cfg.max_cycles
        can_accept = self._l2_can_accept
        t = 0 if (wake_heap or events) else None
        while t is not None:
            if t > max_cycles:
                raise SimulationAbort(f"exceeded max_cycles={max_cycles}")
            if t - self.last_progress > LIVELOCK_CYCLES:
                raise SimulationAbort(self._dump(t))
            active = False
            while events and events[0][0] <= t:
                _, _, kind, a, b = heapq.heappop(events)
                active = True
                if kind == L1_FILL:
                    self._l1_fill(a, b, t)
                else:
                    self._l2_fill(a, b, t)
            due = wake.pop(t, None)
            if due is not None:
                active = True
                while wake_heap and wake_heap[0] <= t:
                    heapq.heappop(wake_heap)
                due.sort()
                for c in due:
                    self._issue(c, t)
            pf_busy = False
            if pf is not None:
                for unit in pf:
                    if unit.active_ops:
                        unit.step(t)
                        active = True
                    if unit.active_inbox:
                        self._pf_issue(unit, t)
                        active = True
                    if unit.active_ops or unit.active_inbox:
                        pf_busy = True
            if xbar.active:
                active = True
                for pkt in xbar.tick(t, can_accept):
                    pkt.ready = t + 1
                    l2q[pkt.out].append(pkt)
                    self.active_l2.add(pkt.out)
            if self.active_l2:
                active = True
                self._l2_step(t)
            if active:
                self.last_activity = t
            if xbar.active or self.active_l2 or pf_busy:
                t += 1
                continue
            nxt = None
            if events:
                nxt = events[0][0]
            if wake_heap:
                w = wake_heap[0]
                nxt = w if nxt is None or w < nxt else nxt
            t = None if nxt is None else max(nxt, t + 1)
        if self.barrier_wait:
            raise SimulationAbort("cores left waiting at a barrier")
        total = 0
        if self.last_activity >= 0:
            total = max(max(self.finish), self.last_activity + 1)
        return SimResult(total, self._collect(), self.kr.result, self.kr.kernel,
                         self.cfg.to_dict(), self.events_log)

    def _dump(self, t: int) -> str:
        lines = [f"no progress for {LIVELOCK_CYCLES} cycles at cycle {t}"]
        for c in range(len(self.addr)):
            if self.pos[c] < len(self.addr[c]):
                lines.append(f"  core {c}: pos {self.pos[c]}/{len(self.addr[c])}")
        for b in self.l1:
            if b.mshrs:
                lines.append(f"  L1 bank {b.bank_id}: mshrs {sorted(b.mshrs)}")
        lines.append(f"  xbar queued packets: {xbar_pending(self.xbar)}")
        return "\n".join(lines)

    def _collect(self) -> CycleStats:
        st = CycleStats()
        for b in self.l1:
            st.l1.append(L1BankStats(
                b.accesses, b.hits, b.misses, b.mshr_merges, b.fills, b.demand_fills,
                b.replacements, b.writebacks, b.prefetch_fills, b.prefetch_fills_used,
                b.prefetch_fills_evicted_unused, b.prefetch_fills_right_bank, b.prefetch_probes,
                b.blocked))
        x = self.xbar
        st.xbar_total_queued = x.total_queued
        st.xbar_total_through = x.total_through
        st.xbar_window_queued = dict(x.window_queued)
        st.xbar_window_through = dict(x.window_through)
        st.l2_accesses = sum(b.accesses for b in self.l2)
        st.l2_hits = sum(b.hits for b in self.l2)
        st.l2_misses = sum(b.misses for b in self.l2)
        st.l2_stall_cycles = self.l2_stall_cycles
        st.hbm_reads = self.hbm.reads
        st.hbm_writes = self.hbm.writes
        if self.pf is not None:
            dropped: dict[str, int] = {}
            for unit in self.pf:
                st.pfhr_allocations += unit.pfhr.allocations
                st.pfhr_squashes += unit.pfhr.squashes
                st.pfhr_alloc_failures += unit.pfhr.alloc_failures
                for e in unit.engines:
                    st.pf_candidates += e.candidates
                    st.pf_issued += e.issued
                    st.pf_redundant += e.redundant
                    st.pf_handoffs += e.handoffs_in
                    st.pf_ops += e.ops_done
                    for k, v in e.dropped.items():
                        dropped[k] = dropped.get(k, 0) + v
            st.pf_dropped = dict(sorted(dropped.items()))
        st.core_cycles_stalled = sum(self.stalled)
        st.core_refs_retired = sum(self.retired)
        st.core_loads_retired = sum(self.loads)
        st.core_stores_retired = sum(self.stores)
        return st

    # -- invariant sweeps (used by tests) --------------------------------
    def coloring_violations(self) -> int:
        bad = 0
        for tile in range(self.T):
            if self.modes[tile] != SHARED:
                continue
            for local in range(self.G):
                bank = self.l1[tile * self.G + local]
                bad += sum(1 for blk in bank.resident_blocks() if blk % self.G != local)
        return bad


def xbar_pending(x: Crossbar) -> int:
    return x.pending()


def run_simulation(kr: KernelRun, cfg: TmConfig, record_events: bool = False,
                   hbm_draw: int | None = None) -> SimResult:
    return Simulator(kr, cfg, record_events, hbm_draw).run()


def run_baseline_and_pf(kr: KernelRun, cfg: TmConfig) -> dict:
    base = run_simulation(kr, cfg.with_(pf_enabled=False))
    pf = run_simulation(kr, cfg.with_(pf_enabled=True))
    return {"baseline": base, "pf": pf, "speedup": base.total_cycles / pf.total_cycles}
