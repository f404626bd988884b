"""PF engines: DIG-driven candidate generation, handshake routing and PFHR ops.

One :class:`PrefetchUnit` per tile owns the tile's engines (one per L1
bank) and the fused PFHR array.  The simulator feeds it demand accesses and
fills, steps its PFHR operations once per cycle, and drains each engine's
inbox into the owning cache bank.
"""
from __future__ import annotations

from collections import Counter, deque
from typing import NamedTuple

from ..memory.cache import SHARED
from .dig import DIG, EdgeKind
from .pfhr import FusedPFHRArray

OP_QUEUE_DEPTH = 32


class Candidate(NamedTuple):
    node_id: int
    element: int
    block: int


class PFEngine:
    def __init__(self, local_id: int, engine_id: int, distance: int, inbox_depth: int):
        if distance < 1:
            raise ValueError("prefetch distance must be >= 1")
        self.local_id = local_id
        self.engine_id = engine_id
        self.distance = distance
        self.inbox_depth = inbox_depth
        self.inbox: deque = deque()  # (ready_cycle, block, from_engine)
        self.ops: deque = deque()
        self.candidates = 0
        self.issued = 0
        self.redundant = 0
        self.handoffs_in = 0
        self.ops_done = 0
        self.dropped: Counter = Counter()


def set_aggressiveness(engine: PFEngine, d: int) -> None:
    if d < 1:
        raise ValueError("prefetch distance must be >= 1")
    engine.distance = d


class PrefetchUnit:
    def __init__(self, tile: int, num_engines: int, dig: DIG, cfg, mode: str = SHARED,
                 block_size: int = 64, log: list | None = None):
        self.tile = tile
        self.n = num_engines
        self.dig = dig
        self.cfg = cfg
        self.block_size = block_size
        self.mode = mode
        self.log = log
        self.engines = [PFEngine(i, tile * num_engines + i, cfg.distance, cfg.inbox_depth)
                        for i in range(num_engines)]
        self.pfhr = FusedPFHRArray(num_engines, cfg.entries_per_gpe,
                                   fused=self._fused_for(mode), log=log, tile=tile)
        self.last_target: dict[int, int] = {}
        self.active_ops: set[int] = set()
        self.active_inbox: set[int] = set()
        self._values = {n.node_id: (n.values.tolist() if hasattr(n.values, "tolist") else n.values)
                        for n in dig.nodes}
        trig = dig.triggers()
        self.trigger = trig[0] if trig else None
        if self.trigger is not None:
            ranged = any(e.kind is EdgeKind.RANGED for e in dig.out_edges(self.trigger.node_id))
            self._trigger_limit = self.trigger.length - (1 if ranged else 0)
            self.trigger_lo = self.trigger.base_address
            self.trigger_hi = self.trigger.end_address
        else:
            self.trigger_lo = self.trigger_hi = 0

    def _fused_for(self, mode: str) -> bool:
        return mode == SHARED and not self.cfg.ablate_fused_pfhr

    def set_mode(self, mode: str) -> None:
        self.mode = mode
        self.pfhr.set_fused(self._fused_for(mode))
        self.last_target.clear()
        for e in self.engines:
            e.inbox.clear()
            e.ops.clear()
        self.active_ops.clear()
        self.active_inbox.clear()

    @property
    def handshake(self) -> bool:
        return self.mode == SHARED and not self.cfg.ablate_handshake

    def block_of(self, node, index: int) -> int:
        return (node.base_address + index * node.element_size) // self.block_size

    # -- demand side ---------------------------------------------------
    def observe_demand(self, local: int, gpe: int, address: int, cycle: int) -> bool:
        """Queue a trigger op if ``address`` hits the trigger array; True if queued."""
        node = self.trigger
        idx = (address - node.base_address) // node.element_size
        eng = self.engines[local]
        target = idx + eng.distance
        if target >= self._trigger_limit:
            eng.dropped["clamp"] += 1
            return False
        if self.last_target.get(gpe) == target:
            return False
        self.last_target[gpe] = target
        return self._push_op(local, ("T", gpe, idx, target))

    def on_demand_access(self, local: int, gpe: int, address: int, cycle: int) -> list[Candidate]:
        """Immediate (unarbitrated) trigger handling; returns generated candidates."""
        hit = self.dig.locate(address)
        if hit is None or not hit[0].is_trigger:
            return []
        node, idx = hit
        target = idx + self.engines[local].distance
        if target >= self._trigger_limit:
            self.engines[local].dropped["clamp"] += 1
            return []
        return self._trigger(local, gpe, idx, target, cycle)

    def _trigger(self, local, gpe, idx, target, cycle) -> list[Candidate]:
        node = self.trigger
        eng = self.engines[local]
        self.pfhr.squash_stale(local, gpe, node.node_id, self.block_of(node, idx), cycle)
        block = self.block_of(node, target)
        entry = self.pfhr.allocate(local, gpe, node.node_id, target, target + 1, 0, block, cycle)
        if entry is None:
            eng.dropped["pfhr_full"] += 1
            return []
        eng.candidates += 1
        return [Candidate(node.node_id, target, block)]

    # -- fill side -----------------------------------------------------
    def notify_fill(self, local: int, block: int) -> bool:
        if self.pfhr.has_block(local, block):
            return self._push_op(local, ("F", block))
        return False

    def on_fill(self, local: int, block: int, cycle: int) -> list[Candidate]:
        """Expand every live PFHR entry waiting on ``block`` one level down the DIG."""
        eng = self.engines[local]
        out: list[Candidate] = []
        dig = self.dig
        for entry in self.pfhr.match(local, block):
            vals = self._values[entry.node_id]
            node = dig.node(entry.node_id)
            for edge in dig.out_edges(entry.node_id):
                dst = dig.node(edge.dst)
                elems = []
                for k in range(entry.element_index, entry.range_end):
                    if edge.kind is EdgeKind.RANGED:
                        if k + 1 >= node.length:
                            eng.dropped["bad_index"] += 1
                            continue
                        start, end = int(vals[k]), int(vals[k + 1])
                        elems.extend(range(start, min(end, start + self.cfg.max_range)))
                    elif edge.kind is EdgeKind.SINGLE_VALUED:
                        elems.append(int(vals[k]))
                    else:
                        elems.append(k)
                good = []
                for el in elems:
                    if 0 <= el < dst.length:
                        good.append(el)
                    else:
                        eng.dropped["bad_index"] += 1
                eng.candidates += len(good)
                out.extend(self._children(local, entry, dst, good, cycle))
            self.pfhr.retire(entry)
        return out

    def _children(self, local, parent, dst, elems, cycle) -> list[Candidate]:
        eng = self.engines[local]
        base, esize, bs = dst.base_address, dst.element_size, self.block_size
        leaf = self.dig.is_leaf(dst.node_id)
        out = []
        if leaf:
            for el in elems:
                out.append(Candidate(dst.node_id, el, (base + el * esize) // bs))
            return out
        # one PFHR entry per destination block, covering a contiguous run
        run_start = None
        run_block = None
        prev = None
        for el in elems + [None]:
            blk = None if el is None else (base + el * esize) // bs
            if run_start is not None and (blk != run_block or el != prev + 1):
                child = self.pfhr.allocate(local, parent.gpe_id, dst.node_id, run_start, prev + 1,
                                           parent.chain_depth + 1, run_block, cycle)
                if child is None:
                    eng.dropped["pfhr_full"] += prev + 1 - run_start
                else:
                    out.extend(Candidate(dst.node_id, e, run_block) for e in range(run_start, prev + 1))
                run_start = None
            if el is not None and run_start is None:
                run_start, run_block = el, blk
            prev = el
        return out

    # -- routing -------------------------------------------------------
    def owner_of(self, local: int, block: int) -> int:
        return block % self.n if self.handshake else local

    def route_prefetch(self, local: int, candidate, cycle: int):
        """Hand a candidate to the engine whose bank the block maps to.

        Returns the local id of the engine that will issue it, or None if the
        owner's inbox is full.
        """
        block = candidate.block if isinstance(candidate, Candidate) else candidate
        owner = self.owner_of(local, block)
        eng = self.engines[owner]
        if len(eng.inbox) >= eng.inbox_depth:
            self.engines[local].dropped["inbox_full"] += 1
            return None
        eng.inbox.append((cycle if owner == local else cycle + 1, block, local))
        if owner != local:
            eng.handoffs_in += 1
        self.active_inbox.add(owner)
        return owner

    def route_all(self, local: int, candidates: list[Candidate], cycle: int) -> None:
        seen = set()
        for c in candidates:
            if c.block not in seen:
                seen.add(c.block)
                self.route_prefetch(local, c.block, cycle)

    # -- per-cycle PFHR operations ------------------------------------
    def _push_op(self, local: int, op) -> bool:
        eng = self.engines[local]
        if len(eng.ops) >= OP_QUEUE_DEPTH:
            eng.dropped["op_queue_full"] += 1
            return False
        eng.ops.append(op)
        self.active_ops.add(local)
        return True

    def step(self, cycle: int) -> None:
        """Arbitrate for the PFHR array and run one op per granted engine."""
        if not self.active_ops:
            return
        pfhr = self.pfhr
        if pfhr.fused and self.log is None:
            # every engine wants every bank, so the top-priority engine takes all
            n = self.n
            granted = [min(self.active_ops, key=lambda e: (e - cycle) % n)]
        elif pfhr.fused:
            requests = {e: pfhr.accessible(e) for e in self.active_ops}
            granted = pfhr.arbitrate(requests, cycle)
        else:
            granted = sorted(self.active_ops)
            if self.log is not None:
                for e in granted:
                    self.log.append(("pfhr_access", cycle, self.tile, e, e))
        for local in granted:
            eng = self.engines[local]
            op = eng.ops.popleft()
            if not eng.ops:
                self.active_ops.discard(local)
            eng.ops_done += 1
            if op[0] == "T":
                _, gpe, idx, target = op
                cands = self._trigger(local, gpe, idx, target, cycle)
            else:
                cands = self.on_fill(local, op[1], cycle)
            if cands:
                self.route_all(local, cands, cycle)

    def busy(self) -> bool:
        return bool(self.active_ops or self.active_inbox)
