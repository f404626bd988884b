"""Crossbar with per-input FIFOs and one delivery per output port per cycle."""
from __future__ import annotations

from collections import deque

READ = 0
WRITEBACK = 1


class Packet:
    __slots__ = ("out", "block", "src", "kind", "ready")

    def __init__(self, out, block, src, kind=READ, ready=0):
        self.out = out
        self.block = block
        self.src = src
        self.kind = kind
        self.ready = ready

    def __repr__(self):
        return f"Packet(out={self.out}, block={self.block}, src={self.src}, kind={self.kind})"


class Crossbar:
    """Round-robin crossbar.

    Each cycle every output port takes at most one packet from the input
    queues whose head targets it.  Every eligible head that is not delivered
    adds one to ``total_queued``; delivered packets add one to
    ``total_through``.  Counters are also kept per window of ``window``
    cycles for windowed contention averaging.
    """

    def __init__(self, num_inputs: int, num_outputs: int, window: int = 1000):
        self.num_inputs = num_inputs
        self.num_outputs = num_outputs
        self.queues = [deque() for _ in range(num_inputs)]
        self.active: set[int] = set()
        self.rr = [0] * num_outputs
        self.window = window
        self.total_queued = 0
        self.total_through = 0
        self.window_queued: dict[int, int] = {}
        self.window_through: dict[int, int] = {}

    def push(self, inp: int, pkt: Packet):
        self.queues[inp].append(pkt)
        self.active.add(inp)

    def pending(self) -> int:
        return sum(len(q) for q in self.queues)

    def tick(self, cycle: int, can_accept=None) -> list[Packet]:
        contenders: dict[int, list[int]] = {}
        queues = self.queues
        for i in sorted(self.active):
            pkt = queues[i][0]
            if pkt.ready <= cycle:
                c = contenders.get(pkt.out)
                if c is None:
                    contenders[pkt.out] = [i]
                else:
                    c.append(i)
        if not contenders:
            return []
        delivered = []
        queued = 0
        n = self.num_inputs
        for out, ins in contenders.items():
            if can_accept is not None and not can_accept(out):
                queued += len(ins)
                continue
            start = self.rr[out]
            win = min(ins, key=lambda i: (i - start) % n)
            self.rr[out] = (win + 1) % n
            q = queues[win]
            delivered.append(q.popleft())
            if not q:
                self.active.discard(win)
            queued += len(ins) - 1
        w = cycle // self.window
        if queued:
            self.total_queued += queued
            self.window_queued[w] = self.window_queued.get(w, 0) + queued
        if delivered:
            self.total_through += len(delivered)
            self.window_through[w] = self.window_through.get(w, 0) + len(delivered)
        return delivered


def xbar_tick(x: Crossbar, cycle: int, can_accept=None) -> list[Packet]:
    return x.tick(cycle, can_accept)
