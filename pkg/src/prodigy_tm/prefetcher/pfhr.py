"""Fused, banked PFHR array shared by the PF engines of one tile.

In fused mode (shared L1) every engine may use every bank, but all banks
are single-ported, so one engine owns the whole array per cycle under a
rotating-priority round robin.  In split mode (private L1) engine ``e``
uses only bank ``e`` and all engines proceed in parallel.
"""
from __future__ import annotations

from dataclasses import dataclass


class PortViolation(AssertionError):
    pass


@dataclass(eq=False)
class PFHREntry:
    gpe_id: int
    node_id: int
    element_index: int
    range_end: int
    chain_depth: int
    issued_block: int
    alloc_cycle: int
    bank: int = -1
    slot: int = -1
    valid: bool = True
    alloc_seq: int = 0


class FusedPFHRArray:
    def __init__(self, num_banks: int, entries_per_bank: int = 8, fused: bool = True,
                 log: list | None = None, tile: int = 0):
        if num_banks < 1 or entries_per_bank < 1:
            raise ValueError("need at least one bank and one entry per bank")
        self.num_banks = num_banks
        self.entries_per_bank = entries_per_bank
        self.fused = fused
        self.banks: list[list[PFHREntry | None]] = [[None] * entries_per_bank
                                                   for _ in range(num_banks)]
        self._by_block: dict[int, list[PFHREntry]] = {}
        self._alloc_seq = 0
        self.log = log
        self.tile = tile
        self.allocations = 0
        self.squashes = 0
        self.alloc_failures = 0
        self.accesses = 0

    # -- structure -----------------------------------------------------
    def accessible(self, engine: int):
        if self.fused:
            return [(engine + k) % self.num_banks for k in range(self.num_banks)]
        return [engine]

    def set_fused(self, fused: bool) -> None:
        """Fuse or split; live run-time state is dropped, as on a mode switch."""
        self.clear()
        self.fused = fused

    def clear(self) -> None:
        for bank in self.banks:
            for i, e in enumerate(bank):
                if e is not None:
                    e.valid = False
                bank[i] = None
        self._by_block.clear()

    def live_entries(self) -> list[PFHREntry]:
        return [e for bank in self.banks for e in bank if e is not None]

    def has_block(self, engine: int, block: int) -> bool:
        lst = self._by_block.get(block)
        if not lst:
            return False
        if self.fused:
            return True
        return any(e.bank == engine for e in lst)

    # -- arbitration ---------------------------------------------------
    def arbitrate(self, requests: dict[int, object], cycle: int) -> list[int]:
        """Grant engines access for this cycle.

        ``requests`` maps engine -> iterable of banks it must access.  Each
        bank grants one requester, highest priority rotating with the cycle
        index; an engine proceeds only if every bank it asked for granted it.
        """
        n = self.num_banks
        per_bank: dict[int, int] = {}
        for eng in sorted(requests, key=lambda e: (e - cycle) % n):
            for b in requests[eng]:
                if not self.fused and b != eng:
                    raise PortViolation(f"engine {eng} touched foreign PFHR bank {b} in split mode")
                per_bank.setdefault(b, eng)
        granted = [eng for eng in requests
                   if all(per_bank.get(b) == eng for b in requests[eng])]
        if self.log is not None:
            for b, eng in per_bank.items():
                if eng in granted:
                    self.log.append(("pfhr_access", cycle, self.tile, b, eng))
        return sorted(granted)

    def request_banks(self, engine: int):
        return self.accessible(engine)

    # -- allocation / squash ------------------------------------------
    def _place(self, entry: PFHREntry, bank: int, slot: int) -> PFHREntry:
        entry.bank, entry.slot = bank, slot
        self.banks[bank][slot] = entry
        self._by_block.setdefault(entry.issued_block, []).append(entry)
        self.allocations += 1
        return entry

    def allocate(self, engine: int, gpe_id: int, node_id: int, element_index: int,
                 range_end: int, chain_depth: int, issued_block: int, cycle: int):
        """Claim a slot, squashing this GPE's oldest entry if none is free.

        Returns the new entry, or None when every accessible slot is held by
        other GPEs.
        """
        self.accesses += 1
        entry = PFHREntry(gpe_id, node_id, element_index, range_end, chain_depth,
                          issued_block, cycle, alloc_seq=self._alloc_seq)
        self._alloc_seq += 1
        for b in self.accessible(engine):
            bank = self.banks[b]
            for s, cur in enumerate(bank):
                if cur is None:
                    return self._place(entry, b, s)
        freed = self.squash(engine, gpe_id, cycle)
        if freed is None:
            self.alloc_failures += 1
            return None
        return self._place(entry, *freed)

    def squash(self, engine: int, gpe_id: int, cycle: int, reason: str = "alloc"):
        """Invalidate this GPE's oldest entry; returns its (bank, slot) or None."""
        victim = None
        for b in self.accessible(engine):
            for e in self.banks[b]:
                if e is not None and e.gpe_id == gpe_id and (
                        victim is None or (e.alloc_cycle, e.alloc_seq) < (victim.alloc_cycle, victim.alloc_seq)):
                    victim = e
        if victim is None:
            return None
        self._remove(victim)
        self.squashes += 1
        if self.log is not None:
            self.log.append(("squash", cycle, self.tile, victim.bank, victim.slot, victim.gpe_id, gpe_id, reason))
        return victim.bank, victim.slot

    def squash_stale(self, engine: int, gpe_id: int, node_id: int, before_block: int,
                     cycle: int) -> int:
        """Drop this GPE's entries on ``node_id`` that demand has already passed."""
        stale = [e for b in self.accessible(engine) for e in self.banks[b]
                 if e is not None and e.gpe_id == gpe_id and e.node_id == node_id
                 and e.issued_block < before_block]
        for e in stale:
            self._remove(e)
            self.squashes += 1
            if self.log is not None:
                self.log.append(("squash", cycle, self.tile, e.bank, e.slot, e.gpe_id, gpe_id, "catch-up"))
        return len(stale)

    def match(self, engine: int, block: int) -> list[PFHREntry]:
        self.accesses += 1
        lst = self._by_block.get(block, ())
        if self.fused:
            return sorted(lst, key=lambda e: e.alloc_seq)
        return sorted((e for e in lst if e.bank == engine), key=lambda e: e.alloc_seq)

    def retire(self, entry: PFHREntry) -> None:
        self._remove(entry)

    def _remove(self, entry: PFHREntry) -> None:
        if not entry.valid:
            return
        entry.valid = False
        self.banks[entry.bank][entry.slot] = None
        lst = self._by_block[entry.issued_block]
        lst.remove(entry)
        if not lst:
            del self._by_block[entry.issued_block]


def squash(array: FusedPFHRArray, gpe_id: int, cycle: int, engine: int = 0):
    return array.squash(engine, gpe_id, cycle)


def pfhr_arbitrate(array: FusedPFHRArray, requests: dict[int, object], cycle: int) -> list[int]:
    return array.arbitrate(requests, cycle)
