"""Set-associative, non-coherent, write-back cache banks with MSHRs."""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

PRIVATE = "private"
SHARED = "shared"
MODES = (PRIVATE, SHARED)


class CacheConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CacheConfig:
    size_bytes: int = 16 * 1024
    associativity: int = 4
    block_size: int = 64
    mshr_count: int = 8
    ports: int = 1
    mode: str = SHARED

    def __post_init__(self):
        if self.block_size <= 0 or self.block_size & (self.block_size - 1):
            raise CacheConfigError("block_size must be a power of two")
        if self.associativity < 1 or self.mshr_count < 1 or self.ports < 1:
            raise CacheConfigError("associativity, mshr_count and ports must be >= 1")
        if self.size_bytes <= 0 or self.size_bytes % (self.associativity * self.block_size):
            raise CacheConfigError(
                f"size {self.size_bytes} not divisible by associativity*block_size "
                f"({self.associativity}*{self.block_size})")
        if self.mode not in MODES:
            raise CacheConfigError(f"mode must be one of {MODES}")

    @property
    def num_sets(self) -> int:
        return self.size_bytes // (self.associativity * self.block_size)


def color(address: int, block_size: int, num_banks: int) -> int:
    """Bank that owns ``address`` when banks are interleaved at block granularity."""
    return (address // block_size) % num_banks


class Line:
    __slots__ = ("dirty", "prefetch", "used")

    def __init__(self, dirty=False, prefetch=False, used=False):
        self.dirty = dirty
        self.prefetch = prefetch
        self.used = used


class Mshr:
    __slots__ = ("block", "waiters", "is_prefetch", "demand_merged", "dirty", "alloc_cycle")

    def __init__(self, block, is_prefetch, cycle):
        self.block = block
        self.waiters: list = []
        self.is_prefetch = is_prefetch
        self.demand_merged = False
        self.dirty = False
        self.alloc_cycle = cycle


class CacheBank:
    """One cache bank.  Blocks are block numbers (address // block_size).

    ``interleave`` is the number of banks sharing the address space at block
    granularity; those low block bits select the bank and are stripped before
    the set index so every set stays usable.
    """

    def __init__(self, cfg: CacheConfig, bank_id: int = 0, interleave: int = 1):
        self.cfg = cfg
        self.bank_id = bank_id
        self.interleave = interleave
        self.assoc = cfg.associativity
        self.num_sets = cfg.num_sets
        self.mshr_count = cfg.mshr_count
        self.sets: list[OrderedDict] = [OrderedDict() for _ in range(self.num_sets)]
        self.mshrs: dict[int, Mshr] = {}
        self.port_cycle = -1
        self.reset_stats()

    def reset_stats(self):
        self.accesses = 0
        self.hits = 0
        self.misses = 0
        self.mshr_merges = 0
        self.fills = 0
        self.demand_fills = 0
        self.replacements = 0
        self.writebacks = 0
        self.prefetch_fills = 0
        self.prefetch_fills_used = 0
        self.prefetch_fills_evicted_unused = 0
        self.prefetch_fills_right_bank = 0
        self.prefetch_probes = 0
        self.blocked = 0

    def set_index(self, block: int) -> int:
        return (block // self.interleave) % self.num_sets

    def lookup(self, block: int):
        return self.sets[(block // self.interleave) % self.num_sets].get(block)

    def touch(self, block: int):
        """Hit path: LRU update; returns the line."""
        s = self.sets[(block // self.interleave) % self.num_sets]
        s.move_to_end(block)
        return s[block]

    def resident_blocks(self):
        for s in self.sets:
            yield from s.keys()

    def evict(self, set_idx: int):
        """Remove the LRU line of a full set and return (block, line)."""
        s = self.sets[set_idx]
        block, line = s.popitem(last=False)
        self.replacements += 1
        if line.prefetch and not line.used:
            self.prefetch_fills_evicted_unused += 1
        return block, line

    def install(self, block: int, line: Line):
        """Insert as MRU; returns an evicted (block, line) or None."""
        idx = (block // self.interleave) % self.num_sets
        s = self.sets[idx]
        if block in s:
            old = s[block]
            old.dirty = old.dirty or line.dirty
            s.move_to_end(block)
            return None
        victim = self.evict(idx) if len(s) >= self.assoc else None
        s[block] = line
        return victim

    def free_mshrs(self) -> int:
        return self.mshr_count - len(self.mshrs)

    def invalidate_all(self) -> list[int]:
        """Drop every line; returns dirty blocks that must be written back."""
        dirty = [b for s in self.sets for b, ln in s.items() if ln.dirty]
        for s in self.sets:
            s.clear()
        return dirty


def evict(bank: CacheBank, set_idx: int):
    return bank.evict(set_idx)
