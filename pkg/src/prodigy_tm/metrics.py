"""Counters gathered by a simulation and the metrics derived from them."""
from __future__ import annotations

from dataclasses import dataclass, field

# energy proxy weights: only ratios between runs are meaningful
E_L1 = 1.0
E_L2 = 4.0
E_HBM = 100.0
E_PF = 0.5


class UndefinedMetric(ValueError):
    pass


@dataclass
class L1BankStats:
    accesses: int = 0
    hits: int = 0
    misses: int = 0
    mshr_merges: int = 0
    fills: int = 0
    demand_fills: int = 0
    replacements: int = 0
    writebacks: int = 0
    prefetch_fills: int = 0
    prefetch_fills_used: int = 0
    prefetch_fills_evicted_unused: int = 0
    prefetch_fills_right_bank: int = 0
    prefetch_probes: int = 0
    blocked: int = 0


@dataclass
class CycleStats:
    l1: list[L1BankStats] = field(default_factory=list)
    xbar_total_queued: int = 0
    xbar_total_through: int = 0
    xbar_window_queued: dict[int, int] = field(default_factory=dict)
    xbar_window_through: dict[int, int] = field(default_factory=dict)
    l2_accesses: int = 0
    l2_hits: int = 0
    l2_misses: int = 0
    l2_stall_cycles: int = 0
    hbm_reads: int = 0
    hbm_writes: int = 0
    pf_candidates: int = 0
    pf_issued: int = 0
    pf_redundant: int = 0
    pf_handoffs: int = 0
    pf_ops: int = 0
    pf_dropped: dict[str, int] = field(default_factory=dict)
    pfhr_allocations: int = 0
    pfhr_squashes: int = 0
    pfhr_alloc_failures: int = 0
    core_cycles_stalled: int = 0
    core_refs_retired: int = 0
    core_loads_retired: int = 0
    core_stores_retired: int = 0

    def total(self, name: str) -> int:
        return sum(getattr(b, name) for b in self.l1)


def miss_rate(stats: CycleStats) -> float:
    acc = stats.total("accesses")
    if acc == 0:
        raise UndefinedMetric("miss rate needs at least one demand access")
    return stats.total("misses") / acc


def prefetch_accuracy(stats: CycleStats) -> float:
    fills = stats.total("prefetch_fills")
    if fills == 0:
        raise UndefinedMetric("prefetch accuracy needs at least one prefetch fill")
    return stats.total("prefetch_fills_used") / fills


def prefetch_placement(stats: CycleStats) -> float:
    """Fraction of prefetch fills that landed in the bank their address colors to."""
    fills = stats.total("prefetch_fills")
    if fills == 0:
        raise UndefinedMetric("no prefetch fills")
    return stats.total("prefetch_fills_right_bank") / fills


def contention_ratio(stats: CycleStats, windowed: bool = True) -> float:
    """Queued crossbar packets per delivered packet.

    With ``windowed`` the ratio is formed per window and averaged over the
    windows that delivered anything.
    """
    if stats.xbar_total_through == 0:
        raise UndefinedMetric("crossbar delivered no packets")
    if not windowed:
        return stats.xbar_total_queued / stats.xbar_total_through
    ratios = [stats.xbar_window_queued.get(w, 0) / thr
              for w, thr in sorted(stats.xbar_window_through.items()) if thr]
    return sum(ratios) / len(ratios)


def replacement_count(stats: CycleStats) -> int:
    return stats.total("replacements")


def energy_proxy(stats: CycleStats, weights=(E_L1, E_L2, E_HBM, E_PF)) -> float:
    a, b, c, e = weights
    l1 = stats.total("accesses") + stats.total("prefetch_probes")
    return (a * l1 + b * stats.l2_accesses + c * (stats.hbm_reads + stats.hbm_writes)
            + e * stats.pf_ops)


def miss_rate_reduction(base: CycleStats, pf: CycleStats) -> float:
    """Relative drop in demand miss rate, e.g. 0.4 for a 40% reduction."""
    b = miss_rate(base)
    if b == 0:
        raise UndefinedMetric("baseline miss rate is zero")
    return 1.0 - miss_rate(pf) / b


def speedup(baseline_cycles: int, cycles: int) -> float:
    if cycles <= 0:
        raise UndefinedMetric("nonpositive cycle count")
    return baseline_cycles / cycles


def _safe(fn, *args):
    try:
        return fn(*args)
    except UndefinedMetric:
        return float("nan")


METRIC_FIELDS = (
    "total_cycles", "l1_accesses", "l1_hits", "l1_misses", "l1_mshr_merges", "l1_fills",
    "l1_replacements", "l1_miss_rate", "prefetch_fills", "prefetch_fills_used",
    "prefetch_fills_evicted_unused", "prefetch_accuracy", "prefetch_placement",
    "xbar_total_queued", "xbar_total_through", "contention_ratio", "l2_accesses", "l2_misses",
    "hbm_reads", "hbm_writes", "pf_candidates", "pf_issued", "pf_redundant", "pf_dropped",
    "pfhr_squashes", "core_cycles_stalled", "refs_retired", "energy_proxy",
)


def flat_record(total_cycles: int, stats: CycleStats) -> dict:
    """Stable-keyed flat record for CSV/JSON reports."""
    return {
        "total_cycles": total_cycles,
        "l1_accesses": stats.total("accesses"),
        "l1_hits": stats.total("hits"),
        "l1_misses": stats.total("misses"),
        "l1_mshr_merges": stats.total("mshr_merges"),
        "l1_fills": stats.total("fills"),
        "l1_replacements": stats.total("replacements"),
        "l1_miss_rate": _safe(miss_rate, stats),
        "prefetch_fills": stats.total("prefetch_fills"),
        "prefetch_fills_used": stats.total("prefetch_fills_used"),
        "prefetch_fills_evicted_unused": stats.total("prefetch_fills_evicted_unused"),
        "prefetch_accuracy": _safe(prefetch_accuracy, stats),
        "prefetch_placement": _safe(prefetch_placement, stats),
        "xbar_total_queued": stats.xbar_total_queued,
        "xbar_total_through": stats.xbar_total_through,
        "contention_ratio": _safe(contention_ratio, stats),
        "l2_accesses": stats.l2_accesses,
        "l2_misses": stats.l2_misses,
        "hbm_reads": stats.hbm_reads,
        "hbm_writes": stats.hbm_writes,
        "pf_candidates": stats.pf_candidates,
        "pf_issued": stats.pf_issued,
        "pf_redundant": stats.pf_redundant,
        "pf_dropped": sum(stats.pf_dropped.values()),
        "pfhr_squashes": stats.pfhr_squashes,
        "core_cycles_stalled": stats.core_cycles_stalled,
        "refs_retired": stats.core_refs_retired,
        "energy_proxy": energy_proxy(stats),
    }
