"""Pull-mode graph kernels and the reference streams they emit.

Every kernel computes its result functionally and, in the same pass, records
for each GPE the ordered loads and stores a 1-issue in-order core would make
against a flat memory image.  A BARRIER marker closes each iteration.
Iterations are synchronous: stores become visible only after the barrier.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .graph import Graph
from .prefetcher.dig import DIG, DigEdge, DigError, DigNode, EdgeKind

OFFSETS = "OFFSETS"
NEIGHBORS = "NEIGHBORS"
WEIGHTS = "WEIGHTS"
PROP = "PROP"

LOAD, STORE, BARRIER = 0, 1, 2

INF = 0xFFFFFFFF

KERNELS = ("pagerank", "bfs", "sssp")

# cycles of core work before a reference (1-issue in-order GPE)
LOAD_GAP = 1
STORE_GAP = 4

IMAGE_BASE = 0x10000


@dataclass
class Region:
    array_id: str
    base_address: int
    element_size: int
    length: int
    payload: np.ndarray

    @property
    def end_address(self) -> int:
        return self.base_address + self.element_size * self.length

    def address(self, index: int) -> int:
        return self.base_address + index * self.element_size


@dataclass
class MemoryImage:
    block_size: int
    regions: dict[str, Region] = field(default_factory=dict)

    def region(self, array_id: str) -> Region:
        return self.regions[array_id]

    def locate(self, address: int):
        """Return (region, element index) containing the address, or None."""
        for r in self.regions.values():
            if r.base_address <= address < r.end_address:
                return r, (address - r.base_address) // r.element_size
        return None

    def read(self, address: int):
        hit = self.locate(address)
        if hit is None:
            raise IndexError(f"address {address:#x} outside image")
        r, i = hit
        return r.payload[i]


def layout_graph(g: Graph, block_size: int = 64, base: int = IMAGE_BASE) -> MemoryImage:
    """Place the CSC arrays and one 4-byte property per vertex in block-aligned regions."""
    image = MemoryImage(block_size)
    n, m = g.num_vertices, g.num_edges
    addr = -(-base // block_size) * block_size
    for array_id, esize, length, payload in (
        (OFFSETS, 8, n + 1, g.col_ptr),
        (NEIGHBORS, 4, m, g.row_idx),
        (WEIGHTS, 4, m, g.edge_weight),
        (PROP, 4, n, np.zeros(n)),
    ):
        image.regions[array_id] = Region(array_id, addr, esize, length, payload)
        addr += -(-max(length * esize, 1) // block_size) * block_size
    return image


@dataclass
class Stream:
    """One GPE's references as parallel arrays."""

    address: np.ndarray  # int64
    kind: np.ndarray  # int8: LOAD / STORE / BARRIER
    gap: np.ndarray  # int32 compute cycles preceding the reference

    def __len__(self):
        return len(self.address)

    @property
    def num_refs(self) -> int:
        return int(np.count_nonzero(self.kind != BARRIER))

    def refs(self):
        for a, k, gp in zip(self.address.tolist(), self.kind.tolist(), self.gap.tolist()):
            yield int(a), int(k), int(gp)


class _StreamBuilder:
    def __init__(self):
        self.addr: list[int] = []
        self.kind: list[int] = []
        self.gap: list[int] = []

    def load(self, a):
        self.addr.append(a)
        self.kind.append(LOAD)
        self.gap.append(LOAD_GAP)

    def store(self, a):
        self.addr.append(a)
        self.kind.append(STORE)
        self.gap.append(STORE_GAP)

    def barrier(self):
        self.addr.append(0)
        self.kind.append(BARRIER)
        self.gap.append(0)

    def build(self) -> Stream:
        return Stream(np.asarray(self.addr, dtype=np.int64),
                      np.asarray(self.kind, dtype=np.int8),
                      np.asarray(self.gap, dtype=np.int32))


@dataclass
class KernelRun:
    kernel: str
    graph: Graph
    num_gpes: int
    partition: np.ndarray
    result: np.ndarray
    streams: list[Stream]
    image: MemoryImage
    dig: DIG
    iterations: int
    params: dict = field(default_factory=dict)

    @property
    def total_refs(self) -> int:
        return sum(s.num_refs for s in self.streams)


def partition_vertices(n: int, num_gpes: int) -> np.ndarray:
    """Contiguous blocks of ceil(n / num_gpes) vertices; returns vertex -> GPE."""
    if num_gpes < 1:
        raise ValueError("num_gpes must be >= 1")
    chunk = max(1, math.ceil(n / num_gpes))
    return (np.arange(n) // chunk).astype(np.int64)


def _gpe_ranges(n: int, num_gpes: int) -> list[tuple[int, int]]:
    chunk = max(1, math.ceil(n / num_gpes))
    return [(min(n, k * chunk), min(n, (k + 1) * chunk)) for k in range(num_gpes)]


def build_dig(kernel: str, image: MemoryImage) -> DIG:
    need = [OFFSETS, NEIGHBORS, PROP] + ([WEIGHTS] if kernel == "sssp" else [])
    for a in need:
        if a not in image.regions:
            raise DigError(f"{kernel} DIG needs array {a}")
    nodes = []
    for i, a in enumerate(need):
        r = image.regions[a]
        nodes.append(DigNode(i, a, r.base_address, r.length, r.element_size,
                             is_trigger=(a == OFFSETS), values=r.payload))
    edges = [DigEdge(0, 1, EdgeKind.RANGED), DigEdge(1, 2, EdgeKind.SINGLE_VALUED)]
    if kernel == "sssp":
        edges.append(DigEdge(1, 3, EdgeKind.SAME_INDEX))
    return DIG(nodes, edges)


def _addr_tables(image: MemoryImage):
    off = image.region(OFFSETS)
    nei = image.region(NEIGHBORS)
    wei = image.region(WEIGHTS)
    prop = image.region(PROP)
    return (off.base_address, off.element_size, nei.base_address, nei.element_size,
            wei.base_address, wei.element_size, prop.base_address, prop.element_size)


def _finish(kernel, g, num_gpes, result, builders, image, iterations, params):
    image.regions[PROP].payload = params.pop("_prop_init")
    return KernelRun(kernel, g, num_gpes, partition_vertices(g.num_vertices, num_gpes),
                     result, [b.build() for b in builders], image,
                     build_dig(kernel, image), iterations, params)


def run_pagerank(g: Graph, num_gpes: int, damping: float = 0.85, iters: int = 10,
                 block_size: int = 64) -> KernelRun:
    if not 0.0 < damping < 1.0:
        raise ValueError("damping must be in (0, 1)")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    n = g.num_vertices
    image = layout_graph(g, block_size)
    ob, oe, nb, ne, _, _, pb, pe = _addr_tables(image)
    col_ptr = g.col_ptr.tolist()
    row_idx = g.row_idx.tolist()
    outdeg = g.out_degrees().tolist()
    base = (1.0 - damping) / n
    rank = [1.0 / n] * n
    init = np.array(rank)
    builders = [_StreamBuilder() for _ in range(num_gpes)]
    ranges = _gpe_ranges(n, num_gpes)
    for _ in range(iters):
        new = rank[:]
        for k, (lo, hi) in enumerate(ranges):
            sb = builders[k]
            for v in range(lo, hi):
                sb.load(ob + v * oe)
                sb.load(ob + (v + 1) * oe)
                s = 0.0
                for j in range(col_ptr[v], col_ptr[v + 1]):
                    u = row_idx[j]
                    sb.load(nb + j * ne)
                    sb.load(pb + u * pe)
                    d = outdeg[u]
                    if d:
                        s += rank[u] / d
                new[v] = base + damping * s
                sb.store(pb + v * pe)
            sb.barrier()
        rank = new
    return _finish("pagerank", g, num_gpes, np.array(rank), builders, image, iters,
                   {"damping": damping, "iters": iters, "_prop_init": init})


def run_bfs(g: Graph, num_gpes: int, source: int = 0, block_size: int = 64) -> KernelRun:
    n = g.num_vertices
    if not 0 <= source < n:
        raise ValueError("source out of range")
    image = layout_graph(g, block_size)
    ob, oe, nb, ne, _, _, pb, pe = _addr_tables(image)
    col_ptr = g.col_ptr.tolist()
    row_idx = g.row_idx.tolist()
    dist = [INF] * n
    dist[source] = 0
    init = np.array(dist, dtype=np.int64)
    builders = [_StreamBuilder() for _ in range(num_gpes)]
    ranges = _gpe_ranges(n, num_gpes)
    level = 0
    rounds = 0
    while True:
        new = dist[:]
        changed = False
        for k, (lo, hi) in enumerate(ranges):
            sb = builders[k]
            for v in range(lo, hi):
                sb.load(pb + v * pe)
                if dist[v] != INF:
                    continue
                sb.load(ob + v * oe)
                sb.load(ob + (v + 1) * oe)
                for j in range(col_ptr[v], col_ptr[v + 1]):
                    u = row_idx[j]
                    sb.load(nb + j * ne)
                    sb.load(pb + u * pe)
                    if dist[u] == level:
                        new[v] = level + 1
                        changed = True
                        sb.store(pb + v * pe)
                        break
            sb.barrier()
        dist = new
        rounds += 1
        level += 1
        if not changed:
            break
    return _finish("bfs", g, num_gpes, np.array(dist, dtype=np.int64), builders, image,
                   rounds, {"source": source, "_prop_init": init})


def run_sssp(g: Graph, num_gpes: int, source: int = 0, block_size: int = 64) -> KernelRun:
    n = g.num_vertices
    if not 0 <= source < n:
        raise ValueError("source out of range")
    image = layout_graph(g, block_size)
    ob, oe, nb, ne, wb, we, pb, pe = _addr_tables(image)
    col_ptr = g.col_ptr.tolist()
    row_idx = g.row_idx.tolist()
    weight = g.edge_weight.astype(np.float64).tolist()
    inf = float(INF)
    dist = [inf] * n
    dist[source] = 0.0
    init = np.array(dist)
    builders = [_StreamBuilder() for _ in range(num_gpes)]
    ranges = _gpe_ranges(n, num_gpes)
    rounds = 0
    while True:
        new = dist[:]
        changed = False
        for k, (lo, hi) in enumerate(ranges):
            sb = builders[k]
            for v in range(lo, hi):
                sb.load(ob + v * oe)
                sb.load(ob + (v + 1) * oe)
                sb.load(pb + v * pe)
                best = dist[v]
                for j in range(col_ptr[v], col_ptr[v + 1]):
                    u = row_idx[j]
                    sb.load(nb + j * ne)
                    sb.load(wb + j * we)
                    sb.load(pb + u * pe)
                    du = dist[u]
                    if du != inf and du + weight[j] < best:
                        best = du + weight[j]
                if best < dist[v]:
                    new[v] = best
                    changed = True
                    sb.store(pb + v * pe)
            sb.barrier()
        dist = new
        rounds += 1
        if not changed:
            break
    return _finish("sssp", g, num_gpes, np.array(dist), builders, image, rounds,
                   {"source": source, "_prop_init": init})


def run_kernel(kernel: str, g: Graph, num_gpes: int, block_size: int = 64, **params) -> KernelRun:
    if kernel == "pagerank":
        return run_pagerank(g, num_gpes, block_size=block_size, **params)
    if kernel == "bfs":
        return run_bfs(g, num_gpes, block_size=block_size, **params)
    if kernel == "sssp":
        return run_sssp(g, num_gpes, block_size=block_size, **params)
    raise ValueError(f"unknown kernel {kernel!r}")


def replay(kr: KernelRun) -> np.ndarray:
    """Re-execute the streams against the memory image and return the final property array.

    Values come only from the addresses the streams reference, so a stream
    that loads the wrong element produces the wrong answer.
    """
    image = kr.image
    mem = {a: list(r.payload.tolist()) for a, r in image.regions.items()}
    outdeg = kr.graph.out_degrees().tolist()
    n = kr.graph.num_vertices
    regions = sorted(image.regions.values(), key=lambda r: r.base_address)

    def decode(addr):
        for r in regions:
            if r.base_address <= addr < r.end_address:
                return r.array_id, (addr - r.base_address) // r.element_size
        raise IndexError(f"wild reference {addr:#x}")

    cursors = [0] * len(kr.streams)
    streams = [(s.address.tolist(), s.kind.tolist()) for s in kr.streams]
    damping = kr.params.get("damping", 0.85)
    level = 0
    while True:
        pending: dict[int, object] = {}
        active = False
        for k, (addrs, kinds) in enumerate(streams):
            i = cursors[k]
            if i >= len(addrs):
                continue
            active = True
            seg = []
            while kinds[i] != BARRIER:
                seg.append((decode(addrs[i]), kinds[i]))
                i += 1
            cursors[k] = i + 1
            _replay_segment(kr.kernel, seg, mem, pending, outdeg, n, damping, level)
        if not active:
            break
        for idx, val in pending.items():
            mem[PROP][idx] = val
        level += 1
    dtype = np.int64 if kr.kernel == "bfs" else np.float64
    return np.array(mem[PROP], dtype=dtype)


class _Cursor:
    def __init__(self, seg):
        self.seg = seg
        self.i = 0

    def more(self):
        return self.i < len(self.seg)

    def peek(self):
        return self.seg[self.i]

    def take(self, arr, idx, kind=LOAD):
        got = self.seg[self.i]
        if got != ((arr, idx), kind):
            raise AssertionError(f"stream diverges at {self.i}: expected {(arr, idx, kind)}, got {got}")
        self.i += 1


def _replay_segment(kernel, seg, mem, pending, outdeg, n, damping, level):
    cur = _Cursor(seg)
    P, O, N, W = mem[PROP], mem[OFFSETS], mem[NEIGHBORS], mem[WEIGHTS]
    while cur.more():
        (arr, v), _ = cur.peek()
        if kernel == "bfs":
            cur.take(PROP, v)
            if P[v] != INF:
                continue
            cur.take(OFFSETS, v)
            cur.take(OFFSETS, v + 1)
            for j in range(O[v], O[v + 1]):
                cur.take(NEIGHBORS, j)
                u = N[j]
                cur.take(PROP, u)
                if P[u] == level:
                    cur.take(PROP, v, STORE)
                    pending[v] = level + 1
                    break
        elif kernel == "pagerank":
            cur.take(OFFSETS, v)
            cur.take(OFFSETS, v + 1)
            s = 0.0
            for j in range(O[v], O[v + 1]):
                cur.take(NEIGHBORS, j)
                u = N[j]
                cur.take(PROP, u)
                if outdeg[u]:
                    s += P[u] / outdeg[u]
            cur.take(PROP, v, STORE)
            pending[v] = (1.0 - damping) / n + damping * s
        else:
            cur.take(OFFSETS, v)
            cur.take(OFFSETS, v + 1)
            cur.take(PROP, v)
            best = P[v]
            for j in range(O[v], O[v + 1]):
                cur.take(NEIGHBORS, j)
                cur.take(WEIGHTS, j)
                u = N[j]
                cur.take(PROP, u)
                du = P[u]
                if du != float(INF) and du + float(W[j]) < best:
                    best = du + float(W[j])
            if best < P[v]:
                cur.take(PROP, v, STORE)
                pending[v] = best


def dump_trace(kr: KernelRun, path) -> int:
    """Write all streams as little-endian (gpe u32, address u64, kind u8, gap u32) records."""
    rec = struct.Struct("<IQBI")
    count = 0
    with open(path, "wb") as fh:
        for gpe, s in enumerate(kr.streams):
            for a, k, gp in s.refs():
                if k == BARRIER:
                    continue
                fh.write(rec.pack(gpe, a, k, gp))
                count += 1
    return count
