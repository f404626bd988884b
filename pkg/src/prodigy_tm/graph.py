"""CSC graphs, edge-list I/O and synthetic generators.

Columns hold in-neighbors: an edge ``src -> dst`` is stored under column
``dst``.  All kernels in this package are pull-mode, so out-edges are never
materialized.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

CSC_MAGIC = b"CSCG"
CSC_VERSION = 1

# Graph500 R-MAT initiator
RMAT_PROBS = (0.57, 0.19, 0.19, 0.05)
MAX_KRONECKER_SCALE = 24


class GraphError(ValueError):
    pass


class GraphParseError(GraphError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


class GraphValidationError(GraphError):
    pass


class InfeasibleParameters(GraphError):
    pass


@dataclass(eq=False)
class Graph:
    col_ptr: np.ndarray  # int64, length n+1
    row_idx: np.ndarray  # uint32, length m
    edge_weight: np.ndarray  # float32, length m

    @property
    def num_vertices(self) -> int:
        return len(self.col_ptr) - 1

    @property
    def num_edges(self) -> int:
        return len(self.row_idx)

    def in_degrees(self) -> np.ndarray:
        return np.diff(self.col_ptr)

    def out_degrees(self) -> np.ndarray:
        return np.bincount(self.row_idx, minlength=self.num_vertices).astype(np.int64)

    def in_neighbors(self, v: int) -> np.ndarray:
        return self.row_idx[self.col_ptr[v]:self.col_ptr[v + 1]]

    def validate(self) -> None:
        cp = self.col_ptr
        if len(cp) < 1 or cp[0] != 0:
            raise GraphValidationError("col_ptr must start at 0")
        if np.any(np.diff(cp) < 0):
            raise GraphValidationError("col_ptr must be nondecreasing")
        if cp[-1] != len(self.row_idx):
            raise GraphValidationError("col_ptr[n] must equal num_edges")
        if len(self.edge_weight) != len(self.row_idx):
            raise GraphValidationError("edge_weight length must equal num_edges")
        if len(self.row_idx) and int(self.row_idx.max()) >= self.num_vertices:
            raise GraphValidationError("row_idx value out of range")
        if np.any(self.edge_weight < 0):
            raise GraphValidationError("negative edge weight")

    def to_bytes(self) -> bytes:
        """Binary CSC encoding (the on-disk cache format)."""
        header = CSC_MAGIC + struct.pack("<IQQ", CSC_VERSION, self.num_vertices, self.num_edges)
        return b"".join((
            header,
            self.col_ptr.astype("<i8").tobytes(),
            self.row_idx.astype("<u4").tobytes(),
            self.edge_weight.astype("<f4").tobytes(),
        ))

    @classmethod
    def from_bytes(cls, data: bytes) -> "Graph":
        if data[:4] != CSC_MAGIC:
            raise GraphParseError(0, "bad magic")
        version, n, m = struct.unpack_from("<IQQ", data, 4)
        if version != CSC_VERSION:
            raise GraphParseError(0, f"unsupported version {version}")
        off = 4 + struct.calcsize("<IQQ")
        col_ptr = np.frombuffer(data, "<i8", n + 1, off).astype(np.int64)
        off += 8 * (n + 1)
        row_idx = np.frombuffer(data, "<u4", m, off).astype(np.uint32)
        off += 4 * m
        weight = np.frombuffer(data, "<f4", m, off).astype(np.float32)
        g = cls(col_ptr, row_idx, weight)
        g.validate()
        return g

    def edges(self):
        """Yield (src, dst, weight) in column order."""
        for v in range(self.num_vertices):
            for j in range(self.col_ptr[v], self.col_ptr[v + 1]):
                yield int(self.row_idx[j]), v, float(self.edge_weight[j])


def from_edges(n: int, src, dst, weight=None) -> Graph:
    """Build a CSC graph from parallel edge arrays; in-neighbors keep input order."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if weight is None:
        weight = np.ones(len(src), dtype=np.float32)
    weight = np.asarray(weight, dtype=np.float32)
    if len(src) and (src.min() < 0 or dst.min() < 0):
        raise GraphValidationError("negative vertex id")
    if len(src) and max(src.max(), dst.max()) >= n:
        raise GraphValidationError("vertex id exceeds vertex count")
    order = np.argsort(dst, kind="stable")
    counts = np.bincount(dst, minlength=n)
    col_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=col_ptr[1:])
    g = Graph(col_ptr, src[order].astype(np.uint32), weight[order])
    g.validate()
    return g


def load_edge_list(path, weighted: bool = False) -> Graph:
    n_header = None
    m_header = None
    src, dst, wts = [], [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("n="):
                try:
                    fields = dict(tok.split("=", 1) for tok in line.split())
                    n_header = int(fields["n"])
                    m_header = int(fields["m"]) if "m" in fields else None
                except (ValueError, KeyError) as exc:
                    raise GraphParseError(lineno, f"bad header {line!r}") from exc
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise GraphParseError(lineno, f"expected 'src dst [weight]', got {line!r}")
            try:
                s, d = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError as exc:
                raise GraphParseError(lineno, f"non-numeric field in {line!r}") from exc
            if s < 0 or d < 0:
                raise GraphValidationError(f"line {lineno}: negative vertex id")
            if weighted and w < 0:
                raise GraphValidationError(f"line {lineno}: negative weight")
            src.append(s)
            dst.append(d)
            wts.append(w if weighted else 1.0)
    n = 1 + max(max(src, default=-1), max(dst, default=-1))
    if n_header is not None:
        if n_header < n:
            raise GraphValidationError(f"header n={n_header} but ids reach {n - 1}")
        n = n_header
    if m_header is not None and m_header != len(src):
        raise GraphValidationError(f"header m={m_header} but file has {len(src)} edges")
    if n == 0:
        raise GraphValidationError("edge list defines no vertices; add an 'n=' header")
    return from_edges(n, src, dst, wts)


def save_edge_list(g: Graph, path, weighted: bool = False) -> None:
    with open(path, "w") as fh:
        fh.write(f"n={g.num_vertices} m={g.num_edges}\n")
        for s, d, w in g.edges():
            fh.write(f"{s} {d} {w!r}\n" if weighted else f"{s} {d}\n")


def save_csc(g: Graph, path) -> None:
    Path(path).write_bytes(g.to_bytes())


def load_csc(path) -> Graph:
    return Graph.from_bytes(Path(path).read_bytes())


def _random_weights(rng: np.random.Generator, m: int, weighted: bool) -> np.ndarray:
    # small integers keep float path sums exact
    if not weighted:
        return np.ones(m, dtype=np.float32)
    return rng.integers(1, 65, size=m).astype(np.float32)


def gen_uniform_random(n: int, avg_degree: float, seed: int, weighted: bool = False) -> Graph:
    """G(n, m) digraph with m = round(n * avg_degree) distinct non-loop edges."""
    if n < 1:
        raise GraphValidationError("n must be >= 1")
    if avg_degree < 0:
        raise GraphValidationError("avg_degree must be >= 0")
    m = int(round(n * avg_degree))
    slots = n * (n - 1)
    if m > slots:
        raise InfeasibleParameters(f"{m} edges requested but only {slots} non-loop slots")
    rng = np.random.default_rng(seed)
    if slots <= 4_000_000 or 2 * m > slots:
        k = rng.choice(slots, size=m, replace=False) if m else np.zeros(0, np.int64)
        src = k // max(n - 1, 1)
        r = k % max(n - 1, 1)
        dst = np.where(r < src, r, r + 1)
    else:
        keys = np.zeros(0, dtype=np.int64)
        while len(keys) < m:
            s = rng.integers(0, n, size=2 * (m - len(keys)) + 16)
            d = rng.integers(0, n, size=len(s))
            cand = (s * n + d)[s != d]
            merged = np.concatenate([keys, cand])
            _, first = np.unique(merged, return_index=True)
            keys = merged[np.sort(first)]
        keys = keys[:m]
        src, dst = keys // n, keys % n
    return from_edges(n, src, dst, _random_weights(rng, m, weighted))


def gen_kronecker(scale: int, edge_factor: int, seed: int, weighted: bool = False,
                  permute: bool = True) -> Graph:
    """R-MAT sampled Kronecker graph with 2**scale vertices and edge_factor * n edges."""
    if not 0 <= scale <= MAX_KRONECKER_SCALE:
        raise GraphValidationError(f"scale must be in [0, {MAX_KRONECKER_SCALE}]")
    if edge_factor < 1:
        raise GraphValidationError("edge_factor must be >= 1")
    n = 1 << scale
    m = edge_factor * n
    rng = np.random.default_rng(seed)
    a, b, c, _ = RMAT_PROBS
    src = np.zeros(m, dtype=np.int64)
    dst = np.zeros(m, dtype=np.int64)
    for level in range(scale):
        r = rng.random(m)
        src_bit = r >= a + b
        dst_bit = ((r >= a) & (r < a + b)) | (r >= a + b + c)
        src |= src_bit.astype(np.int64) << level
        dst |= dst_bit.astype(np.int64) << level
    if permute and n > 1:
        perm = rng.permutation(n)
        src, dst = perm[src], perm[dst]
    return from_edges(n, src, dst, _random_weights(rng, m, weighted))


class DegreeStats(NamedTuple):
    min: int
    max: int
    mean: float


def degree_stats(g: Graph) -> DegreeStats:
    deg = g.in_degrees()
    if len(deg) == 0:
        return DegreeStats(0, 0, 0.0)
    return DegreeStats(int(deg.min()), int(deg.max()), g.num_edges / g.num_vertices)


@dataclass(frozen=True)
class GraphSpec:
    """Recipe for a workload graph; identical specs build identical graphs."""

    kind: str  # "edge-list-file" | "uniform-random" | "kronecker"
    n: int = 0
    avg_degree: float = 0.0
    scale: int = 0
    edge_factor: int = 0
    path: str = ""
    weighted: bool = False
    seed: int = 0

    KINDS = ("edge-list-file", "uniform-random", "kronecker")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise GraphValidationError(f"unknown graph kind {self.kind!r}")
        if self.kind == "uniform-random" and self.n < 1:
            raise GraphValidationError("uniform-random graph needs n >= 1")
        if self.kind == "edge-list-file" and not self.path:
            raise GraphValidationError("edge-list-file graph needs a path")

    def build(self) -> Graph:
        if self.kind == "uniform-random":
            return gen_uniform_random(self.n, self.avg_degree, self.seed, weighted=self.weighted)
        if self.kind == "kronecker":
            return gen_kronecker(self.scale, self.edge_factor, self.seed, weighted=self.weighted)
        if self.path.endswith(".csc"):
            return load_csc(self.path)
        return load_edge_list(self.path, weighted=self.weighted)

    def label(self) -> str:
        if self.kind == "uniform-random":
            return f"ur-n{self.n}-d{self.avg_degree:g}"
        if self.kind == "kronecker":
            return f"kron-s{self.scale}-e{self.edge_factor}"
        return Path(self.path).stem
