"""Experiment specs, canned sweeps and CSV/JSON reports."""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from functools import lru_cache
from pathlib import Path

from .config import ConfigError, TmConfig
from .graph import GraphError, GraphSpec
from .kernels import KERNELS, run_kernel
from .metrics import METRIC_FIELDS, flat_record
from .sim import SimulationAbort, run_simulation

SEED_STRIDE = 10007
TOP_KEYS = ("name", "kernel", "kernel_params", "graph", "tm", "sweep", "points",
            "repetitions", "seed", "baseline", "output")
GRAPH_KEYS = tuple(f.name for f in fields(GraphSpec))
KERNEL_PARAMS = {
    "pagerank": {"damping": "float", "iters": "int"},
    "bfs": {"source": "int"},
    "sssp": {"source": "int"},
}
_TM_TYPES = {f.name: f.type for f in fields(TmConfig)}
_GRAPH_TYPES = {f.name: f.type for f in fields(GraphSpec)}
GRAPH_ALIASES = {"uniform": "uniform-random", "ur": "uniform-random", "uniform-random": "uniform-random",
                 "kron": "kronecker", "kronecker": "kronecker", "rmat": "kronecker",
                 "file": "edge-list-file", "edge-list-file": "edge-list-file"}
FIELD_ALIASES = {"deg": "avg_degree", "degree": "avg_degree", "ef": "edge_factor", "s": "scale"}
PRESETS = ("l1-sweep", "l2-bank-sweep", "mode-compare", "tm-size-sweep", "pf-ablation",
           "paper-sweeps")


@dataclass
class ExperimentSpec:
    name: str
    graph: GraphSpec
    kernel: str = "pagerank"
    kernel_params: dict = field(default_factory=dict)
    tm: TmConfig = field(default_factory=TmConfig)
    sweep: list[tuple[str, list]] = field(default_factory=list)
    points: list[dict] = field(default_factory=list)
    repetitions: int = 1
    seed: int | None = None  # base seed; defaults to tm.seed
    baseline: dict | None = None
    output: str = ""

    def __post_init__(self):
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.kernel not in KERNELS:
            raise ConfigError(f"kernel: unknown kernel {self.kernel!r}")
        for key, values in self.sweep:
            _check_point_key(key, "sweep")
            if not values:
                raise ConfigError(f"sweep.{key}: empty value list")

    def config_points(self) -> list[dict]:
        """Override dicts, one per point: cartesian sweep product, then explicit points."""
        out = []
        if self.sweep:
            keys = [k for k, _ in self.sweep]
            for combo in itertools.product(*(v for _, v in self.sweep)):
                out.append(dict(zip(keys, combo)))
        out.extend(dict(p) for p in self.points)
        if not out:
            out.append({})
        if self.baseline is not None and self.baseline_index(out) is None:
            out.append(dict(self.baseline))
        return out

    def baseline_index(self, points: list[dict]) -> int | None:
        if self.baseline is None:
            return None
        for i, p in enumerate(points):
            if all(p.get(k, getattr(self.tm, k, None) if k != "kernel" else self.kernel) == v
                   for k, v in self.baseline.items()):
                return i
        return None


def _check_point_key(key: str, where: str):
    if key != "kernel" and key not in _TM_TYPES:
        raise ConfigError(f"{where}: unknown config key {key!r}")


def _check_type(value, typ: str, path: str):
    ok = {
        "int": isinstance(value, int) and not isinstance(value, bool),
        "float": isinstance(value, (int, float)) and not isinstance(value, bool),
        "bool": isinstance(value, bool),
        "str": isinstance(value, str),
    }.get(typ, True)
    if not ok:
        raise ConfigError(f"{path}: expected {typ}, got {type(value).__name__} ({value!r})")


def parse_graph(value, path: str = "graph") -> GraphSpec:
    """Accept a dict of GraphSpec fields or a short string such as 'uniform n=1000 deg=8'."""
    if isinstance(value, str):
        toks = value.replace(",", " ").replace(":", " ").split()
        if not toks:
            raise ConfigError(f"{path}: empty graph description")
        head = toks[0].lower()
        if head not in GRAPH_ALIASES:
            if len(toks) == 1:
                return GraphSpec("edge-list-file", path=toks[0])
            raise ConfigError(f"{path}: unknown graph kind {toks[0]!r}")
        d: dict = {"kind": GRAPH_ALIASES[head]}
        for tok in toks[1:]:
            if "=" not in tok:
                if d["kind"] == "edge-list-file" and "path" not in d:
                    d["path"] = tok
                    continue
                raise ConfigError(f"{path}: expected key=value, got {tok!r}")
            k, v = tok.split("=", 1)
            k = FIELD_ALIASES.get(k, k)
            if k == "weighted":
                d[k] = v.lower() in ("1", "true", "yes")
            elif k == "path":
                d[k] = v
            else:
                try:
                    d[k] = int(v)
                except ValueError:
                    try:
                        d[k] = float(v)
                    except ValueError:
                        raise ConfigError(f"{path}.{k}: not a number: {v!r}") from None
        value = d
    if not isinstance(value, dict):
        raise ConfigError(f"{path}: expected object or string")
    for k, v in value.items():
        if k not in _GRAPH_TYPES:
            raise ConfigError(f"{path}: unknown key {k!r}")
        _check_type(v, _GRAPH_TYPES[k], f"{path}.{k}")
    try:
        return GraphSpec(**value)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except GraphError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def parse_tm(value, path: str = "tm") -> TmConfig:
    if value is None:
        return TmConfig()
    if isinstance(value, str):
        try:
            t, g = value.lower().split("x")
            return TmConfig(tiles=int(t), gpes_per_tile=int(g))
        except ValueError:
            raise ConfigError(f"{path}: expected 'TILESxGPES', got {value!r}") from None
    if not isinstance(value, dict):
        raise ConfigError(f"{path}: expected object")
    for k, v in value.items():
        if k not in _TM_TYPES:
            raise ConfigError(f"{path}: unknown key {k!r}")
        _check_type(v, _TM_TYPES[k], f"{path}.{k}")
    return TmConfig(**value)


def _check_point(p, path: str):
    if not isinstance(p, dict):
        raise ConfigError(f"{path}: expected object")
    for k, v in p.items():
        _check_point_key(k, path)
        if k == "kernel":
            if v not in KERNELS:
                raise ConfigError(f"{path}.kernel: unknown kernel {v!r}")
        else:
            _check_type(v, _TM_TYPES[k], f"{path}.{k}")


def spec_from_dict(d: dict, name: str = "experiment") -> ExperimentSpec:
    if not isinstance(d, dict):
        raise ConfigError("config: expected a JSON object")
    for k in d:
        if k not in TOP_KEYS:
            raise ConfigError(f"unknown key {k!r}")
    if "graph" not in d:
        raise ConfigError("graph: missing graph")
    kernel = d.get("kernel", "pagerank")
    if kernel not in KERNELS:
        raise ConfigError(f"kernel: unknown kernel {kernel!r}")
    kp = d.get("kernel_params", {}) or {}
    if not isinstance(kp, dict):
        raise ConfigError("kernel_params: expected object")
    for k, v in kp.items():
        if k not in KERNEL_PARAMS[kernel]:
            raise ConfigError(f"kernel_params: unknown key {k!r} for {kernel}")
        _check_type(v, KERNEL_PARAMS[kernel][k], f"kernel_params.{k}")
    sweep_in = d.get("sweep", []) or []
    sweep = []
    if isinstance(sweep_in, dict):
        sweep_in = [{"key": k, "values": v} for k, v in sweep_in.items()]
    for i, s in enumerate(sweep_in):
        if isinstance(s, (list, tuple)) and len(s) == 2:
            key, values = s
        elif isinstance(s, dict) and set(s) == {"key", "values"}:
            key, values = s["key"], s["values"]
        else:
            raise ConfigError(f"sweep[{i}]: expected {{'key': ..., 'values': [...]}}")
        if not isinstance(values, list):
            raise ConfigError(f"sweep[{i}].values: expected list")
        _check_point_key(key, f"sweep[{i}]")
        for j, v in enumerate(values):
            _check_point({key: v}, f"sweep[{i}].values[{j}]")
        sweep.append((key, list(values)))
    points = d.get("points", []) or []
    if not isinstance(points, list):
        raise ConfigError("points: expected list")
    for i, p in enumerate(points):
        _check_point(p, f"points[{i}]")
    baseline = d.get("baseline")
    if baseline is not None:
        _check_point(baseline, "baseline")
    for key in ("repetitions", "seed"):
        if key in d:
            _check_type(d[key], "int", key)
    if "name" in d:
        _check_type(d["name"], "str", "name")
    try:
        return ExperimentSpec(
            name=d.get("name", name), graph=parse_graph(d["graph"]), kernel=kernel,
            kernel_params=dict(kp), tm=parse_tm(d.get("tm")), sweep=sweep, points=list(points),
            repetitions=d.get("repetitions", 1), seed=d.get("seed"), baseline=baseline,
            output=d.get("output", ""))
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def parse_config(path) -> ExperimentSpec:
    p = Path(path)
    try:
        d = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON: {exc}") from None
    return spec_from_dict(d, name=p.stem)


# -- presets ------------------------------------------------------------
def preset(name: str, graph: GraphSpec, kernel: str = "pagerank",
           kernel_params: dict | None = None, tm: TmConfig | None = None) -> ExperimentSpec:
    tm = tm or TmConfig()
    common = dict(graph=graph, kernel=kernel, kernel_params=dict(kernel_params or {}), tm=tm)
    if name == "l1-sweep":
        return ExperimentSpec(name, sweep=[("l1_size_kb_per_bank", [4, 8, 16, 32]),
                                           ("pf_enabled", [False, True])],
                              baseline={"l1_size_kb_per_bank": 4, "pf_enabled": False}, **common)
    if name == "l2-bank-sweep":
        return ExperimentSpec(name, sweep=[("l2_banks_per_tile", [1, 2, 4, 8]),
                                           ("pf_enabled", [True])],
                              baseline={"l2_banks_per_tile": 1, "pf_enabled": True}, **common)
    if name == "mode-compare":
        return ExperimentSpec(name, sweep=[("cache_mode", ["private", "shared"]),
                                           ("pf_enabled", [False, True])],
                              baseline={"cache_mode": "private", "pf_enabled": False}, **common)
    if name == "tm-size-sweep":
        l1_total = tm.l1_size_kb_per_bank * tm.gpes_per_tile
        pts = [{"gpes_per_tile": g, "l1_size_kb_per_bank": l1_total / g, "pf_enabled": pf}
               for g in (2, 4, 8, 16) for pf in (False, True)]
        return ExperimentSpec(name, points=pts,
                              baseline={"gpes_per_tile": 16, "l1_size_kb_per_bank": l1_total / 16,
                                        "pf_enabled": False}, **common)
    if name == "pf-ablation":
        pts = [{"pf_enabled": False},
               {"pf_enabled": True, "ablate_handshake": True},
               {"pf_enabled": True, "ablate_handshake": False}]
        return ExperimentSpec(name, points=pts, baseline={"pf_enabled": False}, **common)
    if name == "paper-sweeps":
        return ExperimentSpec(name, sweep=[("cache_mode", ["private", "shared"]),
                                           ("l1_size_kb_per_bank", [4, 8, 16, 32]),
                                           ("l2_banks_per_tile", [1, 2, 4, 8]),
                                           ("pf_enabled", [False, True])],
                              baseline={"cache_mode": "shared", "l1_size_kb_per_bank": 16,
                                        "l2_banks_per_tile": 4, "pf_enabled": False}, **common)
    raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


# -- execution ------------------------------------------------------------
@lru_cache(maxsize=4)
def _graph(gs: GraphSpec):
    return gs.build()


@lru_cache(maxsize=8)
def _kernel_run(gs: GraphSpec, kernel: str, params: tuple, num_gpes: int, block: int):
    return run_kernel(kernel, _graph(gs), num_gpes, block_size=block, **dict(params))


def point_config(spec: ExperimentSpec, idx: int, rep: int, overrides: dict) -> tuple[str, TmConfig]:
    kernel = overrides.get("kernel", spec.kernel)
    tm_over = {k: v for k, v in overrides.items() if k != "kernel"}
    base = spec.tm.seed if spec.seed is None else spec.seed
    seed = base + idx * SEED_STRIDE + rep
    return kernel, spec.tm.with_(**tm_over, seed=seed)


def _run_point(job) -> dict:
    spec, idx, rep, overrides = job
    kernel, cfg = point_config(spec, idx, rep, overrides)
    row = {"experiment": spec.name, "point": idx, "repetition": rep, "status": "ok",
           "kernel": kernel, "graph": spec.graph.label()}
    row.update(cfg.to_dict())
    params = spec.kernel_params if kernel == spec.kernel else {}
    try:
        kr = _kernel_run(spec.graph, kernel, tuple(sorted(params.items())), cfg.num_gpes,
                         cfg.block_bytes)
        res = run_simulation(kr, cfg)
        row.update(flat_record(res.total_cycles, res.stats))
    except SimulationAbort as exc:
        row["status"] = "failed"
        row["error"] = str(exc).splitlines()[0]
        row.update({k: float("nan") for k in METRIC_FIELDS})
    return row


def header() -> list[str]:
    return (["experiment", "point", "repetition", "status", "kernel", "graph"]
            + TmConfig.keys() + list(METRIC_FIELDS) + ["speedup", "error"])


def run_experiment(spec: ExperimentSpec, out=None, parallel: int = 1, fmt: str = "csv",
                   max_cycles: int | None = None):
    """Run every point x repetition; returns (rows, exit_code) and writes ``out`` if given."""
    if max_cycles is not None:
        spec = ExperimentSpec(**{**spec.__dict__, "tm": spec.tm.with_(max_cycles=max_cycles)})
    pts = spec.config_points()
    jobs = [(spec, i, r, p) for i, p in enumerate(pts) for r in range(spec.repetitions)]
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as ex:
            rows = list(ex.map(_run_point, jobs))
    else:
        rows = [_run_point(j) for j in jobs]
    b = spec.baseline_index(pts)
    base_cycles = {r["repetition"]: r["total_cycles"] for r in rows if r["point"] == b}
    for r in rows:
        bc = base_cycles.get(r["repetition"])
        ok = r["status"] == "ok" and bc is not None and not math.isnan(bc)
        r["speedup"] = bc / r["total_cycles"] if ok and r["total_cycles"] > 0 else float("nan")
        r.setdefault("error", "")
    code = 2 if any(r["status"] != "ok" for r in rows) else 0
    if out is not None:
        write_report(rows, out, fmt)
    return rows, code


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return v


def report_text(rows: list[dict], fmt: str = "csv") -> str:
    cols = header()
    if fmt == "json":
        clean = [{c: (None if isinstance(r.get(c), float) and math.isnan(r[c]) else r.get(c))
                  for c in cols} for r in rows]
        return json.dumps(clean, indent=1) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in cols])
    return buf.getvalue()


def write_report(rows: list[dict], out, fmt: str = "csv") -> None:
    Path(out).write_text(report_text(rows, fmt))
