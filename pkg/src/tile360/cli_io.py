"""Config parsing, trace/saliency ingestion, and result emission.

All artifact formats are plain text: YAML for configs, CSV for traces and
saliency maps, CSV or versioned JSON for result tables.  Parsing is total --
every input yields either a validated scenario or an error naming the
offending key path / row -- and emission is deterministic so identical runs
produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import os
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from .buffer_strategy import BufferParams
from .core_model import (
    Instance,
    QoeParams,
    RepresentationLadder,
    SaliencyMap,
    TileGrid,
    UserState,
)
from .fov_geometry import FovExtent, ProbableFovSet, enumerate_probable_fovs
from .relaxed_solver import SolverParams
from .simulator import (
    DEFAULT_LADDER,
    FovTrace,
    NetworkTrace,
    Scenario,
    SynthSpec,
    synth_fov_trace,
    synth_instance,
    synth_trace,
)

__all__ = [
    "ConfigError",
    "ConfigDocument",
    "ResultTable",
    "parse_config",
    "load_config",
    "build_scenario",
    "load_saliency",
    "load_trace",
    "emit_report",
    "load_report",
    "table_from_allocation",
    "table_from_session",
    "table_from_comparison",
]

REPORT_SCHEMA = "tile360-result/1"


class ConfigError(ValueError):
    """Semantic configuration problem; ``path`` names the offending key."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass
class ConfigDocument:
    """Validated configuration with defaults applied.

    ``seed`` stays None when the config omitted it so commands that require
    reproducibility can reject the omission instead of inventing a seed.
    """

    name: str = "scenario"
    seed: Optional[int] = None
    users: int = 3
    epochs: int = 40
    strategy: str = "penalty"
    strategies: Tuple[str, ...] = ()
    rho: float = 0.95
    ladder: RepresentationLadder = field(default_factory=lambda: DEFAULT_LADDER)
    grid: TileGrid = field(default_factory=lambda: TileGrid(4, 8))
    extent: FovExtent = field(default_factory=FovExtent)
    qoe: QoeParams = field(default_factory=QoeParams)
    buffer: BufferParams = field(default_factory=BufferParams)
    solver: SolverParams = field(default_factory=SolverParams)
    synth: SynthSpec = field(default_factory=SynthSpec)
    trace_pattern: str = "constant"
    trace_kw: Dict[str, float] = field(default_factory=dict)
    motion_accuracy: float = 0.9
    motion_drift_deg: float = 8.0
    network_trace_file: Optional[str] = None
    fov_trace_file: Optional[str] = None
    saliency_file: Optional[str] = None
    bandwidth_scales: Tuple[float, ...] = ()
    user_counts: Tuple[int, ...] = ()


def _require_mapping(node, path: str) -> dict:
    if node is None:
        return {}
    if not isinstance(node, dict):
        raise ConfigError("expected a key/value mapping", path)
    return node


def _take(section: dict, allowed: Dict[str, type], path: str) -> dict:
    """Type-check a section and reject unknown keys by name."""
    out = {}
    for key, value in section.items():
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r}", path)
        want = allowed[key]
        if want is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            out[key] = float(value)
        elif want is int and isinstance(value, int) and not isinstance(value, bool):
            out[key] = int(value)
        elif want is bool and isinstance(value, bool):
            out[key] = value
        elif want is str and isinstance(value, str):
            out[key] = value
        elif want is list and isinstance(value, list):
            out[key] = value
        elif value is None:
            out[key] = None
        else:
            raise ConfigError(
                f"expected {want.__name__}, got {type(value).__name__}",
                f"{path}.{key}" if path else key,
            )
    return out


_TOP_KEYS = {
    "name": str, "seed": int, "users": int, "epochs": int, "strategy": str,
    "strategies": list, "rho": float, "ladder": list, "grid": dict,
    "fov": dict, "qoe": dict, "buffer": dict, "solver": dict, "synth": dict,
    "trace": dict, "motion": dict, "files": dict, "sweeps": dict,
}

_TRACE_KEYS = {
    "pattern": str, "t0": int, "t1": int, "factor": float,
    "period": float, "amplitude": float, "step": float,
}


def load_config(text: str) -> ConfigDocument:
    """Parse YAML text into a validated ConfigDocument with defaults."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"config syntax error{where}: {exc}") from exc
    raw = _require_mapping(raw, "")
    for key in raw:
        if key not in _TOP_KEYS:
            raise ConfigError(f"unknown key {key!r}", key)

    doc = ConfigDocument()
    top = _take({k: v for k, v in raw.items() if not isinstance(v, dict)},
                _TOP_KEYS, "")
    if "name" in top:
        doc.name = top["name"]
    if top.get("seed") is not None:
        doc.seed = top["seed"]
    if "users" in top:
        doc.users = top["users"]
    if "epochs" in top:
        doc.epochs = top["epochs"]
    if "strategy" in top:
        doc.strategy = top["strategy"]
    if "strategies" in top:
        doc.strategies = tuple(str(s) for s in top["strategies"])
    if "rho" in top:
        doc.rho = top["rho"]
    if "ladder" in top:
        try:
            doc.ladder = RepresentationLadder([float(r) for r in top["ladder"]])
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), "ladder") from exc

    def section(key: str, allowed: Dict[str, type]) -> dict:
        return _take(_require_mapping(raw.get(key), key), allowed, key)

    g = section("grid", {"rows": int, "cols": int})
    if g:
        try:
            doc.grid = TileGrid(g.get("rows", 4), g.get("cols", 8))
        except ValueError as exc:
            raise ConfigError(str(exc), "grid") from exc

    f = section("fov", {"horizontal": float, "vertical": float})
    if f:
        try:
            doc.extent = FovExtent(**f)
        except ValueError as exc:
            raise ConfigError(str(exc), "fov") from exc

    q = section("qoe", {"a": float, "b": float, "mu": float})
    if q:
        doc.qoe = QoeParams(**q)

    b = section("buffer", {
        "b1": float, "b2": float, "l": float, "resume_threshold": float,
        "fps": int, "gop_frames": int, "prediction_horizon": float,
        "fill_first": bool,
    })
    if b:
        try:
            doc.buffer = BufferParams(**b)
        except ValueError as exc:
            raise ConfigError(str(exc), "buffer") from exc

    s = section("solver", {
        "sigma": float, "multi_ap_threshold": float, "max_iters": int,
        "obj_tol": float, "feas_tol": float, "oracle_cap": int,
    })
    if s:
        doc.solver = SolverParams(**s)

    sy = section("synth", {
        "num_aps": int, "lte_cap": float, "wifi_cap": float,
        "area_radius": float, "path_ref": float, "path_exponent": float,
        "congestion": bool, "num_videos": int, "saliency_alpha": float,
    })
    doc.synth = SynthSpec(
        grid_rows=doc.grid.rows, grid_cols=doc.grid.cols, ladder=doc.ladder,
        mu=doc.qoe.mu, **sy,
    )

    tr = section("trace", _TRACE_KEYS)
    if tr:
        doc.trace_pattern = tr.pop("pattern", "constant")
        doc.trace_kw = tr

    mo = section("motion", {"accuracy": float, "drift_deg": float})
    if "accuracy" in mo:
        doc.motion_accuracy = mo["accuracy"]
    if "drift_deg" in mo:
        doc.motion_drift_deg = mo["drift_deg"]

    fi = section("files", {"network_trace": str, "fov_trace": str, "saliency": str})
    for key, attr in (("network_trace", "network_trace_file"),
                      ("fov_trace", "fov_trace_file"),
                      ("saliency", "saliency_file")):
        if fi.get(key):
            if not os.path.exists(fi[key]):
                raise ConfigError(f"referenced file does not exist: {fi[key]}",
                                  f"files.{key}")
            setattr(doc, attr, fi[key])

    sw = section("sweeps", {"bandwidth_scales": list, "user_counts": list})
    if sw.get("bandwidth_scales"):
        doc.bandwidth_scales = tuple(float(x) for x in sw["bandwidth_scales"])
    if sw.get("user_counts"):
        doc.user_counts = tuple(int(x) for x in sw["user_counts"])

    if not 0.0 < doc.rho <= 1.0:
        raise ConfigError("rho must lie in (0, 1]", "rho")
    if doc.users < 1:
        raise ConfigError("users must be >= 1", "users")
    if doc.epochs < 1:
        raise ConfigError("epochs must be >= 1", "epochs")
    return doc


def load_saliency(path: str, num_tiles: int = 32) -> SaliencyMap:
    """Read a row-major CSV of per-tile weights and renormalize to sum 1."""
    with open(path, newline="") as fh:
        values: List[float] = []
        for row in csv.reader(fh):
            values.extend(float(cell) for cell in row if cell.strip() != "")
    if len(values) != num_tiles:
        raise ValueError(f"expected {num_tiles} saliency entries, got {len(values)}")
    arr = np.asarray(values, dtype=float)
    if (arr < 0).any():
        raise ValueError("saliency entries must be non-negative")
    total = arr.sum()
    if total <= 0:
        raise ValueError("saliency entries sum to zero")
    if abs(total - 1.0) > 0.01:
        warnings.warn(f"saliency weights sum to {total:.4g}; renormalizing")
    return SaliencyMap(arr / total)


def _read_rows(path: str) -> Tuple[List[str], List[List[float]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty trace file") from None
        rows = []
        for k, row in enumerate(reader, start=2):
            if not row or all(c.strip() == "" for c in row):
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}: row {k} has {len(row)} columns, "
                                 f"expected {len(header)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise ValueError(f"{path}: non-numeric value at row {k}") from None
    return header, rows


def load_trace(path: str, fps: int = 30,
               gop_frames: int = 15) -> Union[NetworkTrace, FovTrace]:
    """Load a CSV trace, dispatching on the header.

    Network traces: columns t, user, r_lte, r_wifi_1 .. r_wifi_I, one row per
    (epoch, user).  FoV traces: t, user, yaw, pitch and optionally pred_yaw,
    pred_pitch, gamma (read at each GoP's first frame).  Rows must arrive
    time-sorted.
    """
    header, rows = _read_rows(path)
    if header[:2] != ["t", "user"]:
        raise ValueError(f"{path}: header must start with t,user")
    if len(header) >= 3 and header[2] == "r_lte":
        return _parse_network(path, header, rows)
    if header[2:4] == ["yaw", "pitch"]:
        return _parse_fov(path, header, rows, fps, gop_frames)
    raise ValueError(f"{path}: unrecognized trace header {header}")


def _check_sorted(path: str, rows: List[List[float]]):
    for k in range(1, len(rows)):
        if rows[k][0] < rows[k - 1][0] - 1e-12:
            raise ValueError(f"{path}: non-monotone time at row {k + 2}")


def _parse_network(path: str, header: List[str], rows) -> NetworkTrace:
    wifi_cols = header[3:]
    if any(h != f"r_wifi_{i + 1}" for i, h in enumerate(wifi_cols)) or not wifi_cols:
        raise ValueError(f"{path}: wifi columns must be r_wifi_1..r_wifi_I")
    _check_sorted(path, rows)
    n_aps = len(wifi_cols)
    times = sorted({r[0] for r in rows})
    users = sorted({int(r[1]) for r in rows})
    n_users = len(users)
    if users != list(range(n_users)):
        raise ValueError(f"{path}: users must be 0..N-1, got {users}")
    r_lte = np.full((len(times), n_users), -1.0)
    r_wifi = np.full((len(times), n_users, n_aps), -1.0)
    t_index = {t: k for k, t in enumerate(times)}
    for row in rows:
        k, n = t_index[row[0]], int(row[1])
        r_lte[k, n] = row[2]
        r_wifi[k, n] = row[3:]
    if (r_lte < 0).any() or (r_wifi < 0).any():
        raise ValueError(f"{path}: negative rate or missing (t, user) row")
    epoch = times[1] - times[0] if len(times) > 1 else 0.5
    for a, b in zip(times, times[1:]):
        if abs((b - a) - epoch) > 1e-9:
            raise ValueError(f"{path}: epochs must be uniformly spaced")
    return NetworkTrace(epoch, r_lte, r_wifi)


def _parse_fov(path: str, header: List[str], rows, fps: int,
               gop_frames: int) -> FovTrace:
    has_pred = header[4:] == ["pred_yaw", "pred_pitch", "gamma"]
    if header[4:] and not has_pred:
        raise ValueError(
            f"{path}: optional columns must be exactly pred_yaw,pred_pitch,gamma"
        )
    _check_sorted(path, rows)
    times = sorted({r[0] for r in rows})
    users = sorted({int(r[1]) for r in rows})
    n_users = len(users)
    if users != list(range(n_users)):
        raise ValueError(f"{path}: users must be 0..N-1, got {users}")
    n_frames = len(times)
    n_gops = n_frames // gop_frames
    if n_gops < 1:
        raise ValueError(f"{path}: fewer than one GoP of frames")
    truth = np.zeros((n_frames, n_users, 2))
    seen = np.zeros((n_frames, n_users), dtype=bool)
    pred = np.zeros((n_gops, n_users, 3))
    t_index = {t: k for k, t in enumerate(times)}
    for row in rows:
        k, n = t_index[row[0]], int(row[1])
        truth[k, n] = row[2:4]
        seen[k, n] = True
        if has_pred and k % gop_frames == 0 and k // gop_frames < n_gops:
            pred[k // gop_frames, n] = row[4:7]
    if not seen.all():
        raise ValueError(f"{path}: missing (t, user) rows")
    return FovTrace(fps, gop_frames, truth, pred)


def _build_instance(doc: ConfigDocument, network: NetworkTrace,
                    fov: FovTrace) -> Instance:
    """Instance for trace-file scenarios: epoch-0 rates + trace predictions."""
    if doc.saliency_file:
        sal = load_saliency(doc.saliency_file, doc.grid.num_tiles)
    else:
        sal = SaliencyMap(np.full(doc.grid.num_tiles, 1.0 / doc.grid.num_tiles))
    users = []
    fov_sets = []
    all_tiles = frozenset(range(doc.grid.num_tiles))
    for n in range(network.num_users):
        pred = fov.prediction(0, n)
        users.append(UserState(n, 0, float(network.r_lte[0, n]),
                               network.r_wifi[0, n], fov_prediction=pred))
        fov_sets.append(
            enumerate_probable_fovs(pred, doc.extent, doc.grid, doc.rho)
            if pred is not None else ProbableFovSet.single(all_tiles)
        )
    return Instance(users, network.num_aps, doc.grid, doc.ladder, {0: sal},
                    fov_sets, doc.qoe)


def build_scenario(doc: ConfigDocument, seed_override: Optional[int] = None) -> Scenario:
    """Materialize the scenario: load trace files or synthesize from the seed."""
    seed = seed_override if seed_override is not None else (doc.seed or 0)
    if doc.network_trace_file or doc.fov_trace_file:
        if not (doc.network_trace_file and doc.fov_trace_file):
            raise ConfigError("network_trace and fov_trace must be given together",
                              "files")
        network = load_trace(doc.network_trace_file, doc.buffer.fps,
                             doc.buffer.gop_frames)
        fov = load_trace(doc.fov_trace_file, doc.buffer.fps, doc.buffer.gop_frames)
        if not isinstance(network, NetworkTrace) or not isinstance(fov, FovTrace):
            raise ConfigError("trace files have swapped roles", "files")
        instance = _build_instance(doc, network, fov)
    else:
        instance = synth_instance(doc.synth, doc.users, seed, doc.extent, doc.rho)
        base_lte = np.array([u.r_lte for u in instance.users])
        base_wifi = np.array([u.r_wifi for u in instance.users])
        network = synth_trace(base_lte, base_wifi, doc.epochs, doc.trace_pattern,
                              seed + 1, doc.buffer.gop_seconds, **doc.trace_kw)
        fov = synth_fov_trace(doc.epochs, doc.users, seed + 2, doc.buffer.fps,
                              doc.buffer.gop_frames, doc.motion_accuracy,
                              doc.motion_drift_deg)
    return Scenario(instance, network, fov, doc.strategy, doc.buffer, seed,
                    doc.extent, doc.rho, doc.bandwidth_scales, doc.user_counts,
                    doc.synth)


def parse_config(text: str) -> Scenario:
    """One-step convenience: YAML text to a ready-to-run Scenario."""
    return build_scenario(load_config(text))


@dataclass(frozen=True)
class ResultTable:
    """Rectangular results: (scenario, strategy, point, metric, value) rows."""

    rows: tuple  # ((scenario_id, strategy, point, metric, value), ...)

    def __init__(self, rows: Sequence):
        norm = []
        for r in rows:
            if len(r) != 5:
                raise ValueError("result rows must have 5 fields")
            norm.append((str(r[0]), str(r[1]), str(r[2]), str(r[3]), float(r[4])))
        object.__setattr__(self, "rows", tuple(norm))


def table_from_allocation(alloc, instance: Instance, scenario_id: str,
                          strategy: str) -> ResultTable:
    from .qoe_model import expected_user_qoe, system_qoe

    rows = [(scenario_id, strategy, "-", "system_qoe",
             system_qoe(alloc, instance))]
    for n in range(instance.num_users):
        point = f"user{n}"
        rows.append((scenario_id, strategy, point, "ap", float(alloc.ap[n])))
        rows.append((scenario_id, strategy, point, "d_lte", float(alloc.d_lte[n])))
        rows.append((scenario_id, strategy, point, "d_wifi", float(alloc.d_wifi[n])))
        rows.append((scenario_id, strategy, point, "per_user_qoe",
                     expected_user_qoe(alloc.rates[n], instance.fov_sets[n],
                                       instance.weights_of(n), instance.qoe.mu,
                                       instance.qoe, instance.ladder)))
    return ResultTable(rows)


def table_from_session(report, scenario_id: str) -> ResultTable:
    rows = [
        (scenario_id, report.strategy, "-", "avg_viewed_qoe", report.avg_viewed_qoe),
        (scenario_id, report.strategy, "-", "stall_count", float(report.stall_count)),
        (scenario_id, report.strategy, "-", "stall_time", report.stall_time),
        (scenario_id, report.strategy, "-", "duration", report.duration),
    ]
    for k, q in enumerate(report.epoch_qoe):
        rows.append((scenario_id, report.strategy, f"epoch{k}", "system_qoe", float(q)))
    for k in range(report.per_user_qoe.shape[0]):
        for n in range(report.per_user_qoe.shape[1]):
            rows.append((scenario_id, report.strategy, f"epoch{k}/user{n}",
                         "per_user_qoe", float(report.per_user_qoe[k, n])))
    return ResultTable(rows)


def table_from_comparison(report, scenario_id: str) -> ResultTable:
    rows = []
    for i, s in enumerate(report.strategies):
        rows.append((scenario_id, s, "-", "avg_viewed_qoe", report.avg_qoe[i]))
        rows.append((scenario_id, s, "-", "stall_count", float(report.stall_counts[i])))
        rows.append((scenario_id, s, "-", "stall_time", report.stall_times[i]))
        for j, scale in enumerate(report.bandwidth_scales):
            rows.append((scenario_id, s, f"bw{scale:g}", "system_qoe",
                         report.bandwidth_table[i][j]))
        for j, count in enumerate(report.user_counts):
            rows.append((scenario_id, s, f"users{count}", "system_qoe",
                         report.user_table[i][j]))
    return ResultTable(rows)


_COLUMNS = ("scenario", "strategy", "point", "metric", "value")


def _fmt(value: float) -> str:
    return f"{value:.6g}"


def emit_report(table: ResultTable, fmt: str, path: str) -> str:
    """Write the table as CSV or versioned JSON; returns the path written."""
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(_COLUMNS)
        for row in table.rows:
            writer.writerow([row[0], row[1], row[2], row[3], _fmt(row[4])])
        payload = buf.getvalue()
    elif fmt == "json":
        doc = {
            "schema": REPORT_SCHEMA,
            "columns": list(_COLUMNS),
            "rows": [[r[0], r[1], r[2], r[3], _fmt(r[4])] for r in table.rows],
        }
        payload = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    else:
        raise ValueError(f"unknown report format {fmt!r}; use csv or json")
    with open(path, "w", newline="") as fh:
        fh.write(payload)
    return path


def load_report(path: str) -> ResultTable:
    """Reload an emitted report (either format) into a ResultTable."""
    if path.endswith(".json"):
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("schema") != REPORT_SCHEMA:
            raise ValueError(f"unsupported report schema {doc.get('schema')!r}")
        return ResultTable([tuple(r[:4]) + (float(r[4]),) for r in doc["rows"]])
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != _COLUMNS:
            raise ValueError(f"unexpected report header {header}")
        return ResultTable([tuple(r[:4]) + (float(r[4]),) for r in reader])
