"""Trace-driven session engine.

Replays per-epoch achievable-rate snapshots and per-frame ground-truth view
directions, invokes an allocation strategy plus a buffer policy each epoch,
and aggregates viewed quality and stall statistics into comparable reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .allocation import run_strategy
from .buffer_strategy import (
    BufferParams,
    BufferState,
    advance_playback,
    apply_plan,
    plan_epoch,
)
from .core_model import (
    Allocation,
    InfeasibleError,
    Instance,
    QoeParams,
    RepresentationLadder,
    SaliencyMap,
    TileGrid,
    UserState,
)
from .fov_geometry import (
    FovExtent,
    FovPrediction,
    ProbableFovSet,
    ViewDirection,
    enumerate_probable_fovs,
    viewport_tiles,
)
from .qoe_model import system_qoe

__all__ = [
    "NetworkTrace",
    "FovTrace",
    "SynthSpec",
    "Scenario",
    "SessionReport",
    "ComparisonReport",
    "run_session",
    "synth_instance",
    "synth_trace",
    "synth_fov_trace",
    "compare_strategies",
]

DEFAULT_LADDER = RepresentationLadder([round(0.1 * k, 1) for k in range(1, 11)])


@dataclass(frozen=True)
class NetworkTrace:
    """Per-epoch achievable rates: r_lte (T, N) and r_wifi (T, N, I), Mbps."""

    epoch_seconds: float
    r_lte: np.ndarray
    r_wifi: np.ndarray

    def __init__(self, epoch_seconds: float, r_lte, r_wifi):
        r_lte = np.asarray(r_lte, dtype=float)
        r_wifi = np.asarray(r_wifi, dtype=float)
        if r_lte.ndim != 2 or r_wifi.ndim != 3 or r_lte.shape != r_wifi.shape[:2]:
            raise ValueError("trace shapes must be (T, N) and (T, N, I)")
        if (r_lte < 0).any() or (r_wifi < 0).any():
            raise ValueError("achievable rates must be non-negative")
        if epoch_seconds <= 0:
            raise ValueError("epoch_seconds must be positive")
        object.__setattr__(self, "epoch_seconds", float(epoch_seconds))
        object.__setattr__(self, "r_lte", r_lte)
        object.__setattr__(self, "r_wifi", r_wifi)

    @property
    def num_epochs(self) -> int:
        return self.r_lte.shape[0]

    @property
    def num_users(self) -> int:
        return self.r_lte.shape[1]

    @property
    def num_aps(self) -> int:
        return self.r_wifi.shape[2]

    @property
    def duration(self) -> float:
        return self.num_epochs * self.epoch_seconds

    def scaled(self, factor: float) -> "NetworkTrace":
        return NetworkTrace(self.epoch_seconds, self.r_lte * factor, self.r_wifi * factor)


@dataclass(frozen=True)
class FovTrace:
    """Ground-truth view per frame plus per-GoP (predicted center, gamma).

    ``truth`` is (n_frames, N, 2) [yaw, pitch] degrees; ``pred`` is
    (n_gops, N, 3) [yaw, pitch, gamma].  gamma = 0 marks an unusable
    prediction for that GoP.
    """

    fps: int
    gop_frames: int
    truth: np.ndarray
    pred: np.ndarray

    def __init__(self, fps: int, gop_frames: int, truth, pred):
        truth = np.asarray(truth, dtype=float)
        pred = np.asarray(pred, dtype=float)
        if truth.ndim != 3 or truth.shape[2] != 2:
            raise ValueError("truth must be (n_frames, N, 2)")
        if pred.ndim != 3 or pred.shape[2] != 3:
            raise ValueError("pred must be (n_gops, N, 3)")
        if pred.shape[1] != truth.shape[1]:
            raise ValueError("truth and pred disagree on the number of users")
        if (pred[:, :, 2] < 0).any() or (pred[:, :, 2] > 1).any():
            raise ValueError("gamma must lie in [0, 1]")
        object.__setattr__(self, "fps", int(fps))
        object.__setattr__(self, "gop_frames", int(gop_frames))
        object.__setattr__(self, "truth", truth)
        object.__setattr__(self, "pred", pred)

    @property
    def num_users(self) -> int:
        return self.truth.shape[1]

    @property
    def num_gops(self) -> int:
        return self.pred.shape[0]

    def truth_direction(self, frame: int, user: int) -> ViewDirection:
        y, p = self.truth[frame, user]
        return ViewDirection(float(y), float(p))

    def prediction(self, gop: int, user: int) -> Optional[FovPrediction]:
        y, p, g = self.pred[gop, user]
        if g <= 0.0:
            return None
        return FovPrediction(ViewDirection(float(y), float(p)), float(g))


@dataclass(frozen=True)
class SynthSpec:
    """Parameters for synthetic instances: counts, geometry, and a simple
    log-distance path model standing in for an external network simulator."""

    num_aps: int = 5
    grid_rows: int = 4
    grid_cols: int = 8
    ladder: RepresentationLadder = field(default_factory=lambda: DEFAULT_LADDER)
    lte_cap: float = 30.0
    wifi_cap: float = 60.0
    area_radius: float = 200.0
    path_ref: float = 120.0
    path_exponent: float = 2.0
    congestion: bool = False
    mu: float = 1.0
    num_videos: int = 3
    saliency_alpha: float = 1.5


def _path_rate(dist: float, cap: float, spec: SynthSpec) -> float:
    return cap / (1.0 + (dist / spec.path_ref) ** spec.path_exponent)


def synth_instance(spec: SynthSpec, n_users: int, seed: int,
                   extent: FovExtent = FovExtent(), rho: float = 0.95) -> Instance:
    """Seeded random instance with a distance-based rate model.

    In congestion mode, users beyond the fifth are dropped next to AP 1 so
    that its cell saturates first.
    """
    rng = np.random.default_rng(seed)
    grid = TileGrid(spec.grid_rows, spec.grid_cols)
    j = grid.num_tiles
    qoe = QoeParams(mu=spec.mu)

    ap_angle = 2.0 * math.pi * np.arange(spec.num_aps) / max(spec.num_aps, 1)
    ap_pos = 0.5 * spec.area_radius * np.stack([np.cos(ap_angle), np.sin(ap_angle)], axis=1)

    saliency = {}
    for v in range(spec.num_videos):
        w = rng.dirichlet(np.full(j, spec.saliency_alpha))
        saliency[v] = SaliencyMap(w)

    users = []
    fov_sets = []
    for n in range(n_users):
        if spec.congestion and n >= 5:
            pos = ap_pos[0] + rng.uniform(-10.0, 10.0, size=2)
        else:
            radius = spec.area_radius * math.sqrt(rng.uniform())
            theta = rng.uniform(0.0, 2.0 * math.pi)
            pos = np.array([radius * math.cos(theta), radius * math.sin(theta)])
        d_bs = float(np.linalg.norm(pos))
        r_lte = _path_rate(d_bs, spec.lte_cap, spec)
        r_wifi = [
            _path_rate(float(np.linalg.norm(pos - ap_pos[i])), spec.wifi_cap, spec)
            for i in range(spec.num_aps)
        ]
        video = int(rng.integers(0, spec.num_videos))
        center = ViewDirection(rng.uniform(-180.0, 180.0), rng.uniform(-45.0, 45.0))
        pred = FovPrediction(center, float(rng.uniform(0.6, 0.95)))
        users.append(UserState(n, video, r_lte, r_wifi, fov_prediction=pred))
        fov_sets.append(enumerate_probable_fovs(pred, extent, grid, rho))
    return Instance(users, spec.num_aps, grid, spec.ladder, saliency, fov_sets, qoe)


def synth_trace(base_r_lte, base_r_wifi, n_epochs: int, pattern: str, seed: int,
                epoch_seconds: float = 0.5, **kw) -> NetworkTrace:
    """Deterministic trace from base rates and a fluctuation pattern.

    Patterns: "constant"; "step_drop" (kw: t0, t1 epochs, factor);
    "sinusoidal" (kw: period epochs, amplitude in [0,1)); "random_walk"
    (kw: step relative stddev, floored at zero).
    """
    base_lte = np.asarray(base_r_lte, dtype=float)
    base_wifi = np.asarray(base_r_wifi, dtype=float)
    scale = np.ones(n_epochs)
    if pattern == "constant":
        pass
    elif pattern == "step_drop":
        t0, t1 = int(kw.get("t0", n_epochs // 3)), int(kw.get("t1", 2 * n_epochs // 3))
        factor = float(kw.get("factor", 0.2))
        scale[t0:t1] = factor
    elif pattern == "sinusoidal":
        period = float(kw.get("period", max(n_epochs / 2.0, 1.0)))
        amp = float(kw.get("amplitude", 0.5))
        t = np.arange(n_epochs)
        scale = 1.0 + amp * np.sin(2.0 * math.pi * t / period)
    elif pattern == "random_walk":
        rng = np.random.default_rng(seed)
        step = float(kw.get("step", 0.1))
        walk = np.cumsum(rng.normal(0.0, step, size=n_epochs))
        scale = np.maximum(1.0 + walk, 0.0)
    else:
        raise ValueError(f"unknown trace pattern {pattern!r}")
    r_lte = base_lte[None, :] * scale[:, None]
    r_wifi = base_wifi[None, :, :] * scale[:, None, None]
    return NetworkTrace(epoch_seconds, r_lte, r_wifi)


def synth_fov_trace(n_epochs: int, n_users: int, seed: int, fps: int = 30,
                    gop_frames: int = 15, accuracy: float = 0.9,
                    drift_deg: float = 8.0) -> FovTrace:
    """Seeded random-walk head motion with per-GoP predictions.

    The prediction for a GoP is the true center at its first frame perturbed
    by noise shrinking with ``accuracy``.
    """
    rng = np.random.default_rng(seed)
    n_frames = n_epochs * gop_frames
    yaw = np.cumsum(rng.normal(0.0, drift_deg / math.sqrt(gop_frames), (n_frames, n_users)), axis=0)
    pitch = np.clip(
        np.cumsum(rng.normal(0.0, 0.3 * drift_deg / math.sqrt(gop_frames), (n_frames, n_users)), axis=0),
        -60.0, 60.0,
    )
    truth = np.stack([(yaw + 180.0) % 360.0 - 180.0, pitch], axis=2)
    pred = np.zeros((n_epochs, n_users, 3))
    noise = (1.0 - accuracy) * 20.0
    for g in range(n_epochs):
        f = g * gop_frames
        pred[g, :, 0] = (truth[f, :, 0] + rng.normal(0.0, noise, n_users) + 180.0) % 360.0 - 180.0
        pred[g, :, 1] = np.clip(truth[f, :, 1] + rng.normal(0.0, noise, n_users), -90.0, 90.0)
        pred[g, :, 2] = accuracy
    return FovTrace(fps, gop_frames, truth, pred)


@dataclass(frozen=True)
class Scenario:
    """Everything a session needs: instance template, traces, policy knobs."""

    instance: Instance
    network: NetworkTrace
    fov: FovTrace
    strategy: str = "penalty"
    buffer_params: BufferParams = field(default_factory=BufferParams)
    seed: int = 0
    extent: FovExtent = field(default_factory=FovExtent)
    rho: float = 0.95
    bandwidth_scales: tuple = ()
    user_counts: tuple = ()
    synth: Optional[SynthSpec] = None

    def __post_init__(self):
        if self.network.num_users != self.instance.num_users:
            raise ValueError("network trace and instance disagree on user count")
        if self.fov.num_users != self.instance.num_users:
            raise ValueError("FoV trace and instance disagree on user count")
        if self.network.num_aps != self.instance.num_aps:
            raise ValueError("network trace and instance disagree on AP count")


@dataclass(frozen=True)
class SessionReport:
    """Aggregated session outcome; averages are recomputable from samples."""

    strategy: str
    epoch_seconds: float
    epoch_qoe: np.ndarray          # (T,) system viewed QoE per epoch
    per_user_qoe: np.ndarray       # (T, N) mean viewed QoE per epoch
    ap_history: np.ndarray         # (T, N) assigned AP per epoch
    stall_events: tuple            # per user, tuple of StallEvent
    avg_viewed_qoe: float
    stall_count: int
    stall_time: float
    duration: float


@dataclass(frozen=True)
class ComparisonReport:
    """Side-by-side session summaries plus optional sweep tables."""

    strategies: tuple
    avg_qoe: tuple
    stall_counts: tuple
    stall_times: tuple
    bandwidth_scales: tuple = ()
    bandwidth_table: tuple = ()    # per strategy, tuple of utilities per scale
    user_counts: tuple = ()
    user_table: tuple = ()         # per strategy, tuple of utilities per count


def _rebuild_users(instance: Instance, r_lte_row, r_wifi_row):
    return [
        UserState(u.user_id, u.video_id, float(r_lte_row[n]), r_wifi_row[n],
                  fov_prediction=u.fov_prediction)
        for n, u in enumerate(instance.users)
    ]


def _emergency_alloc(instance: Instance) -> Allocation:
    """Fair-share fallback when the channel cannot cover the lowest ladder.

    Every user takes an equal LTE time share plus an equal share of their best
    AP, and all tiles target the lowest representation; the buffer layer trims
    the resulting plan to whatever the share actually affords, so playback
    degrades (and eventually stalls) instead of the session aborting.
    """
    n = instance.num_users
    j = instance.grid.num_tiles
    ap = np.array([int(np.argmax(u.r_wifi)) for u in instance.users])
    ap_load = np.bincount(ap, minlength=instance.num_aps)
    d_lte = np.array([u.r_lte / n for u in instance.users])
    d_wifi = np.array([
        u.r_wifi[ap[i]] / max(int(ap_load[ap[i]]), 1)
        for i, u in enumerate(instance.users)
    ])
    reps = np.ones((n, j), dtype=int)
    rates = np.full((n, j), instance.ladder.d_min)
    return Allocation(ap, d_lte, d_wifi, rates, reps)


def run_session(scenario: Scenario) -> SessionReport:
    """Replay the scenario epoch by epoch and aggregate viewed quality."""
    inst0 = scenario.instance
    bp = scenario.buffer_params
    trace = scenario.network
    fov = scenario.fov
    n_users = inst0.num_users
    n_epochs = trace.num_epochs
    frames_needed = n_epochs * bp.gop_frames
    if fov.truth.shape[0] < frames_needed or fov.num_gops < n_epochs:
        raise ValueError("FoV trace shorter than the network trace")
    if abs(trace.epoch_seconds - bp.gop_seconds) > 1e-9:
        raise ValueError("trace epoch must equal one GoP")

    grid = inst0.grid
    j = grid.num_tiles
    buffers = [BufferState(j, bp) for _ in range(n_users)]
    fov_cache: Dict[Tuple[int, int], Optional[ProbableFovSet]] = {}

    def gop_fovset(g: int, n: int) -> Optional[ProbableFovSet]:
        key = (g, n)
        if key not in fov_cache:
            pred = fov.prediction(g, n) if g < fov.num_gops else None
            fov_cache[key] = (
                enumerate_probable_fovs(pred, scenario.extent, grid, scenario.rho)
                if pred is not None else None
            )
        return fov_cache[key]

    epoch_qoe = np.zeros(n_epochs)
    per_user = np.zeros((n_epochs, n_users))
    ap_hist = np.full((n_epochs, n_users), -1, dtype=int)
    all_stalls: List[list] = [[] for _ in range(n_users)]

    # buffer planning re-solves the same (rates, FoV-sets) instance for
    # overlapping GoP windows across consecutive epochs; memoize on the
    # hashable instance content so each distinct problem is solved once
    memo: Dict[tuple, object] = {}

    def allocator(inst):
        key = (inst.users, inst.fov_sets)
        if key not in memo:
            try:
                memo[key] = run_strategy(scenario.strategy, inst)
            except InfeasibleError:
                memo[key] = _emergency_alloc(inst)
        return memo[key]

    for k in range(n_epochs):
        users = _rebuild_users(inst0, trace.r_lte[k], trace.r_wifi[k])
        current_sets = [
            gop_fovset(k, n) or ProbableFovSet.single(frozenset(range(j)))
            for n in range(n_users)
        ]
        inst_k = Instance(users, inst0.num_aps, grid, inst0.ladder,
                          inst0.saliency, current_sets, inst0.qoe)
        alloc_k = allocator(inst_k)
        ap_hist[k] = alloc_k.ap
        for n in range(n_users):
            slots = [gop_fovset(k + s, n) for s in range(bp.num_slots)]
            plan = plan_epoch(buffers[n], inst_k, n, slots, bp, allocator)
            buffers[n] = apply_plan(buffers[n], plan)
            mid = k * bp.gop_frames + bp.gop_frames // 2
            gt = viewport_tiles(fov.truth_direction(mid, n), scenario.extent, grid)
            buffers[n], samples, stalls = advance_playback(
                buffers[n], bp.gop_seconds, gt, inst_k.weights_of(n),
                inst_k.qoe, inst_k.ladder, bp,
            )
            per_user[k, n] = float(np.mean(samples))
            all_stalls[n].extend(stalls)
        epoch_qoe[k] = per_user[k].sum()

    stall_count = sum(len(s) for s in all_stalls)
    stall_time = sum(ev.duration for s in all_stalls for ev in s)
    return SessionReport(
        strategy=scenario.strategy,
        epoch_seconds=trace.epoch_seconds,
        epoch_qoe=epoch_qoe,
        per_user_qoe=per_user,
        ap_history=ap_hist,
        stall_events=tuple(tuple(s) for s in all_stalls),
        avg_viewed_qoe=float(per_user.mean()),
        stall_count=stall_count,
        stall_time=float(stall_time),
        duration=trace.duration,
    )


def _static_utility(instance: Instance, strategy: str, scale: float = 1.0) -> float:
    users = [
        UserState(u.user_id, u.video_id, u.r_lte * scale,
                  tuple(r * scale for r in u.r_wifi), fov_prediction=u.fov_prediction)
        for u in instance.users
    ]
    inst = Instance(users, instance.num_aps, instance.grid, instance.ladder,
                    instance.saliency, instance.fov_sets, instance.qoe)
    return system_qoe(run_strategy(strategy, inst), inst)


def compare_strategies(scenario: Scenario, strategies: Sequence[str]) -> ComparisonReport:
    """Run identical sessions per strategy; optionally sweep bandwidth scale
    (multiplying the trace) and user count (re-synthesized congestion
    instances) for the static utility comparison."""
    if len(strategies) < 2:
        raise ValueError("need at least two strategies to compare")
    avg, counts, times = [], [], []
    for s in strategies:
        rep = run_session(Scenario(
            scenario.instance, scenario.network, scenario.fov, s,
            scenario.buffer_params, scenario.seed, scenario.extent, scenario.rho,
        ))
        avg.append(rep.avg_viewed_qoe)
        counts.append(rep.stall_count)
        times.append(rep.stall_time)

    bw_table = []
    if scenario.bandwidth_scales:
        for s in strategies:
            bw_table.append(tuple(
                _static_utility(scenario.instance, s, scale)
                for scale in scenario.bandwidth_scales
            ))

    user_table = []
    if scenario.user_counts:
        if scenario.synth is None:
            raise ValueError("user-count sweep needs a SynthSpec in the scenario")
        for s in strategies:
            row = []
            for n in scenario.user_counts:
                inst = synth_instance(scenario.synth, n, scenario.seed,
                                      scenario.extent, scenario.rho)
                row.append(system_qoe(run_strategy(s, inst), inst))
            user_table.append(tuple(row))

    return ComparisonReport(
        strategies=tuple(strategies),
        avg_qoe=tuple(avg),
        stall_counts=tuple(counts),
        stall_times=tuple(times),
        bandwidth_scales=tuple(scenario.bandwidth_scales),
        bandwidth_table=tuple(bw_table),
        user_counts=tuple(scenario.user_counts),
        user_table=tuple(user_table),
    )
