"""Hierarchical playback-buffer updating for FoV-driven tiled video.

The buffer is a sliding window of GoP slots ahead of the playhead.  Frames
within B1 seconds are transmitted FoV-driven (via an allocation strategy);
frames between B1 and B2 are stored at the lowest representation so the buffer
survives channel drops.  Each epoch the available rate is split between
upgrading already-buffered tiles and storing new frames, with the upgrade
share growing as the buffer fills: d_subsequent = l * d_estimated / (B2 - B_c).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .core_model import Instance, RepresentationLadder, quantize_down
from .fov_geometry import ProbableFovSet
from .qoe_model import fov_quality

__all__ = [
    "BufferParams",
    "BufferState",
    "DownloadPlan",
    "StallEvent",
    "subsequent_rate",
    "plan_epoch",
    "apply_plan",
    "advance_playback",
    "hierarchical_params",
    "short_buffer_params",
    "long_buffer_params",
]


@dataclass(frozen=True)
class BufferParams:
    """Buffer thresholds and playback constants.

    ``b1`` is the prediction-trusted threshold, ``b2`` the maximum length.
    ``fill_first`` selects whether leftover budget flows fills-before-upgrades
    or the reverse (the split between the two is otherwise fixed by
    ``subsequent_rate``).  ``equal_rate_tail`` makes slots beyond the
    prediction horizon target an equal per-tile rate share instead of the
    lowest representation (the long-buffer benchmark behaviour).
    """

    b1: float = 2.0
    b2: float = 5.0
    l: float = 1.0
    resume_threshold: float = 0.5
    fps: int = 30
    gop_frames: int = 15
    prediction_horizon: float = 2.0
    fill_first: bool = True
    equal_rate_tail: bool = False

    def __post_init__(self):
        if not 0.0 < self.b1 <= self.b2:
            raise ValueError(f"need 0 < B1 <= B2, got B1={self.b1}, B2={self.b2}")
        if self.l < 0.0:
            raise ValueError("l must be >= 0")
        if self.fps <= 0 or self.gop_frames <= 0:
            raise ValueError("fps and gop_frames must be positive")

    @property
    def gop_seconds(self) -> float:
        return self.gop_frames / self.fps

    @property
    def num_slots(self) -> int:
        return int(round(self.b2 / self.gop_seconds))

    @property
    def b1_slots(self) -> int:
        return int(round(self.b1 / self.gop_seconds))


class BufferState:
    """Sliding window of GoP slots from the playhead; level 0 means absent.

    A slot counts toward the occupancy B_c only when every tile holds at
    least level 1.  ``frames_consumed`` tracks partial playback of slot 0.
    """

    def __init__(self, num_tiles: int, params: BufferParams,
                 levels: Optional[np.ndarray] = None,
                 frames_consumed: int = 0, stalled: bool = True,
                 clock: float = 0.0):
        if levels is None:
            levels = np.zeros((params.num_slots, num_tiles), dtype=int)
        self.levels = np.asarray(levels, dtype=int)
        self.num_tiles = num_tiles
        self.params = params
        self.frames_consumed = int(frames_consumed)
        self.stalled = bool(stalled)
        self.clock = float(clock)

    def copy(self) -> "BufferState":
        return BufferState(self.num_tiles, self.params, self.levels.copy(),
                           self.frames_consumed, self.stalled, self.clock)

    def full_prefix_slots(self) -> int:
        """Number of contiguous fully-present slots starting at the playhead."""
        full = (self.levels >= 1).all(axis=1)
        k = 0
        while k < full.shape[0] and full[k]:
            k += 1
        return k

    @property
    def occupancy(self) -> float:
        """Current buffer length B_c in seconds."""
        k = self.full_prefix_slots()
        if k == 0:
            return 0.0
        return k * self.params.gop_seconds - self.frames_consumed / self.params.fps

    def _shift(self):
        """Drop the fully-played slot 0 and open a fresh slot at the horizon."""
        self.levels = np.vstack([self.levels[1:], np.zeros((1, self.num_tiles), dtype=int)])
        self.frames_consumed = 0


@dataclass(frozen=True)
class DownloadPlan:
    """Planned (slot, tile, new level, region) entries for one epoch.

    Regions: "fov" (whole-frame FoV-driven fill), "upgrade" (raising tiles
    already buffered), "fill" (lowest-representation frames past B1/B_c).
    ``cost`` is in Mbit, never above the epoch budget.
    """

    entries: tuple  # ((slot, tile, level, region), ...)
    cost: float
    budget: float

    def __init__(self, entries, cost: float, budget: float):
        object.__setattr__(self, "entries", tuple(tuple(e) for e in entries))
        object.__setattr__(self, "cost", float(cost))
        object.__setattr__(self, "budget", float(budget))


@dataclass(frozen=True)
class StallEvent:
    """A re-buffering pause: playback clock at onset and its duration."""

    start: float
    duration: float


def subsequent_rate(d_estimated: float, b_c: float, params: BufferParams) -> float:
    """Rate share for updating buffered tiles: l * d_estimated / (B2 - B_c).

    Capped at d_estimated (the raw expression diverges as the buffer fills);
    at B_c >= B2 there is nothing left to fill, so the whole rate is returned.
    """
    if d_estimated < 0.0:
        raise ValueError("d_estimated must be >= 0")
    if b_c >= params.b2:
        return d_estimated
    raw = params.l * d_estimated / (params.b2 - b_c)
    return min(raw, d_estimated)


def attainable_rate(instance: Instance, alloc, user: int) -> float:
    """Channel rate the user can actually pull this epoch, in Mbps.

    The allocation's d_n only covers what one GoP's streaming spends; a buffer
    downloads several GoPs concurrently, so unused LTE/AP capacity (converted
    at this user's link rates) is available on top of the granted rate.
    """
    d = float(alloc.d_lte[user] + alloc.d_wifi[user])
    lte_used = sum(
        float(alloc.d_lte[m]) / instance.users[m].r_lte
        for m in range(instance.num_users) if instance.users[m].r_lte > 0
    )
    r_lte = instance.users[user].r_lte
    d += max(0.0, 1.0 - lte_used) * r_lte
    ap = int(alloc.ap[user])
    if ap >= 0:
        ap_used = sum(
            float(alloc.d_wifi[m]) / instance.users[m].r_wifi[ap]
            for m in range(instance.num_users)
            if int(alloc.ap[m]) == ap and instance.users[m].r_wifi[ap] > 0
        )
        d += max(0.0, 1.0 - ap_used) * instance.users[user].r_wifi[ap]
    return d


def _with_user_fovs(instance: Instance, user: int, fovs: ProbableFovSet) -> Instance:
    sets = list(instance.fov_sets)
    sets[user] = fovs
    return Instance(instance.users, instance.num_aps, instance.grid,
                    instance.ladder, instance.saliency, sets, instance.qoe)


def _slot_targets(instance: Instance, user: int, gop_fovs: Sequence,
                  slots: Sequence[int], params: BufferParams,
                  allocator: Callable[[Instance], "object"]):
    """Per-slot discrete level targets from the allocation strategy.

    Slots whose prediction lies beyond the trust horizon (or carry no
    prediction at all) fall back to a whole-frame level-1 target.  Returns
    (targets dict slot -> (J,) levels, d_estimated from the first solved slot).
    """
    targets = {}
    unpredicted = []
    d_est = None
    for s in slots:
        fovs = gop_fovs[s] if s < len(gop_fovs) else None
        usable = fovs is not None and s * params.gop_seconds < params.prediction_horizon
        if not usable:
            unpredicted.append(s)
            continue
        alloc = allocator(_with_user_fovs(instance, user, fovs))
        if alloc.reps is None:
            raise ValueError("buffer planning needs a discrete allocation strategy")
        targets[s] = alloc.reps[user].copy()
        if d_est is None:
            d_est = attainable_rate(instance, alloc, user)
    if unpredicted:
        level = 1
        if params.equal_rate_tail:
            ref = d_est
            if ref is None:
                alloc = allocator(instance)
                ref = attainable_rate(instance, alloc, user)
                d_est = ref
            share = ref / instance.grid.num_tiles
            level = quantize_down(share, instance.ladder) or 1
        base = np.full(instance.grid.num_tiles, level, dtype=int)
        for s in unpredicted:
            targets[s] = base.copy()
    return targets, d_est


def plan_epoch(state: BufferState, instance: Instance, user: int,
               gop_fovs: Sequence, params: BufferParams,
               allocator: Callable[[Instance], "object"]) -> DownloadPlan:
    """Decide this epoch's downloads for one user's buffer.

    Below B1 the buffer risks running out: whole frames in [B_c, B1] are
    transmitted FoV-driven, tiles in [0, B_c] only upgraded, and frames past
    B1 filled at the lowest representation.  At or above B1 the FoV-driven
    pass over [0, B1] becomes upgrade-only and the remaining rate extends the
    buffer past B_c.  The upgrade share of the budget follows
    ``subsequent_rate``; either share's leftover is available to the other.
    """
    gop = params.gop_seconds
    n_slots = params.num_slots
    b1_slots = min(params.b1_slots, n_slots)
    bc_slots = state.full_prefix_slots()
    ladder = instance.ladder.as_array()

    opt_slots = list(range(b1_slots))
    targets, d_est = _slot_targets(instance, user, gop_fovs, opt_slots, params, allocator)
    if d_est is None:
        # no prediction-driven slot solved; estimate from a whole-frame run
        alloc = allocator(instance)
        d_est = attainable_rate(instance, alloc, user)

    total_budget = d_est * gop
    upgrade_budget = subsequent_rate(d_est, state.occupancy, params) * gop
    fill_budget = total_budget - upgrade_budget
    if total_budget <= 0.0:
        return DownloadPlan((), 0.0, 0.0)

    fill_entries: List[Tuple[int, int, int, str]] = []
    fill_cost = 0.0
    upgrade_entries: List[Tuple[int, int, int, str]] = []
    upgrade_cost = 0.0

    def tile_cost(level: int) -> float:
        return float(ladder[level - 1]) * gop

    # FoV-driven whole-frame fills for [B_c, B1) (only taken below B1);
    # already-present tiles there become upgrade entries instead
    if bc_slots < b1_slots:
        for s in range(bc_slots, b1_slots):
            for j in range(instance.grid.num_tiles):
                cur = int(state.levels[s, j])
                tgt = max(int(targets[s][j]), 1)
                if cur < 1:
                    fill_entries.append((s, j, tgt, "fov"))
                    fill_cost += tile_cost(tgt)
                elif tgt > cur:
                    upgrade_entries.append((s, j, tgt, "upgrade"))
                    upgrade_cost += tile_cost(tgt)
        upgrade_slots = range(0, bc_slots)
    else:
        upgrade_slots = range(0, b1_slots)

    # upgrade pass over already-buffered prediction-trusted slots
    for s in upgrade_slots:
        for j in range(instance.grid.num_tiles):
            cur = int(state.levels[s, j])
            tgt = int(targets[s][j])
            if cur >= 1 and tgt > cur:
                upgrade_entries.append((s, j, tgt, "upgrade"))
                upgrade_cost += tile_cost(tgt)

    # lowest-representation fills past max(B1, B_c) toward B2
    for s in range(max(b1_slots, bc_slots), n_slots):
        for j in range(instance.grid.num_tiles):
            if state.levels[s, j] < 1:
                fill_entries.append((s, j, 1, "fill"))
                fill_cost += tile_cost(1)

    # trim to the budget split; leftover from one share flows to the other
    def trim(entries, cost, budget):
        while entries and cost > budget + 1e-12:
            s, j, lvl, region = entries.pop()
            cost -= tile_cost(lvl)
        return entries, cost

    def trim_fills(entries, cost, budget):
        """Shed fill cost: drop the far tail first, then degrade FoV-region
        fills (farthest first) to level 1 so coverage survives scarcity, and
        only then start dropping coverage itself."""
        while entries and cost > budget + 1e-12 and entries[-1][3] == "fill":
            entries.pop()
            cost -= tile_cost(1)
        for i in range(len(entries) - 1, -1, -1):
            if cost <= budget + 1e-12:
                break
            s, j, lvl, region = entries[i]
            if lvl > 1:
                entries[i] = (s, j, 1, region)
                cost -= tile_cost(lvl) - tile_cost(1)
        return trim(entries, cost, budget)

    if params.fill_first:
        fill_entries, fill_cost = trim_fills(fill_entries, fill_cost,
                                             max(fill_budget, total_budget - upgrade_cost))
        upgrade_entries, upgrade_cost = trim(upgrade_entries, upgrade_cost,
                                             total_budget - fill_cost)
    else:
        upgrade_entries, upgrade_cost = trim(upgrade_entries, upgrade_cost,
                                             max(upgrade_budget, total_budget - fill_cost))
        fill_entries, fill_cost = trim_fills(fill_entries, fill_cost,
                                             total_budget - upgrade_cost)

    entries = fill_entries + upgrade_entries
    entries.sort(key=lambda e: (e[0], e[1]))
    return DownloadPlan(entries, fill_cost + upgrade_cost, total_budget)


def apply_plan(state: BufferState, plan: DownloadPlan) -> BufferState:
    """Raise buffer levels per the plan; occupancy is derived, never stored."""
    new = state.copy()
    for s, j, lvl, _region in plan.entries:
        if not 0 <= s < new.levels.shape[0]:
            raise ValueError(f"plan slot {s} beyond the buffer horizon")
        if lvl <= new.levels[s, j]:
            raise ValueError(
                f"plan would lower slot {s} tile {j} from {new.levels[s, j]} to {lvl}"
            )
        new.levels[s, j] = lvl
    return new


def advance_playback(state: BufferState, dt: float, ground_truth_fov,
                     weights: np.ndarray, instance_qoe, ladder: RepresentationLadder,
                     params: BufferParams):
    """Play frames for dt seconds against the ground-truth FoV.

    Returns (new state, per-frame QoE samples, stall events).  A stall starts
    when the playhead meets an unfilled slot and ends once the buffer holds at
    least the resume threshold again; stalled frames sample 0 quality.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    new = state.copy()
    n_frames = int(round(dt * params.fps))
    samples: List[float] = []
    stalls: List[StallEvent] = []
    stall_start = new.clock if new.stalled else None
    frame_dt = 1.0 / params.fps
    rates_cache = ladder.as_array()

    for _ in range(n_frames):
        if new.stalled and new.occupancy >= params.resume_threshold - 1e-12:
            new.stalled = False
            if stall_start is not None:
                # a pause of zero length (buffer filled before playback was
                # due) is not a re-buffering event
                if new.clock - stall_start > 1e-12:
                    stalls.append(StallEvent(stall_start, new.clock - stall_start))
                stall_start = None
        slot_ready = (new.levels[0] >= 1).all()
        if new.stalled or not slot_ready:
            if not new.stalled:
                new.stalled = True
                stall_start = new.clock
            samples.append(0.0)
            new.clock += frame_dt
            continue
        rates = rates_cache[new.levels[0] - 1]
        samples.append(fov_quality(rates, weights, ground_truth_fov,
                                   instance_qoe.mu, instance_qoe, ladder))
        new.frames_consumed += 1
        new.clock += frame_dt
        if new.frames_consumed >= params.gop_frames:
            new._shift()

    if new.stalled and stall_start is not None:
        stalls.append(StallEvent(stall_start, new.clock - stall_start))
    return new, samples, stalls


def hierarchical_params(**overrides) -> BufferParams:
    """Default hierarchical strategy: B1 = 2 s, B2 = 5 s."""
    return BufferParams(**overrides)


def short_buffer_params(**overrides) -> BufferParams:
    """Benchmark: 2-second buffer only, no lowest-representation tail."""
    overrides.setdefault("b1", 2.0)
    overrides.setdefault("b2", 2.0)
    return BufferParams(**overrides)


def long_buffer_params(**overrides) -> BufferParams:
    """Benchmark: 5-second buffer, whole frames at equal per-tile rates past
    the prediction horizon (no cheap lowest-representation tail)."""
    overrides.setdefault("b1", 5.0)
    overrides.setdefault("b2", 5.0)
    overrides.setdefault("equal_rate_tail", True)
    return BufferParams(**overrides)
