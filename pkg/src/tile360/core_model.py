"""Shared domain types, instance validation, and representation-ladder quantization.

All types are plain immutable value objects (numpy arrays are treated as
read-only by convention).  Rates are carried in Mbps throughout; byte/bit
budgets only appear inside the simulator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "RepresentationLadder",
    "TileGrid",
    "SaliencyMap",
    "QoeParams",
    "UserState",
    "Instance",
    "Allocation",
    "ConstraintReport",
    "InfeasibleError",
    "validate_instance",
    "quantize_down",
    "check_allocation",
]


class InfeasibleError(Exception):
    """Raised when an instance cannot cover the minimum-representation guarantee."""

    def __init__(self, message: str, binding: Optional[str] = None):
        super().__init__(message)
        self.binding = binding


@dataclass(frozen=True)
class RepresentationLadder:
    """Ordered list of the M available per-tile video rates (Mbps)."""

    rates: tuple

    def __init__(self, rates: Sequence[float]):
        object.__setattr__(self, "rates", tuple(float(r) for r in rates))

    @property
    def m(self) -> int:
        return len(self.rates)

    @property
    def d_min(self) -> float:
        return self.rates[0]

    @property
    def d_max(self) -> float:
        return self.rates[-1]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.rates)


DEFAULT_LADDER = RepresentationLadder([round(0.1 * k, 1) for k in range(1, 11)])


@dataclass(frozen=True)
class TileGrid:
    """rows x cols partition of the equirectangular frame into lat/long rectangles."""

    rows: int
    cols: int

    @property
    def num_tiles(self) -> int:
        return self.rows * self.cols

    def tile_index(self, row: int, col: int) -> int:
        return row * self.cols + col

    def tile_bounds(self, j: int):
        """(yaw_lo, yaw_hi, pitch_lo, pitch_hi) of tile j, degrees.

        Row 0 is the southernmost row (pitch -90); half-open intervals
        [lo, hi) resolve boundary ties.
        """
        row, col = divmod(j, self.cols)
        yaw_w = 360.0 / self.cols
        pitch_h = 180.0 / self.rows
        yaw_lo = -180.0 + col * yaw_w
        pitch_lo = -90.0 + row * pitch_h
        return yaw_lo, yaw_lo + yaw_w, pitch_lo, pitch_lo + pitch_h


DEFAULT_GRID = TileGrid(rows=4, cols=8)


@dataclass(frozen=True)
class SaliencyMap:
    """Per-tile visual-importance weights for one video segment, normalized to sum 1."""

    weights: np.ndarray

    def __init__(self, weights):
        object.__setattr__(self, "weights", np.asarray(weights, dtype=float))


@dataclass(frozen=True)
class QoeParams:
    """Utility coefficients: U(D) = a * ln(b * D / D_M), tradeoff mu on the min term.

    Defaults make U(D_1) = 1 and keep every ladder utility positive, which the
    utility-over-cost greedy relies on.
    """

    a: float = 1.0
    b: Optional[float] = None  # None -> e * D_M / D_1 at use time
    mu: float = 1.0

    def b_for(self, ladder: RepresentationLadder) -> float:
        if self.b is not None:
            return self.b
        return float(np.e) * ladder.d_max / ladder.d_min


@dataclass(frozen=True)
class UserState:
    """One user's achievable rates and (optional) FoV prediction."""

    user_id: int
    video_id: int
    r_lte: float
    r_wifi: tuple
    fov_prediction: Optional[object] = None  # fov_geometry.FovPrediction

    def __init__(self, user_id, video_id, r_lte, r_wifi, fov_prediction=None):
        object.__setattr__(self, "user_id", int(user_id))
        object.__setattr__(self, "video_id", int(video_id))
        object.__setattr__(self, "r_lte", float(r_lte))
        object.__setattr__(self, "r_wifi", tuple(float(r) for r in r_wifi))
        object.__setattr__(self, "fov_prediction", fov_prediction)


@dataclass(frozen=True)
class Instance:
    """One decision epoch: users, networks, videos, FoV sets, QoE parameters."""

    users: tuple
    num_aps: int
    grid: TileGrid
    ladder: RepresentationLadder
    saliency: dict  # video_id -> SaliencyMap
    fov_sets: tuple  # per user, fov_geometry.ProbableFovSet
    qoe: QoeParams = field(default_factory=QoeParams)

    def __init__(self, users, num_aps, grid, ladder, saliency, fov_sets, qoe=None):
        object.__setattr__(self, "users", tuple(users))
        object.__setattr__(self, "num_aps", int(num_aps))
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "ladder", ladder)
        object.__setattr__(self, "saliency", dict(saliency))
        object.__setattr__(self, "fov_sets", tuple(fov_sets))
        object.__setattr__(self, "qoe", qoe if qoe is not None else QoeParams())

    @property
    def num_users(self) -> int:
        return len(self.users)

    def weights_of(self, n: int) -> np.ndarray:
        return self.saliency[self.users[n].video_id].weights


@dataclass(frozen=True)
class Allocation:
    """Solver output: per-user AP choice, transmission rates, per-tile video rates.

    ``reps`` holds 1-based ladder levels for discrete allocations and is None
    while the rate vector is still fractional.  ``ap`` is -1 when a user
    carries no Wi-Fi assignment.
    """

    ap: np.ndarray          # (N,) int
    d_lte: np.ndarray       # (N,) Mbps
    d_wifi: np.ndarray      # (N,) Mbps, on the assigned AP
    rates: np.ndarray       # (N, J) Mbps per tile
    reps: Optional[np.ndarray] = None  # (N, J) int levels in 1..M

    def __init__(self, ap, d_lte, d_wifi, rates, reps=None):
        object.__setattr__(self, "ap", np.asarray(ap, dtype=int))
        object.__setattr__(self, "d_lte", np.asarray(d_lte, dtype=float))
        object.__setattr__(self, "d_wifi", np.asarray(d_wifi, dtype=float))
        object.__setattr__(self, "rates", np.asarray(rates, dtype=float))
        object.__setattr__(
            self, "reps", None if reps is None else np.asarray(reps, dtype=int)
        )

    @property
    def is_discrete(self) -> bool:
        return self.reps is not None


@dataclass(frozen=True)
class ConstraintReport:
    """Outcome of check_allocation: one (constraint name, slack) entry per violation."""

    violations: tuple

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self):
        if self.ok:
            return "all constraints satisfied"
        return "; ".join(f"{name} (slack {slack:.3g})" for name, slack in self.violations)


def validate_instance(instance: Instance) -> list:
    """Check every structural invariant; returns the complete list of violations.

    An empty list means the instance is well-formed.  Joint feasibility of the
    minimum-representation guarantee under shared capacities is decided by the
    solvers; here only the per-user necessary condition is checked.
    """
    problems = []
    ladder = instance.ladder
    rates = ladder.rates
    if len(rates) < 2:
        problems.append("ladder must have at least 2 representations")
    if any(r <= 0 for r in rates):
        problems.append("ladder rates must be positive")
    if any(b <= a for a, b in zip(rates, rates[1:])):
        problems.append("ladder not increasing")

    grid = instance.grid
    if grid.rows <= 0 or grid.cols <= 0:
        problems.append("grid dimensions must be positive")
    num_tiles = grid.num_tiles

    qoe = instance.qoe
    if qoe.a <= 0:
        problems.append("qoe coefficient a must be positive")
    if qoe.mu < 0:
        problems.append("qoe coefficient mu must be nonnegative")
    if len(rates) >= 2 and rates[0] > 0:
        if qoe.b_for(ladder) * ladder.d_min / ladder.d_max < 1.0 - 1e-12:
            problems.append("qoe coefficient b too small: ladder utilities go negative")

    for vid, sal in instance.saliency.items():
        w = sal.weights
        if w.shape != (num_tiles,):
            problems.append(f"saliency map for video {vid} has {w.size} weights, expected {num_tiles}")
            continue
        if np.any(w < 0):
            problems.append(f"saliency map for video {vid} has negative weights")
        if abs(float(w.sum()) - 1.0) > 1e-9:
            problems.append(f"weights not normalized for video {vid} (sum {w.sum():.6g})")

    if len(instance.fov_sets) != len(instance.users):
        problems.append("fov_sets length does not match user count")

    min_need = num_tiles * (rates[0] if rates else 0.0)
    for n, user in enumerate(instance.users):
        if user.video_id not in instance.saliency:
            problems.append(f"user {n} references unknown video {user.video_id}")
        if user.r_lte < 0 or any(r < 0 for r in user.r_wifi):
            problems.append(f"user {n} has a negative achievable rate")
        if len(user.r_wifi) != instance.num_aps:
            problems.append(f"user {n} has {len(user.r_wifi)} wifi rates, expected {instance.num_aps}")
        if user.r_lte <= 0 and all(r <= 0 for r in user.r_wifi):
            problems.append(f"user {n} has no network with positive rate")
        if user.r_lte + (max(user.r_wifi) if user.r_wifi else 0.0) < min_need - 1e-12:
            problems.append(f"user {n} cannot cover minimum representations ({min_need:.3g} Mbps)")
        if n < len(instance.fov_sets):
            for tiles, _p in instance.fov_sets[n].entries:
                if not tiles:
                    problems.append(f"user {n} has an empty probable-FoV tile set")
                elif min(tiles) < 0 or max(tiles) >= num_tiles:
                    problems.append(f"user {n} has FoV tile indices out of range")
    return problems


def quantize_down(rate: float, ladder: RepresentationLadder, tol: float = 1e-9) -> Optional[int]:
    """Largest 1-based level m with D_m <= rate; None if rate is below D_1."""
    if rate < ladder.d_min - tol:
        return None
    idx = int(np.searchsorted(ladder.as_array(), rate + tol, side="right"))
    return max(1, min(idx, ladder.m))


def check_allocation(
    alloc: Allocation, instance: Instance, tol: float = 1e-6
) -> ConstraintReport:
    """Evaluate every allocation constraint with absolute slack tolerance tol.

    Discrete allocations additionally require ladder membership; fractional
    ones only the relaxed box D_1 <= D <= D_M.  Slack reported per violated
    constraint is the magnitude of the overshoot.
    """
    violations = []
    ladder = instance.ladder
    num_tiles = instance.grid.num_tiles
    n_users = instance.num_users

    if alloc.rates.shape != (n_users, num_tiles):
        violations.append(("rate matrix shape mismatch", 0.0))
        return ConstraintReport(tuple(violations))

    for n in range(n_users):
        d_total = alloc.d_lte[n] + alloc.d_wifi[n]
        tile_sum = float(alloc.rates[n].sum())
        if tile_sum > d_total + tol:
            violations.append((f"tile-rate budget exceeded for user {n}", tile_sum - d_total))
        if alloc.d_lte[n] < -tol:
            violations.append((f"negative LTE rate for user {n}", -alloc.d_lte[n]))
        if alloc.d_wifi[n] < -tol:
            violations.append((f"negative wifi rate for user {n}", -alloc.d_wifi[n]))
        ap = int(alloc.ap[n])
        if ap < -1 or ap >= instance.num_aps:
            violations.append((f"invalid AP index for user {n}", 0.0))
        if ap == -1 and abs(alloc.d_wifi[n]) > tol:
            violations.append((f"wifi rate without AP for user {n}", abs(alloc.d_wifi[n])))

    lte_load = 0.0
    for n, user in enumerate(instance.users):
        if user.r_lte > 0:
            lte_load += alloc.d_lte[n] / user.r_lte
        elif alloc.d_lte[n] > tol:
            violations.append((f"LTE rate on zero-capacity link for user {n}", alloc.d_lte[n]))
    if lte_load > 1.0 + tol:
        violations.append(("LTE capacity exceeded", lte_load - 1.0))

    for i in range(instance.num_aps):
        load = 0.0
        for n, user in enumerate(instance.users):
            if int(alloc.ap[n]) != i:
                continue
            r = user.r_wifi[i]
            if r > 0:
                load += alloc.d_wifi[n] / r
            elif alloc.d_wifi[n] > tol:
                violations.append((f"wifi rate on zero-capacity link for user {n} AP {i}", alloc.d_wifi[n]))
        if load > 1.0 + tol:
            violations.append((f"wifi capacity exceeded on AP {i}", load - 1.0))

    lo, hi = ladder.d_min, ladder.d_max
    low = float((lo - alloc.rates).max(initial=0.0))
    if low > tol:
        violations.append(("minimum representation D_1 not met", low))
    high = float((alloc.rates - hi).max(initial=0.0))
    if high > tol:
        violations.append(("tile rate above D_M", high))

    if alloc.is_discrete:
        if np.any(alloc.reps < 1) or np.any(alloc.reps > ladder.m):
            violations.append(("representation index out of 1..M", 0.0))
        else:
            expected = ladder.as_array()[alloc.reps - 1]
            err = float(np.abs(alloc.rates - expected).max(initial=0.0))
            if err > tol:
                violations.append(("rate not on the ladder", err))

    return ConstraintReport(tuple(violations))
