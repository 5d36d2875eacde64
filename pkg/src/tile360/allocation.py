"""End-to-end allocation strategies returning discrete, constraint-satisfying allocations.

Strategies: exhaustive association enumeration (the oracle), greedy placement,
the penalty heuristic, the decompose-then-knapsack pipeline, and the two
benchmark baselines.  All are deterministic; ties break toward lower user,
AP, and tile indices.
"""

from __future__ import annotations

import itertools
import math
from typing import Optional

import numpy as np

from .core_model import Allocation, InfeasibleError, Instance
from .fov_geometry import ProbableFovSet
from .qoe_model import (
    expected_tile_weights,
    expected_user_qoe,
    system_qoe,
    tile_utility,
)
from .relaxed_solver import (
    Opt3Result,
    SolverParams,
    SolverSolution,
    greedy_place,
    repair_association,
    solve_fixed_assoc,
    solve_opt2,
    solve_opt3,
    _build_user_rate_program,
    _pga,
)

__all__ = [
    "exhaustive_oracle",
    "greedy_assoc",
    "penalty_heuristic",
    "decomposition",
    "equal_rate_baseline",
    "decentralized_baseline",
    "knapsack_tiles",
    "quantize_allocation",
    "broadcast_instance",
    "one_fov_instance",
    "STRATEGIES",
    "run_strategy",
]

_TOL = 1e-9


def _fractional_allocation(instance: Instance, sol: SolverSolution, assoc) -> Allocation:
    ap = np.asarray(assoc, dtype=int)
    d_wifi = np.array([sol.d_wifi[n, ap[n]] for n in range(instance.num_users)])
    return Allocation(ap=ap, d_lte=sol.d_lte, d_wifi=d_wifi, rates=sol.tile_rates)


def quantize_allocation(fractional: Allocation, instance: Instance) -> Allocation:
    """Round fractional tile rates to the ladder without exceeding each user's sum.

    Per tile the nearest ladder value is taken (ties toward the lower level);
    while a user's discrete sum exceeds its fractional sum, the tile whose
    downgrade loses the least expected-weighted utility is lowered.  Leftover
    bandwidth is not redistributed.
    """
    ladder = instance.ladder
    grid_rates = ladder.as_array()
    qoe = instance.qoe
    n_users, num_tiles = fractional.rates.shape
    reps = np.zeros((n_users, num_tiles), dtype=int)
    utils = np.array([tile_utility(r, qoe, ladder) for r in grid_rates])

    for n in range(n_users):
        frac = fractional.rates[n]
        # nearest ladder value, ties to the lower level
        for j in range(num_tiles):
            diffs = np.abs(grid_rates - frac[j])
            reps[n, j] = int(np.argmin(diffs)) + 1
        ew = expected_tile_weights(instance.fov_sets[n], instance.weights_of(n))
        fov_entries = [(sorted(t), p) for t, p in instance.fov_sets[n].entries]
        budget = float(frac.sum())
        while float(grid_rates[reps[n] - 1].sum()) > budget + _TOL:
            best_j, best_loss = -1, math.inf
            for j in range(num_tiles):
                m = reps[n, j]
                if m <= 1:
                    continue
                # exact drop in expected QoE: weighted term plus min-term shift
                loss = ew[j] * (utils[m - 1] - utils[m - 2])
                if qoe.mu > 0:
                    for tiles, p in fov_entries:
                        if j not in tiles:
                            continue
                        cur = min(utils[reps[n, t] - 1] for t in tiles)
                        new = min(
                            utils[(reps[n, t] - 1) - (1 if t == j else 0)] for t in tiles
                        )
                        loss += qoe.mu * p * (cur - new)
                if loss < best_loss - 1e-15:
                    best_loss = loss
                    best_j = j
            if best_j < 0:
                break  # everyone at level 1; minimum guarantee keeps this feasible
            reps[n, best_j] -= 1

    rates = grid_rates[reps - 1]
    return Allocation(ap=fractional.ap, d_lte=fractional.d_lte,
                      d_wifi=fractional.d_wifi, rates=rates, reps=reps)


def exhaustive_oracle(instance: Instance, params: SolverParams = SolverParams()) -> Allocation:
    """Enumerate every Wi-Fi association, solve + quantize each, keep the best.

    Refuses when I^N exceeds the configured cap.  Lexicographically first
    association wins ties.
    """
    n, i = instance.num_users, instance.num_aps
    size = i ** n
    if size > params.oracle_cap:
        raise ValueError(
            f"association space {i}^{n} = {size} exceeds cap {params.oracle_cap}"
        )
    best_alloc, best_val = None, -math.inf
    for assoc in itertools.product(range(i), repeat=n):
        try:
            sol = solve_fixed_assoc(instance, assoc, params)
        except InfeasibleError:
            continue
        alloc = quantize_allocation(_fractional_allocation(instance, sol, assoc), instance)
        val = system_qoe(alloc, instance)
        if val > best_val + 1e-12:
            best_val = val
            best_alloc = alloc
    if best_alloc is None:
        raise InfeasibleError("no feasible association covers the minimum representations")
    return best_alloc


def _assoc_evaluator(instance: Instance, params: SolverParams):
    def evaluate(assoc: dict) -> float:
        active = sorted(assoc)
        full = [assoc.get(n, 0) for n in range(instance.num_users)]
        return solve_fixed_assoc(instance, full, params, active=active).objective

    return evaluate


def greedy_assoc(instance: Instance, params: SolverParams = SolverParams()) -> Allocation:
    """Greedy association: admit the best (user, AP) pair one at a time."""
    placed = greedy_place(
        _assoc_evaluator(instance, params),
        range(instance.num_users),
        instance.num_aps,
        {},
    )
    assoc = [placed[n] for n in range(instance.num_users)]
    sol = solve_fixed_assoc(instance, assoc, params)
    return quantize_allocation(_fractional_allocation(instance, sol, assoc), instance)


def penalty_heuristic(
    instance: Instance,
    params: SolverParams = SolverParams(),
    multi_ap_threshold: Optional[float] = None,
) -> Allocation:
    """Penalized relaxation, threshold multi-AP stragglers, greedy repair."""
    threshold = params.multi_ap_threshold if multi_ap_threshold is None else multi_ap_threshold
    sol = solve_opt2(instance, params)
    assoc_map = repair_association(
        sol.d_wifi, instance, threshold, _assoc_evaluator(instance, params)
    )
    assoc = [assoc_map[n] for n in range(instance.num_users)]
    final = solve_fixed_assoc(instance, assoc, params)
    return quantize_allocation(_fractional_allocation(instance, final, assoc), instance)


def knapsack_tiles(
    weights: np.ndarray,
    fovs: ProbableFovSet,
    instance: Instance,
    r_n: float,
    d_n: float,
) -> np.ndarray:
    """Greedy utility-over-cost representation selection for one user.

    Items are (tile, next level) increments ranked by expected-weighted
    utility gain per normalized cost (including the exact marginal of the
    min-quality term).  Because single upgrades cannot move the min term when
    several tiles tie at the bottom, the greedy is repeated once per forced
    floor level (all FoV tiles start at level f) and the best exact-value
    result wins.  Non-FoV tiles receive level 1.  Returns 1-based levels.
    """
    ladder = instance.ladder
    grid_rates = ladder.as_array()
    num_tiles = instance.grid.num_tiles
    if d_n < num_tiles * ladder.d_min - 1e-9:
        raise InfeasibleError(
            f"budget {d_n:.4g} below minimum coverage {num_tiles * ladder.d_min:.4g}"
        )
    utils = np.array([tile_utility(r, instance.qoe, ladder) for r in grid_rates])
    w_arr = np.asarray(weights, dtype=float)
    ew = expected_tile_weights(fovs, w_arr)
    fov_tiles = sorted(fovs.tile_union)
    mu = instance.qoe.mu
    entries = [(tuple(sorted(t)), p) for t, p in fovs.entries]
    rest = (num_tiles - len(fov_tiles)) * ladder.d_min
    r_n = max(r_n, 1e-12)

    def run_floor(floor):
        """Greedy upgrades from a uniform FoV floor; None if unaffordable."""
        selected = {j: floor for j in fov_tiles}  # 0 = unselected
        base = len(fov_tiles) * (grid_rates[floor - 1] if floor >= 1 else 0.0)
        remaining = d_n - rest - base
        n_unselected = len(fov_tiles) if floor == 0 else 0
        if remaining < n_unselected * ladder.d_min - 1e-9:
            return None

        def tile_util(t, bump=-1):
            m = selected[t] + (1 if t == bump else 0)
            return utils[m - 1] if m >= 1 else 0.0

        while True:
            best_j, best_score = -1, -math.inf
            for j in fov_tiles:
                m = selected[j]
                if m >= ladder.m:
                    continue
                cost = grid_rates[m] - (grid_rates[m - 1] if m >= 1 else 0.0)
                gain = utils[m] - (utils[m - 1] if m >= 1 else 0.0)
                reserve = (n_unselected - (1 if m == 0 else 0)) * ladder.d_min
                if cost > remaining - reserve + 1e-12:
                    continue
                total = gain * ew[j]
                if mu > 0:
                    # the min term only moves when the upgraded tile is
                    # (one of) the worst in an entry; add that exact marginal
                    for tiles, p in entries:
                        if j in tiles:
                            before = min(tile_util(t) for t in tiles)
                            after = min(tile_util(t, bump=j) for t in tiles)
                            total += mu * p * (after - before)
                score = total / (cost / r_n)
                if score > best_score + 1e-15:
                    best_score = score
                    best_j = j
            if best_j < 0:
                break
            m = selected[best_j]
            remaining -= grid_rates[m] - (grid_rates[m - 1] if m >= 1 else 0.0)
            if m == 0:
                n_unselected -= 1
            selected[best_j] = m + 1
        # reserved budget guarantees every FoV tile was selectable at level 1
        lv = np.ones(num_tiles, dtype=int)
        for j in fov_tiles:
            lv[j] = max(1, selected[j])
        return lv

    floors = range(2, ladder.m + 1) if mu > 0 else ()
    best_levels, best_val = None, -math.inf
    for floor in (0, *floors):
        lv = run_floor(floor)
        if lv is None:
            continue
        val = expected_user_qoe(grid_rates[lv - 1], fovs, w_arr, mu,
                                instance.qoe, ladder)
        if val > best_val + 1e-12:
            best_val, best_levels = val, lv
    return best_levels


def decomposition(instance: Instance, params: SolverParams = SolverParams()) -> Allocation:
    """Decomposition: user-rate split via the penalized relaxation, then per-user knapsack."""
    res: Opt3Result = solve_opt3(instance, params)
    grid_rates = instance.ladder.as_array()
    n_users = instance.num_users
    reps = np.zeros((n_users, instance.grid.num_tiles), dtype=int)
    for n in range(n_users):
        user = instance.users[n]
        r_n = user.r_lte + user.r_wifi[res.assoc[n]]
        reps[n] = knapsack_tiles(
            instance.weights_of(n), instance.fov_sets[n], instance, r_n, res.d_n[n]
        )
    return Allocation(ap=res.assoc, d_lte=res.d_lte, d_wifi=res.d_wifi,
                      rates=grid_rates[reps - 1], reps=reps)


def _uniform_fov_instance(instance: Instance) -> Instance:
    """Per-user uniform weights over the union of probable-FoV tiles."""
    saliency = {}
    users = []
    for n, user in enumerate(instance.users):
        union = sorted(instance.fov_sets[n].tile_union)
        w = np.zeros(instance.grid.num_tiles)
        w[union] = 1.0 / len(union)
        vid = -(n + 1)  # synthetic per-user video id
        saliency[vid] = type(instance.saliency[user.video_id])(w)
        users.append(type(user)(user.user_id, vid, user.r_lte, user.r_wifi,
                                user.fov_prediction))
    return Instance(users, instance.num_aps, instance.grid, instance.ladder,
                    saliency, instance.fov_sets, instance.qoe)


def equal_rate_baseline(instance: Instance, params: SolverParams = SolverParams()) -> Allocation:
    """Penalty-heuristic pipeline with saliency replaced by uniform FoV weights."""
    return penalty_heuristic(_uniform_fov_instance(instance), params)


def _solve_pool(instance: Instance, users, use_lte: bool, ap: Optional[int],
                params: SolverParams, u_lo: dict):
    """Relaxed user-rate split for one network pool (LTE only, or one AP only)."""
    allowed = [[] for _ in range(instance.num_users)]
    if ap is not None:
        for n in users:
            allowed[n] = [ap]
    prog, (idx_dl, idx_dw, idx_u, active) = _build_user_rate_program(
        instance, allowed, 0.0, users, u_lo=u_lo, no_lte=not use_lte
    )
    x, _f, _it, _conv = _pga(prog, params)
    out = {}
    for n in active:
        dl = x[idx_dl[n]] if use_lte else 0.0
        dw = x[idx_dw[n][ap]] if ap is not None else 0.0
        out[n] = (float(dl), float(dw))
    return out


def decentralized_baseline(instance: Instance, params: SolverParams = SolverParams()) -> Allocation:
    """Strongest-AP association; LTE and each AP pool split independently."""
    n_users = instance.num_users
    assoc = np.array([int(np.argmax(u.r_wifi)) for u in instance.users], dtype=int)
    d_lte = np.zeros(n_users)
    d_wifi = np.zeros(n_users)
    # each pool covers its capacity share of the J*D_1 minimum for its users
    min_need = instance.grid.num_tiles * instance.ladder.d_min
    lte_lo, wifi_lo = {}, {}
    for n, user in enumerate(instance.users):
        total = user.r_lte + user.r_wifi[assoc[n]]
        share = user.r_lte / total if total > 0 else 0.0
        lte_lo[n] = min_need * share
        wifi_lo[n] = min_need * (1.0 - share)
    lte_users = [n for n in range(n_users) if instance.users[n].r_lte > 0]
    if lte_users:
        for n, (dl, _dw) in _solve_pool(instance, lte_users, True, None, params, lte_lo).items():
            d_lte[n] = dl
    for i in range(instance.num_aps):
        pool = [n for n in range(n_users) if assoc[n] == i and instance.users[n].r_wifi[i] > 0]
        if pool:
            for n, (_dl, dw) in _solve_pool(instance, pool, False, i, params, wifi_lo).items():
                d_wifi[n] = dw
    grid_rates = instance.ladder.as_array()
    min_need = instance.grid.num_tiles * instance.ladder.d_min
    reps = np.zeros((n_users, instance.grid.num_tiles), dtype=int)
    for n in range(n_users):
        d_n = d_lte[n] + d_wifi[n]
        if d_n < min_need - 1e-9:
            raise InfeasibleError(
                f"decentralized split leaves user {n} below minimum coverage"
            )
        user = instance.users[n]
        r_n = user.r_lte + user.r_wifi[assoc[n]]
        reps[n] = knapsack_tiles(
            instance.weights_of(n), instance.fov_sets[n], instance, r_n, d_n
        )
    return Allocation(ap=assoc, d_lte=d_lte, d_wifi=d_wifi,
                      rates=grid_rates[reps - 1], reps=reps)


def broadcast_instance(instance: Instance) -> Instance:
    """No-prediction mode: one whole-frame FoV per user, raw saliency weighting."""
    all_tiles = frozenset(range(instance.grid.num_tiles))
    fovs = [ProbableFovSet.single(all_tiles) for _ in instance.users]
    return Instance(instance.users, instance.num_aps, instance.grid,
                    instance.ladder, instance.saliency, fovs, instance.qoe)


def one_fov_instance(instance: Instance) -> Instance:
    """Keep only each user's most probable FoV, taken as certain."""
    fovs = [
        ProbableFovSet.single(fs.entries[0][0]) for fs in instance.fov_sets
    ]
    return Instance(instance.users, instance.num_aps, instance.grid,
                    instance.ladder, instance.saliency, fovs, instance.qoe)


STRATEGIES = {
    "exhaustive": exhaustive_oracle,
    "greedy": greedy_assoc,
    "penalty": penalty_heuristic,
    "decomposition": decomposition,
    "equal_rate": equal_rate_baseline,
    "decentralized": decentralized_baseline,
}


def run_strategy(name: str, instance: Instance,
                 params: SolverParams = SolverParams()) -> Allocation:
    """Dispatch by strategy name; 'one_fov' prefixes the penalty heuristic."""
    if name == "one_fov":
        return penalty_heuristic(one_fov_instance(instance), params)
    if name not in STRATEGIES:
        raise KeyError(f"unknown strategy {name!r}; options: {sorted(STRATEGIES) + ['one_fov']}")
    return STRATEGIES[name](instance, params)
