"""Continuous concave relaxations solved by projected gradient ascent.

Three problem shapes are covered:

* the tile-rate relaxation with a fixed Wi-Fi association (the convex
  subproblem every discrete algorithm leans on),
* the penalized multi-AP relaxation whose sqrt-of-l1 regularizer pushes each
  user's Wi-Fi vector toward a single AP, and
* the user-rate allocation that splits capacity across users before the
  per-user knapsack runs.

The min-over-FoV term is handled exactly with auxiliary rate variables
s_{n,y} <= D_{n,j}: since tile utility is increasing, max over s of
U(s_{n,y}) under those linear rows reproduces min_j U(D_{n,j}).  All
constraints are halfspaces plus boxes, projected with the Hildreth kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .core_model import Instance, InfeasibleError
from .fov_geometry import expected_fov_tile_count
from .qoe_model import expected_tile_weights

__all__ = [
    "SolverParams",
    "SolverSolution",
    "Opt3Result",
    "solve_fixed_assoc",
    "solve_opt2",
    "solve_opt3",
]

_PEN_EPS2 = 1e-8  # smoothing inside the penalty sqrt; objective shift <= sigma*1e-4.
# A smaller epsilon leaves a near-kink at zero wifi rate whose curvature scale
# (sqrt(eps)) drops below the solver's step tolerance, and the BB iteration can
# then oscillate across it without ever registering convergence.


@dataclass(frozen=True)
class SolverParams:
    """Penalty coefficient, iteration budget, and convergence tolerances."""

    sigma: float = 0.1
    multi_ap_threshold: float = 0.05  # Mbps on the second-largest per-AP rate
    max_iters: int = 10000
    obj_tol: float = 1e-6      # relative objective change
    feas_tol: float = 1e-8     # allowed constraint violation of the solution
    oracle_cap: int = 100_000  # association-enumeration ceiling for the oracle


@dataclass
class SolverSolution:
    """A solved relaxation: structured variable values plus diagnostics.

    ``objective`` is the solver objective (penalty included when sigma > 0);
    ``qoe`` is the expected-QoE part alone, with the min term evaluated on the
    actual tile rates rather than the auxiliaries.
    """

    d_lte: np.ndarray        # (N,)
    d_wifi: np.ndarray       # (N, I)
    tile_rates: np.ndarray   # (N, J), non-FoV tiles pinned at D_1
    objective: float
    qoe: float
    iterations: int
    converged: bool
    x: np.ndarray = field(repr=False, default=None)


@dataclass
class Opt3Result:
    """User-rate split with a repaired single-AP association."""

    assoc: np.ndarray    # (N,) AP index
    d_n: np.ndarray      # (N,) total rate per user
    d_lte: np.ndarray
    d_wifi: np.ndarray   # (N,) rate on the assigned AP
    objective: float
    iterations: int


class _Rows:
    """Accumulates sparse halfspace rows a.x <= b with names for diagnostics."""

    def __init__(self):
        self.indptr = [0]
        self.indices: list = []
        self.data: list = []
        self.b: list = []
        self.names: list = []
        self.n_structural = 0

    def add(self, idx, coef, rhs, name):
        self.indices.extend(idx)
        self.data.extend(coef)
        self.indptr.append(len(self.indices))
        self.b.append(rhs)
        self.names.append(name)

    def freeze(self):
        self.indptr = np.asarray(self.indptr, dtype=np.int64)
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.data = np.asarray(self.data, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        norm2 = np.zeros(len(self.b))
        for r in range(len(self.b)):
            seg = self.data[self.indptr[r]:self.indptr[r + 1]]
            norm2[r] = float(seg @ seg)
        self.norm2 = norm2


class _Program:
    """A concave program: halfspace rows, boxes, and an objective closure."""

    def __init__(self, n_vars: int):
        self.n_vars = n_vars
        self.lo = np.zeros(n_vars)
        self.hi = np.full(n_vars, np.inf)
        self.rows = _Rows()
        self.value_and_grad: Callable = None

    def finalize(self):
        self.rows.n_structural = len(self.rows.b)
        for k in range(self.n_vars):
            if np.isfinite(self.hi[k]):
                self.rows.add([k], [1.0], self.hi[k], f"ub[{k}]")
            self.rows.add([k], [-1.0], -self.lo[k], f"lb[{k}]")
        self.rows.freeze()

    def interior_start(self) -> np.ndarray:
        """Phase-1 LP: the most-interior feasible point, or InfeasibleError."""
        rows = self.rows
        ns = rows.n_structural
        n = self.n_vars
        if ns == 0:
            return np.clip(np.zeros(n), self.lo, self.hi)
        a_ub = np.zeros((ns, n + 1))
        for r in range(ns):
            for k in range(rows.indptr[r], rows.indptr[r + 1]):
                a_ub[r, rows.indices[k]] = rows.data[k]
            a_ub[r, n] = 1.0
        bounds = [(self.lo[k], self.hi[k] if np.isfinite(self.hi[k]) else None) for k in range(n)]
        bounds.append((None, 1.0))
        c = np.zeros(n + 1)
        c[n] = -1.0
        res = linprog(c, A_ub=a_ub, b_ub=rows.b[:ns], bounds=bounds, method="highs")
        if not res.success or res.x[n] < -1e-9:
            x = res.x[:n] if res.x is not None else np.clip(np.zeros(n), self.lo, self.hi)
            resid = a_ub[:, :n] @ x - rows.b[:ns]
            worst = int(np.argmax(resid))
            raise InfeasibleError(
                f"minimum representations cannot be covered; binding constraint: {rows.names[worst]}",
                binding=rows.names[worst],
            )
        return np.clip(res.x[:n], self.lo, self.hi)


def _pga(program: _Program, params: SolverParams, warm: Optional[np.ndarray] = None):
    """Projected gradient ascent with Barzilai-Borwein steps and backtracking."""
    from .kernels import project_halfspaces

    rows = program.rows
    lam = np.zeros(rows.b.shape[0])
    if warm is not None and warm.shape == (program.n_vars,):
        x0 = np.clip(np.asarray(warm, dtype=float), program.lo, program.hi)
    else:
        x0 = program.interior_start()
    x, lam, _, viol = project_halfspaces(x0, rows.indptr, rows.indices, rows.data,
                                         rows.b, rows.norm2, lam)
    if warm is not None and viol > 1e-6:
        # stale warm start landed outside the new feasible set; restart cleanly
        x = program.interior_start()
        lam[:] = 0.0
        x, lam, _, viol = project_halfspaces(x, rows.indptr, rows.indices, rows.data,
                                             rows.b, rows.norm2, lam)
    f, g = program.value_and_grad(x)
    alpha = 0.1 / max(1.0, float(np.abs(g).max()))
    prev_x, prev_g = None, None
    small_steps = 0
    it = 0
    converged = False
    for it in range(1, params.max_iters + 1):
        if prev_x is not None:
            s = x - prev_x
            yv = g - prev_g
            denom = float(s @ yv)
            if denom < -1e-18:
                alpha = min(max(-float(s @ s) / denom, 1e-8), 1e6)
        accepted = False
        stationary = False
        a = alpha
        for _bt in range(60):
            lam_try = lam.copy()
            z, lam_try, _, viol = project_halfspaces(
                x + a * g, rows.indptr, rows.indices, rows.data, rows.b, rows.norm2,
                lam_try,
            )
            if viol > max(params.feas_tol, 1e-9):
                # projection did not converge from this far out a trial point;
                # an infeasible z would evaluate spuriously high, so shrink
                a *= 0.5
                continue
            step = z - x
            gain = float(g @ step)
            if gain <= 1e-15:
                # an exact projection always gives g @ step >= |step|^2 / a, so a
                # non-positive gain means either a stationary point (no movement)
                # or projection slack at an oversized step -- shrink and retry
                if float(np.linalg.norm(step)) <= 1e-10 * (1.0 + float(np.linalg.norm(x))):
                    stationary = True
                    break
                a *= 0.5
                continue
            fz, gz = program.value_and_grad(z)
            if fz >= f + 1e-4 * gain:
                accepted = True
                lam = lam_try
                break
            a *= 0.5
        if stationary:
            converged = True
            break
        if not accepted:
            break
        step_norm = float(np.linalg.norm(z - x))
        df = abs(fz - f)
        prev_x, prev_g = x, g
        x, f, g = z, fz, gz
        if df <= params.obj_tol * (1.0 + abs(f)):
            small_steps += 1
            tight = step_norm <= 1e-7 * (1.0 + float(np.linalg.norm(x)))
            # three tight steps, or a long flat stretch (iterates bouncing in a
            # kink of the penalty without moving the objective)
            if (tight and small_steps >= 3) or small_steps >= 50:
                converged = True
                break
        else:
            small_steps = 0
    return x, f, it, converged


class _TileLayout:
    """Index bookkeeping for the tile-rate programs (fixed or free association)."""

    def __init__(self, instance: Instance, allowed_aps, active):
        self.active = list(active)
        self.allowed = {n: list(allowed_aps[n]) for n in self.active}
        self.fov_tiles = {}
        self.idx_dl = {}
        self.idx_dw = {}
        self.idx_d = {}
        self.idx_s = {}
        pos = 0
        for n in self.active:
            self.idx_dl[n] = pos
            pos += 1
            self.idx_dw[n] = {}
            for i in self.allowed[n]:
                self.idx_dw[n][i] = pos
                pos += 1
            tiles = sorted(instance.fov_sets[n].tile_union)
            self.fov_tiles[n] = tiles
            self.idx_d[n] = {j: pos + k for k, j in enumerate(tiles)}
            pos += len(tiles)
            self.idx_s[n] = []
            for _tiles, _p in instance.fov_sets[n].entries:
                self.idx_s[n].append(pos)
                pos += 1
        self.n_vars = pos


def _build_tile_program(instance: Instance, allowed_aps, sigma: float,
                        active: Optional[Sequence[int]] = None):
    if active is None:
        active = range(instance.num_users)
    lay = _TileLayout(instance, allowed_aps, active)
    prog = _Program(lay.n_vars)
    ladder = instance.ladder
    d1, dm = ladder.d_min, ladder.d_max
    num_tiles = instance.grid.num_tiles
    qoe = instance.qoe
    a_coef = qoe.a
    b_coef = qoe.b_for(ladder)

    for n in lay.active:
        user = instance.users[n]
        prog.lo[lay.idx_dl[n]] = 0.0
        prog.hi[lay.idx_dl[n]] = user.r_lte
        for i, k in lay.idx_dw[n].items():
            prog.lo[k] = 0.0
            prog.hi[k] = user.r_wifi[i]
        for k in lay.idx_d[n].values():
            prog.lo[k], prog.hi[k] = d1, dm
        for k in lay.idx_s[n]:
            prog.lo[k], prog.hi[k] = d1, dm

    # per-user budget (non-FoV tiles ride at D_1)
    for n in lay.active:
        idx = list(lay.idx_d[n].values()) + [lay.idx_dl[n]] + list(lay.idx_dw[n].values())
        coef = [1.0] * len(lay.idx_d[n]) + [-1.0] * (1 + len(lay.idx_dw[n]))
        rest = (num_tiles - len(lay.fov_tiles[n])) * d1
        prog.rows.add(idx, coef, -rest, f"budget[user {n}]")
    # LTE capacity
    idx, coef = [], []
    for n in lay.active:
        r = instance.users[n].r_lte
        if r > 0:
            idx.append(lay.idx_dl[n])
            coef.append(1.0 / r)
    if idx:
        prog.rows.add(idx, coef, 1.0, "lte capacity")
    # per-AP capacity
    for i in range(instance.num_aps):
        idx, coef = [], []
        for n in lay.active:
            if i in lay.idx_dw[n]:
                r = instance.users[n].r_wifi[i]
                if r > 0:
                    idx.append(lay.idx_dw[n][i])
                    coef.append(1.0 / r)
                else:
                    prog.hi[lay.idx_dw[n][i]] = 0.0
        if idx:
            prog.rows.add(idx, coef, 1.0, f"wifi capacity[AP {i}]")
    # min-term auxiliaries: s_{n,y} <= D_{n,j} for j in FoV_y
    for n in lay.active:
        for y, (tiles, _p) in enumerate(instance.fov_sets[n].entries):
            s_idx = lay.idx_s[n][y]
            for j in sorted(tiles):
                prog.rows.add([s_idx, lay.idx_d[n][j]], [1.0, -1.0], 0.0,
                              f"minlink[user {n}, fov {y}, tile {j}]")
    prog.finalize()

    # objective: sum coef * U(D) + mu * sum P_y U(s) - sigma * sqrt(sum (sum_i dw)^2)
    d_idx, d_coef = [], []
    s_idx, s_coef = [], []
    for n in lay.active:
        ew = expected_tile_weights(instance.fov_sets[n], instance.weights_of(n))
        for j, k in lay.idx_d[n].items():
            d_idx.append(k)
            d_coef.append(ew[j])
        for y, (_tiles, p) in enumerate(instance.fov_sets[n].entries):
            s_idx.append(lay.idx_s[n][y])
            s_coef.append(qoe.mu * p)
    d_idx = np.asarray(d_idx, dtype=int)
    d_coef = np.asarray(d_coef)
    s_idx = np.asarray(s_idx, dtype=int)
    s_coef = np.asarray(s_coef)
    dw_idx, dw_user = [], []
    for un, n in enumerate(lay.active):
        for k in lay.idx_dw[n].values():
            dw_idx.append(k)
            dw_user.append(un)
    dw_idx = np.asarray(dw_idx, dtype=int)
    dw_user = np.asarray(dw_user, dtype=int)
    n_active = len(lay.active)
    log_shift = math.log(b_coef / dm)

    def value_and_grad(x):
        g = np.zeros_like(x)
        dv = np.maximum(x[d_idx], 1e-12)
        sv = np.maximum(x[s_idx], 1e-12)
        f = float(d_coef @ (a_coef * (np.log(dv) + log_shift)))
        f += float(s_coef @ (a_coef * (np.log(sv) + log_shift)))
        np.add.at(g, d_idx, d_coef * a_coef / dv)
        np.add.at(g, s_idx, s_coef * a_coef / sv)
        if sigma > 0.0 and dw_idx.size:
            v = np.zeros(n_active)
            np.add.at(v, dw_user, x[dw_idx])
            root = math.sqrt(float(v @ v) + _PEN_EPS2)
            f -= sigma * root
            g[dw_idx] -= sigma * v[dw_user] / root
        return f, g

    prog.value_and_grad = value_and_grad
    return prog, lay


def _extract_tile_solution(instance, lay, x, f, it, conv, sigma) -> SolverSolution:
    n_users = instance.num_users
    num_tiles = instance.grid.num_tiles
    d1 = instance.ladder.d_min
    d_lte = np.zeros(n_users)
    d_wifi = np.zeros((n_users, instance.num_aps))
    rates = np.full((n_users, num_tiles), d1)
    for n in lay.active:
        d_lte[n] = x[lay.idx_dl[n]]
        for i, k in lay.idx_dw[n].items():
            d_wifi[n, i] = x[k]
        for j, k in lay.idx_d[n].items():
            rates[n, j] = x[k]
    from .qoe_model import expected_user_qoe

    qoe_val = 0.0
    for n in lay.active:
        qoe_val += expected_user_qoe(
            np.maximum(rates[n], d1), instance.fov_sets[n], instance.weights_of(n),
            instance.qoe.mu, instance.qoe, instance.ladder,
        )
    obj = qoe_val
    if sigma > 0.0:
        v = d_wifi.sum(axis=1)
        obj -= sigma * math.sqrt(float(v @ v))
    return SolverSolution(d_lte=d_lte, d_wifi=d_wifi, tile_rates=rates,
                          objective=obj, qoe=qoe_val, iterations=it,
                          converged=conv, x=x)


def solve_fixed_assoc(
    instance: Instance,
    assoc: Sequence[int],
    params: SolverParams = SolverParams(),
    active: Optional[Sequence[int]] = None,
    warm: Optional[np.ndarray] = None,
) -> SolverSolution:
    """Relaxed tile-rate maximization with every user pinned to one Wi-Fi AP.

    ``active`` restricts the system to a user subset (the greedy placement
    builds the system up one user at a time); inactive users get no rate.
    """
    allowed = [[int(assoc[n])] for n in range(instance.num_users)]
    prog, lay = _build_tile_program(instance, allowed, 0.0, active)
    x, f, it, conv = _pga(prog, params, warm)
    return _extract_tile_solution(instance, lay, x, f, it, conv, 0.0)


def solve_opt2(
    instance: Instance,
    params: SolverParams = SolverParams(),
    warm: Optional[np.ndarray] = None,
) -> SolverSolution:
    """Penalized multi-AP relaxation: users may spread Wi-Fi rate across APs."""
    allowed = [list(range(instance.num_aps)) for _ in range(instance.num_users)]
    prog, lay = _build_tile_program(instance, allowed, params.sigma, None)
    x, f, it, conv = _pga(prog, params, warm)
    return _extract_tile_solution(instance, lay, x, f, it, conv, params.sigma)


def greedy_place(evaluate, to_place, num_aps: int, fixed: dict) -> dict:
    """Generic one-user-at-a-time placement (ties: lower user, then lower AP).

    ``evaluate(assoc: dict)`` scores a partial association covering exactly
    the users in the dict; returns the completed association.
    """
    placed = dict(fixed)
    remaining = sorted(to_place)
    while remaining:
        best = None
        best_val = -math.inf
        for n in remaining:
            for i in range(num_aps):
                trial = dict(placed)
                trial[n] = i
                try:
                    val = evaluate(trial)
                except InfeasibleError:
                    continue
                if val > best_val + 1e-12:
                    best_val = val
                    best = (n, i)
        if best is None:
            raise InfeasibleError("no feasible placement for remaining users")
        placed[best[0]] = best[1]
        remaining.remove(best[0])
    return placed


def repair_association(dw_full: np.ndarray, instance: Instance, threshold: float,
                       evaluate) -> dict:
    """Turn a multi-AP rate matrix into a single-AP association.

    Users whose second-largest per-AP rate exceeds the threshold are
    re-placed greedily; everyone else keeps the argmax AP (falling back to
    the strongest achievable AP when no Wi-Fi rate was used).
    """
    n_users = instance.num_users
    fixed = {}
    ambiguous = []
    for n in range(n_users):
        row = dw_full[n]
        order = np.argsort(-row, kind="stable")
        if len(row) >= 2 and row[order[1]] > threshold:
            ambiguous.append(n)
        elif row[order[0]] > 0:
            fixed[n] = int(order[0])
        else:
            fixed[n] = int(np.argmax(instance.users[n].r_wifi))
    if not ambiguous:
        return fixed
    return greedy_place(evaluate, ambiguous, instance.num_aps, fixed)


def _build_user_rate_program(instance: Instance, allowed_aps, sigma: float,
                             active: Optional[Sequence[int]] = None,
                             u_lo=None, no_lte: bool = False):
    if active is None:
        active = range(instance.num_users)
    active = list(active)
    ladder = instance.ladder
    d1, dm = ladder.d_min, ladder.d_max
    num_tiles = instance.grid.num_tiles
    qoe = instance.qoe
    a_coef, b_coef = qoe.a, qoe.b_for(ladder)

    idx_dl, idx_dw, idx_u = {}, {}, {}
    pos = 0
    for n in active:
        idx_dl[n] = pos
        pos += 1
        idx_dw[n] = {}
        for i in allowed_aps[n]:
            idx_dw[n][i] = pos
            pos += 1
        idx_u[n] = pos
        pos += 1
    prog = _Program(pos)

    jbar = {n: expected_fov_tile_count(instance.fov_sets[n]) for n in active}
    for n in active:
        user = instance.users[n]
        prog.hi[idx_dl[n]] = 0.0 if no_lte else user.r_lte
        for i, k in idx_dw[n].items():
            prog.hi[k] = user.r_wifi[i]
        if u_lo is None:
            lo_n = num_tiles * d1
        elif isinstance(u_lo, dict):
            lo_n = u_lo.get(n, num_tiles * d1)
        else:
            lo_n = u_lo
        prog.lo[idx_u[n]] = lo_n
        prog.hi[idx_u[n]] = max(lo_n, jbar[n] * dm)
        idx = [idx_u[n], idx_dl[n]] + list(idx_dw[n].values())
        coef = [1.0, -1.0] + [-1.0] * len(idx_dw[n])
        prog.rows.add(idx, coef, 0.0, f"budget[user {n}]")
    idx, coef = [], []
    for n in active:
        r = instance.users[n].r_lte
        if r > 0:
            idx.append(idx_dl[n])
            coef.append(1.0 / r)
    if idx:
        prog.rows.add(idx, coef, 1.0, "lte capacity")
    for i in range(instance.num_aps):
        idx, coef = [], []
        for n in active:
            if i in idx_dw[n]:
                r = instance.users[n].r_wifi[i]
                if r > 0:
                    idx.append(idx_dw[n][i])
                    coef.append(1.0 / r)
                else:
                    prog.hi[idx_dw[n][i]] = 0.0
        if idx:
            prog.rows.add(idx, coef, 1.0, f"wifi capacity[AP {i}]")
    prog.finalize()

    u_idx = np.asarray([idx_u[n] for n in active], dtype=int)
    u_jbar = np.asarray([jbar[n] for n in active])
    u_w = np.asarray([
        sum(p * sum(float(instance.weights_of(n)[j]) for j in t)
            for t, p in instance.fov_sets[n].entries)
        for n in active
    ])
    dw_idx, dw_user = [], []
    for un, n in enumerate(active):
        for k in idx_dw[n].values():
            dw_idx.append(k)
            dw_user.append(un)
    dw_idx = np.asarray(dw_idx, dtype=int)
    dw_user = np.asarray(dw_user, dtype=int)
    n_active = len(active)
    log_shift = math.log(b_coef / dm)

    def value_and_grad(x):
        g = np.zeros_like(x)
        per_tile = np.minimum(np.maximum(x[u_idx] / u_jbar, 1e-12), dm)
        f = float(u_w @ (a_coef * (np.log(per_tile) + log_shift)))
        slope = np.where(x[u_idx] / u_jbar < dm, u_w * a_coef / np.maximum(x[u_idx], 1e-12), 0.0)
        np.add.at(g, u_idx, slope)
        if sigma > 0.0 and dw_idx.size:
            v = np.zeros(n_active)
            np.add.at(v, dw_user, x[dw_idx])
            root = math.sqrt(float(v @ v) + _PEN_EPS2)
            f -= sigma * root
            g[dw_idx] -= sigma * v[dw_user] / root
        return f, g

    prog.value_and_grad = value_and_grad
    return prog, (idx_dl, idx_dw, idx_u, active)


def _solve_user_rate(instance, allowed_aps, sigma, params, active=None, warm=None):
    prog, (idx_dl, idx_dw, idx_u, active) = _build_user_rate_program(
        instance, allowed_aps, sigma, active
    )
    x, f, it, conv = _pga(prog, params, warm)
    n_users = instance.num_users
    d_lte = np.zeros(n_users)
    d_wifi = np.zeros((n_users, instance.num_aps))
    for n in active:
        d_lte[n] = x[idx_dl[n]]
        for i, k in idx_dw[n].items():
            d_wifi[n, i] = x[k]
    return d_lte, d_wifi, f, it, conv


def solve_opt3(
    instance: Instance,
    params: SolverParams = SolverParams(),
    warm: Optional[np.ndarray] = None,
) -> Opt3Result:
    """Per-user rate split with penalty-based association and greedy repair.

    The per-user utility uses the tile utility applied to the average rate
    over the expected FoV tile count, weighted by the expected saliency mass
    of the user's probable FoVs.
    """
    allowed_all = [list(range(instance.num_aps)) for _ in range(instance.num_users)]
    d_lte, d_wifi, _f, it0, _conv = _solve_user_rate(
        instance, allowed_all, params.sigma, params, warm=warm
    )

    def evaluate(assoc: dict) -> float:
        allowed = [[assoc[n]] if n in assoc else [] for n in range(instance.num_users)]
        _dl, _dw, f, _it, _c = _solve_user_rate(
            instance, allowed, 0.0, params, active=sorted(assoc)
        )
        return f

    assoc_map = repair_association(d_wifi, instance, params.multi_ap_threshold, evaluate)
    assoc = np.array([assoc_map[n] for n in range(instance.num_users)], dtype=int)
    allowed = [[assoc_map[n]] for n in range(instance.num_users)]
    d_lte, d_wifi, f, it1, _conv = _solve_user_rate(instance, allowed, 0.0, params)
    # the utility saturates at J̄·D_M, so the solve can leave air time unused;
    # with the association fixed there is no competition for it — hand each
    # pool's residual share back to its users so d_n is the full budget
    n_users = instance.num_users
    lte_users = [n for n in range(n_users) if instance.users[n].r_lte > 0]
    if lte_users:
        used = sum(d_lte[n] / instance.users[n].r_lte for n in lte_users)
        extra = max(0.0, 1.0 - used) / len(lte_users)
        for n in lte_users:
            d_lte[n] += extra * instance.users[n].r_lte
    for i in range(instance.num_aps):
        pool = [n for n in range(n_users)
                if assoc[n] == i and instance.users[n].r_wifi[i] > 0]
        if pool:
            used = sum(d_wifi[n, i] / instance.users[n].r_wifi[i] for n in pool)
            extra = max(0.0, 1.0 - used) / len(pool)
            for n in pool:
                d_wifi[n, i] += extra * instance.users[n].r_wifi[i]
    dw = np.array([d_wifi[n, assoc[n]] for n in range(instance.num_users)])
    return Opt3Result(assoc=assoc, d_n=d_lte + dw, d_lte=d_lte, d_wifi=dw,
                      objective=f, iterations=it0 + it1)
