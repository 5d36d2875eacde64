"""Shared builders and independent oracles for the test suite.

The oracles here deliberately avoid the library's solver code paths: they work
by direct grid search / enumeration over the decision variables so that solver
results can be checked against an implementation-independent optimum.
"""

import itertools

import numpy as np

from tile360.core_model import (
    Instance,
    QoeParams,
    RepresentationLadder,
    SaliencyMap,
    TileGrid,
    UserState,
)
from tile360.fov_geometry import ProbableFovSet
from tile360.qoe_model import expected_user_qoe

LADDER3 = RepresentationLadder([0.1, 0.2, 0.3])
LADDER4 = RepresentationLadder([0.1, 0.2, 0.3, 0.4])
LADDER10 = RepresentationLadder([round(0.1 * k, 1) for k in range(1, 11)])


def make_instance(users, n_aps, grid, ladder, weights, fovs, mu=0.0):
    sal = {0: SaliencyMap(np.asarray(weights, dtype=float))}
    return Instance(users, n_aps, grid, ladder, sal, fovs, QoeParams(mu=mu))


def two_tile_instance(r_lte=0.0, r_wifi=(0.4,), mu=0.0, weights=(0.7, 0.3),
                      ladder=LADDER3):
    """One user, 1x2 grid, single certain FoV over both tiles."""
    user = UserState(0, 0, r_lte, r_wifi)
    fovs = [ProbableFovSet.single(frozenset({0, 1}))]
    return make_instance([user], len(r_wifi), TileGrid(1, 2), ladder,
                         weights, fovs, mu=mu)


def random_small_instance(seed, alpha=1.0, mu=0.0, lte_rng=(3.0, 5.0),
                          wifi_rng=(2.5, 4.5), two_fovs=True):
    """Seeded small instance family: N<=3, I<=2, J=8 (2x4 grid), M=4.

    Each user sees a 2x2 block of tiles; with ``two_fovs`` a shifted second
    block is added with complementary probability (truncated at rho=0.95).
    """
    r = np.random.default_rng(seed)
    grid = TileGrid(2, 4)
    j = grid.num_tiles
    n_users = int(r.integers(1, 4))
    n_aps = int(r.integers(1, 3))
    w = r.dirichlet(np.full(j, alpha))
    users = [
        UserState(n, 0, r.uniform(*lte_rng), r.uniform(*wifi_rng, size=n_aps))
        for n in range(n_users)
    ]
    fovs = []
    for _n in range(n_users):
        c = int(r.integers(0, j))
        t1 = frozenset({c % j, (c + 1) % j, (c + 4) % j, (c + 5) % j})
        if two_fovs:
            t2 = frozenset({(c + 1) % j, (c + 2) % j, (c + 5) % j, (c + 6) % j})
            p = float(r.uniform(0.55, 0.8))
            fovs.append(ProbableFovSet([(t1, p), (t2, round(0.97 - p, 6))], 0.95))
        else:
            fovs.append(ProbableFovSet.single(t1))
    return make_instance(users, n_aps, grid, LADDER4, w, fovs, mu=mu)


# ---------------------------------------------------------------------------
# value-of-budget curves and grid oracles for the continuous relaxations
# ---------------------------------------------------------------------------


class ValueCurve:
    """V_n(b): best expected QoE for one user given a total tile-rate budget b.

    Computed by direct grid search over the (at most two) FoV-union tile
    rates at ``step`` resolution, tabulated over a fine budget grid and
    linearly interpolated (the curve is concave, so interpolation error is
    second order in the grid spacing).
    """

    def __init__(self, instance, user, b_max, step=0.001):
        ladder = instance.ladder
        d1, dm = ladder.d_min, ladder.d_max
        j = instance.grid.num_tiles
        union = sorted(instance.fov_sets[user].tile_union)
        if len(union) > 2:
            raise ValueError("oracle supports at most 2 FoV tiles")
        self.rest = (j - len(union)) * d1
        self.b_min = self.rest + len(union) * d1
        b_top = self.rest + len(union) * dm
        b_max = min(max(b_max, self.b_min), b_top)
        qoe = instance.qoe
        a_c = qoe.a
        log_shift = np.log(qoe.b_for(ladder) / dm)
        w = instance.weights_of(user)
        entries = [(sorted(t), p) for t, p in instance.fov_sets[user].entries]
        mu = qoe.mu

        def util(x):
            return a_c * (np.log(x) + log_shift)

        grid_b = np.arange(self.b_min, b_max + step, step)
        avail = grid_b - self.rest
        if len(union) == 1:
            a = union[0]
            u = util(np.clip(avail, d1, dm))
            val = np.zeros_like(u)
            for tiles, p in entries:
                val += p * (w[a] * u + mu * u)
        else:
            a, b = union
            da = np.arange(d1, dm + step / 2, step)
            db = avail[:, None] - da[None, :]
            ok = db >= d1 - 1e-12
            ua = util(da)[None, :]
            ub = util(np.clip(db, d1, dm))
            total = np.zeros_like(ub)
            for tiles, p in entries:
                term = np.zeros_like(ub)
                if a in tiles:
                    term = term + w[a] * ua
                if b in tiles:
                    term = term + w[b] * ub
                if mu > 0:
                    if a in tiles and b in tiles:
                        term = term + mu * np.minimum(ua, ub)
                    elif a in tiles:
                        term = term + mu * ua
                    else:
                        term = term + mu * ub
                total += p * term
            total = np.where(ok, total, -np.inf)
            val = total.max(axis=1)
        self.grid_b = grid_b
        self.values = val

    def __call__(self, b):
        b = np.asarray(b, dtype=float)
        out = np.interp(b, self.grid_b, self.values)
        return np.where(b < self.b_min - 1e-9, -np.inf, out)


def refine_max(f, bounds, passes=7, pts=15):
    """Multi-pass grid refinement of a concave objective over a box.

    ``f`` maps an (k, d) array of points to (k,) values; returns the best
    value found.  Each pass re-grids a shrinking box around the incumbent.
    """
    orig = [tuple(b) for b in bounds]
    cur = [list(b) for b in bounds]
    best_v = -np.inf
    for _ in range(passes):
        axes = [np.linspace(lo, hi, pts) for lo, hi in cur]
        mesh = np.meshgrid(*axes, indexing="ij")
        cand = np.stack([m.ravel() for m in mesh], axis=1)
        vals = f(cand)
        k = int(np.argmax(vals))
        if vals[k] > best_v:
            best_v = float(vals[k])
        nxt = []
        for d, (lo, hi) in enumerate(cur):
            span = (hi - lo) / (pts - 1)
            c = float(cand[k, d])
            nxt.append([max(orig[d][0], c - span), min(orig[d][1], c + span)])
        cur = nxt
    return best_v


def grid_oracle_fixed(instance, assoc):
    """Brute-force optimum of the fixed-association relaxation (N<=2)."""
    n = instance.num_users
    users = instance.users
    r_lte = [u.r_lte for u in users]
    r_ap = [users[k].r_wifi[assoc[k]] for k in range(n)]
    b_max = [r_lte[k] + r_ap[k] for k in range(n)]
    curves = [ValueCurve(instance, k, b_max[k]) for k in range(n)]
    if n == 1:
        return float(curves[0](np.array([b_max[0]]))[0])
    shared_ap = assoc[0] == assoc[1]
    both_lte = r_lte[0] > 0 and r_lte[1] > 0

    def f(x):
        t = x[:, 0] if both_lte else np.ones(x.shape[0])
        s = x[:, -1] if shared_ap else np.ones(x.shape[0])
        b0 = (t * r_lte[0] if both_lte else r_lte[0]) + s * r_ap[0]
        b1 = ((1 - t) * r_lte[1] if both_lte else r_lte[1]) + \
            (1 - s) * r_ap[1] if shared_ap else \
            ((1 - t) * r_lte[1] if both_lte else r_lte[1]) + r_ap[1]
        return curves[0](b0) + curves[1](b1)

    dims = (1 if both_lte else 0) + (1 if shared_ap else 0)
    if dims == 0:
        return float(curves[0](np.array([b_max[0]]))[0]
                     + curves[1](np.array([b_max[1]]))[0])
    return refine_max(f, [(0.0, 1.0)] * dims)


def grid_oracle_opt2(instance, sigma):
    """Brute-force optimum of the penalized multi-AP relaxation.

    Supports one user (any AP count: only the Wi-Fi total matters), and two
    users on either disjoint single APs or one shared AP.
    """
    n = instance.num_users
    users = instance.users
    if n == 1:
        u = users[0]
        w_cap = sum(u.r_wifi)
        curve = ValueCurve(instance, 0, u.r_lte + w_cap)

        def f(x):
            w = x[:, 0]
            return curve(u.r_lte + w) - sigma * w

        return refine_max(f, [(0.0, w_cap)])
    if n != 2:
        raise ValueError("oracle supports at most 2 users")
    pos = [[i for i, r in enumerate(u.r_wifi) if r > 0] for u in users]
    if any(len(p) != 1 for p in pos):
        raise ValueError("2-user oracle needs exactly one positive AP per user")
    shared = pos[0][0] == pos[1][0]
    r_lte = [u.r_lte for u in users]
    r_ap = [users[k].r_wifi[pos[k][0]] for k in range(2)]
    curves = [ValueCurve(instance, k, r_lte[k] + r_ap[k]) for k in range(2)]

    def f(x):
        t = x[:, 0]
        w0 = x[:, 1] * r_ap[0]
        w1 = x[:, 2] * r_ap[1]
        if shared:
            # overloaded demands are scaled back onto the capacity face, so
            # the objective is defined (and continuous) on the whole box and
            # refinement is never blocked by an infeasibility cliff
            load = w0 / r_ap[0] + w1 / r_ap[1]
            sc = np.where(load > 1.0, 1.0 / np.maximum(load, 1e-12), 1.0)
            w0, w1 = w0 * sc, w1 * sc
        v = curves[0](t * r_lte[0] + w0) + curves[1]((1 - t) * r_lte[1] + w1)
        return v - sigma * np.sqrt(w0 ** 2 + w1 ** 2)

    return refine_max(f, [(0.0, 1.0)] * 3, passes=9, pts=17)


def oracle_case(seed):
    """Small instances for the solver-vs-grid-oracle comparison.

    Cycles through four shapes: 1 user x 1 AP, 1 user x 2 APs, 2 users on
    disjoint APs, and 2 users sharing one AP.  FoV unions have at most two
    tiles (2x2 grid, the other two tiles ride at D_1).
    """
    r = np.random.default_rng(seed)
    shape = seed % 4
    grid = TileGrid(2, 2)
    ladder = LADDER3
    mu = float(r.choice([0.0, 1.0]))
    w = r.dirichlet(np.full(4, 1.0))

    def fov(tiles):
        if r.uniform() < 0.4 and len(tiles) == 2:
            sub = frozenset({sorted(tiles)[0]})
            p = float(r.uniform(0.6, 0.9))
            return ProbableFovSet([(frozenset(tiles), p), (sub, round(0.97 - p, 6))], 0.95)
        return ProbableFovSet.single(frozenset(tiles))

    def rate():
        return float(r.uniform(0.45, 1.2))

    if shape == 0:
        users = [UserState(0, 0, rate(), (rate(),))]
        n_aps = 1
        fovs = [fov({0, 1})]
    elif shape == 1:
        users = [UserState(0, 0, rate(), (rate(), rate()))]
        n_aps = 2
        fovs = [fov({0, 1})]
    elif shape == 2:
        users = [UserState(0, 0, rate(), (rate(), 0.0)),
                 UserState(1, 0, rate(), (0.0, rate()))]
        n_aps = 2
        fovs = [fov({0, 1}), fov({2, 3})]
    else:
        users = [UserState(0, 0, rate(), (rate(),)),
                 UserState(1, 0, rate(), (rate(),))]
        n_aps = 1
        fovs = [fov({0, 1}), fov({2, 3})]
    assoc = [0] * len(users) if n_aps == 1 else (
        [0] if len(users) == 1 else [0, 1])
    return make_instance(users, n_aps, grid, ladder, w, fovs, mu=mu), assoc


# ---------------------------------------------------------------------------
# knapsack enumeration oracle
# ---------------------------------------------------------------------------


def knapsack_case(seed):
    """Seeded single-user tile-selection case with J <= 6, M <= 4."""
    r = np.random.default_rng(seed)
    m = int(r.integers(2, 5))
    ladder = RepresentationLadder([round(0.1 * (k + 1), 1) for k in range(m)])
    j = int(r.integers(2, 7))
    grid = TileGrid(1, j)
    w = r.dirichlet(np.full(j, 1.0))
    n_fov = int(r.integers(1, j + 1))
    tiles = frozenset(int(t) for t in r.choice(j, size=n_fov, replace=False))
    if n_fov >= 2 and r.uniform() < 0.5:
        sub = frozenset(sorted(tiles)[: max(1, n_fov // 2)])
        p = float(r.uniform(0.6, 0.9))
        fovs = ProbableFovSet([(tiles, p), (sub, round(0.97 - p, 6))], 0.95)
    else:
        fovs = ProbableFovSet.single(tiles)
    mu = float(r.choice([0.0, 1.0]))
    d_n = float(r.uniform(j * ladder.d_min, 1.05 * j * ladder.d_max))
    r_n = float(r.uniform(1.0, 4.0))
    inst = make_instance([UserState(0, 0, r_n, ())], 0, grid, ladder, w,
                         [fovs], mu=mu)
    return inst, d_n, r_n


def enumerate_levels_optimum(instance, d_n):
    """Exhaustive optimum over all per-tile level combinations for one user."""
    ladder = instance.ladder
    rates = ladder.as_array()
    j = instance.grid.num_tiles
    fov_tiles = sorted(instance.fov_sets[0].tile_union)
    base = np.ones(j, dtype=int)
    best = -np.inf
    best_levels = None
    for combo in itertools.product(range(1, ladder.m + 1), repeat=len(fov_tiles)):
        levels = base.copy()
        levels[fov_tiles] = combo
        if float(rates[levels - 1].sum()) > d_n + 1e-9:
            continue
        val = expected_user_qoe(rates[levels - 1], instance.fov_sets[0],
                                instance.weights_of(0), instance.qoe.mu,
                                instance.qoe, instance.ladder)
        if val > best + 1e-12:
            best = val
            best_levels = levels
    return best, best_levels
