"""Viewport-to-tile mapping on the equirectangular grid and probable-FoV enumeration.

The FoV region is an angular rectangle in (yaw, pitch); when it reaches past a
pole, the polar rows are covered at all longitudes.  Tile intervals are
half-open [lo, hi), so boundary-aligned zero-area touching never includes a
tile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core_model import TileGrid

__all__ = [
    "ViewDirection",
    "FovExtent",
    "FovPrediction",
    "ProbableFovSet",
    "viewport_tiles",
    "enumerate_probable_fovs",
    "expected_fov_tile_count",
]

_EPS = 1e-9


def _wrap_yaw(yaw: float) -> float:
    """Normalize yaw into [-180, 180)."""
    y = (yaw + 180.0) % 360.0 - 180.0
    return y


@dataclass(frozen=True)
class ViewDirection:
    """A direction on the sphere: yaw in [-180, 180), pitch in [-90, 90]."""

    yaw: float
    pitch: float

    def __init__(self, yaw: float, pitch: float):
        if not -90.0 - _EPS <= pitch <= 90.0 + _EPS:
            raise ValueError(f"pitch {pitch} outside [-90, 90]")
        object.__setattr__(self, "yaw", _wrap_yaw(float(yaw)))
        object.__setattr__(self, "pitch", float(min(90.0, max(-90.0, pitch))))


@dataclass(frozen=True)
class FovExtent:
    """Angular size of the field of view, degrees."""

    horizontal: float = 120.0
    vertical: float = 90.0

    def __post_init__(self):
        if not 0.0 < self.horizontal <= 360.0:
            raise ValueError("horizontal extent must be in (0, 360]")
        if not 0.0 < self.vertical <= 180.0:
            raise ValueError("vertical extent must be in (0, 180]")


@dataclass(frozen=True)
class FovPrediction:
    """Predicted view center with prediction accuracy gamma in [0, 1]."""

    center: ViewDirection
    accuracy: float

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError("accuracy must be in [0, 1]")


@dataclass(frozen=True)
class ProbableFovSet:
    """Probable FoV tile sets with probabilities, descending, truncated at rho.

    Probabilities are kept as enumerated (not renormalized after truncation).
    """

    entries: tuple  # ((frozenset tiles, probability), ...)
    rho: float

    def __init__(self, entries, rho: float):
        object.__setattr__(
            self,
            "entries",
            tuple((frozenset(t), float(p)) for t, p in entries),
        )
        object.__setattr__(self, "rho", float(rho))

    @classmethod
    def single(cls, tiles, probability: float = 1.0, rho: float = 1.0) -> "ProbableFovSet":
        return cls([(frozenset(tiles), probability)], rho)

    @property
    def probabilities(self) -> tuple:
        return tuple(p for _t, p in self.entries)

    @property
    def tile_union(self) -> frozenset:
        u: frozenset = frozenset()
        for tiles, _p in self.entries:
            u = u | tiles
        return u


def _interval_overlap(lo: float, hi: float, t_lo: float, t_hi: float) -> float:
    return min(hi, t_hi) - max(lo, t_lo)


def _yaw_overlaps(y_lo: float, width: float, t_lo: float, t_hi: float) -> bool:
    """Nonzero overlap of the wrapped yaw interval [y_lo, y_lo+width] with tile [t_lo, t_hi)."""
    if width >= 360.0 - _EPS:
        return True
    # unwrap: shift the tile by -360/0/+360 and test plain overlap
    for shift in (-360.0, 0.0, 360.0):
        if _interval_overlap(y_lo, y_lo + width, t_lo + shift, t_hi + shift) > _EPS:
            return True
    return False


def viewport_tiles(center: ViewDirection, extent: FovExtent, grid: TileGrid) -> frozenset:
    """Tile indices whose lat/long rectangle intersects the FoV region with nonzero area."""
    if extent.horizontal >= 360.0 - _EPS and extent.vertical >= 180.0 - _EPS:
        return frozenset(range(grid.num_tiles))

    p_lo = center.pitch - extent.vertical / 2.0
    p_hi = center.pitch + extent.vertical / 2.0
    y_lo = _wrap_yaw(center.yaw - extent.horizontal / 2.0)

    # over-pole shadows: pitch intervals covered at every longitude
    shadows = []
    if p_hi > 90.0 + _EPS:
        shadows.append((180.0 - p_hi, 90.0))
    if p_lo < -90.0 - _EPS:
        shadows.append((-90.0, -180.0 - p_lo))
    n_lo, n_hi = max(p_lo, -90.0), min(p_hi, 90.0)

    tiles = set()
    for j in range(grid.num_tiles):
        t_ylo, t_yhi, t_plo, t_phi = grid.tile_bounds(j)
        if any(_interval_overlap(s_lo, s_hi, t_plo, t_phi) > _EPS for s_lo, s_hi in shadows):
            tiles.add(j)
            continue
        if _interval_overlap(n_lo, n_hi, t_plo, t_phi) <= _EPS:
            continue
        if _yaw_overlaps(y_lo, extent.horizontal, t_ylo, t_yhi):
            tiles.add(j)
    return frozenset(tiles)


def _angular_distance(a: ViewDirection, b: ViewDirection) -> float:
    """Great-circle angle between two view directions, degrees."""
    pa, pb = math.radians(a.pitch), math.radians(b.pitch)
    dy = math.radians(a.yaw - b.yaw)
    c = math.sin(pa) * math.sin(pb) + math.cos(pa) * math.cos(pb) * math.cos(dy)
    return math.degrees(math.acos(max(-1.0, min(1.0, c))))


def _tile_centers(grid: TileGrid):
    centers = []
    for j in range(grid.num_tiles):
        y_lo, y_hi, p_lo, p_hi = grid.tile_bounds(j)
        centers.append(ViewDirection((y_lo + y_hi) / 2.0, (p_lo + p_hi) / 2.0))
    return centers


def _top_weight(dists: np.ndarray, spread: float) -> float:
    """Normalized weight of the predicted center (distance 0) for a given spread."""
    w = np.exp(-(dists ** 2) / (2.0 * spread ** 2))
    return 1.0 / (1.0 + float(w.sum()))


def enumerate_probable_fovs(
    pred: FovPrediction,
    extent: FovExtent,
    grid: TileGrid,
    rho: float,
) -> ProbableFovSet:
    """Enumerate probable FoV tile sets from a predicted center and accuracy.

    Candidate centers are the grid's tile centers plus the predicted center,
    weighted by an isotropic Gaussian in great-circle angle whose spread is
    calibrated (by bisection) so the predicted center's normalized weight
    equals the prediction accuracy.  Duplicate tile sets are merged, sorted by
    probability, and truncated at the shortest prefix reaching rho.
    """
    if not 0.0 < rho <= 1.0:
        raise ValueError("rho must be in (0, 1]")
    gamma = pred.accuracy
    if gamma <= 0.0:
        raise ValueError("prediction unusable: accuracy is 0")

    center_tiles = viewport_tiles(pred.center, extent, grid)
    if gamma >= 1.0 - 1e-12:
        return ProbableFovSet([(center_tiles, 1.0)], rho)

    others = [c for c in _tile_centers(grid) if _angular_distance(c, pred.center) > _EPS]
    dists = np.array([_angular_distance(c, pred.center) for c in others])
    n_cand = len(others) + 1

    if gamma <= 1.0 / n_cand + 1e-15:
        weights = np.full(n_cand, 1.0 / n_cand)
    else:
        # top weight is monotone decreasing in the spread: bisect on it
        s_lo, s_hi = 1e-3, 1e4
        for _ in range(200):
            s_mid = math.sqrt(s_lo * s_hi)
            if _top_weight(dists, s_mid) > gamma:
                s_lo = s_mid
            else:
                s_hi = s_mid
        spread = math.sqrt(s_lo * s_hi)
        raw = np.concatenate([[1.0], np.exp(-(dists ** 2) / (2.0 * spread ** 2))])
        weights = raw / raw.sum()

    merged: dict = {}
    for cand, w in zip([pred.center] + others, weights):
        tiles = viewport_tiles(cand, extent, grid)
        merged[tiles] = merged.get(tiles, 0.0) + float(w)

    ordered = sorted(merged.items(), key=lambda kv: (-kv[1], tuple(sorted(kv[0]))))
    entries = []
    cum = 0.0
    for tiles, p in ordered:
        entries.append((tiles, p))
        cum += p
        if cum >= rho - 1e-12:
            break
    return ProbableFovSet(entries, rho)


def expected_fov_tile_count(fovs: ProbableFovSet) -> float:
    """Probability-weighted mean tile-set size of a probable-FoV set."""
    if not fovs.entries:
        raise ValueError("empty probable-FoV set")
    total_p = sum(p for _t, p in fovs.entries)
    return sum(len(t) * p for t, p in fovs.entries) / total_p
