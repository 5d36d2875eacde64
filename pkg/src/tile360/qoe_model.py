"""Tile utility, per-FoV quality, expected per-user QoE, and the system objective."""

from __future__ import annotations

import math

import numpy as np

from .core_model import Allocation, Instance, QoeParams, RepresentationLadder, SaliencyMap
from .fov_geometry import ProbableFovSet

__all__ = [
    "tile_utility",
    "fov_quality",
    "expected_user_qoe",
    "system_qoe",
    "expected_tile_weights",
]


def tile_utility(rate: float, params: QoeParams, ladder: RepresentationLadder) -> float:
    """U(D) = a * ln(b * D / D_M); natural log, strictly positive on the ladder."""
    if rate <= 0.0:
        raise ValueError(f"tile rate must be positive, got {rate}")
    x = params.b_for(ladder) * rate / ladder.d_max
    if x < 1.0 - 1e-12:
        raise ValueError(f"rate {rate} gives negative utility (b*D/D_M = {x:.4g} < 1)")
    return params.a * math.log(max(x, 1.0))


def fov_quality(
    rates: np.ndarray,
    weights: np.ndarray,
    fov,
    mu: float,
    params: QoeParams,
    ladder: RepresentationLadder,
) -> float:
    """Saliency-weighted utility sum over one FoV plus mu times the worst tile utility."""
    tiles = sorted(fov)
    if not tiles:
        raise ValueError("empty FoV")
    utils = [tile_utility(float(rates[j]), params, ladder) for j in tiles]
    value = sum(u * float(weights[j]) for u, j in zip(utils, tiles))
    return value + mu * min(utils)


def expected_user_qoe(
    rates: np.ndarray,
    fovs: ProbableFovSet,
    weights: np.ndarray,
    mu: float,
    params: QoeParams,
    ladder: RepresentationLadder,
) -> float:
    """Probability-weighted quality over the probable FoVs (raw, un-renormalized P_y)."""
    return sum(
        fov_quality(rates, weights, tiles, mu, params, ladder) * p
        for tiles, p in fovs.entries
    )


def system_qoe(alloc: Allocation, instance: Instance) -> float:
    """Sum of expected QoE over all users for the allocation's tile rates."""
    total = 0.0
    for n in range(instance.num_users):
        total += expected_user_qoe(
            alloc.rates[n],
            instance.fov_sets[n],
            instance.weights_of(n),
            instance.qoe.mu,
            instance.qoe,
            instance.ladder,
        )
    return total


def expected_tile_weights(fovs: ProbableFovSet, weights: np.ndarray) -> np.ndarray:
    """Per-tile expected saliency weight sum_y P_y * W_j * 1[j in FoV_y].

    This is the coefficient of U(D_j) in the expected-QoE objective (min term
    aside) and the weight used by the knapsack greedy and quantization rules.
    """
    out = np.zeros_like(np.asarray(weights, dtype=float))
    for tiles, p in fovs.entries:
        for j in tiles:
            out[j] += p * float(weights[j])
    return out
