"""Shared independent oracles and fixture builders used across tests."""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np

from bbaudit import geo


def brute_force_cells_within_radius(p: geo.GeoPoint, r_km: float, g: geo.GridConfig) -> set[geo.CellId]:
    """Oracle: scan a generous axial bounding box and keep every cell whose
    centroid is within haversine r_km + edge of p."""
    reach = r_km + g.edge_km
    # Double-width planar window so the scan provably covers the disc.
    span = 2.0 * reach + 4.0 * g.edge_km
    px, py = geo._project(p, g)
    s = g.edge_km
    q_lo = math.floor((px - span) / (1.5 * s))
    q_hi = math.ceil((px + span) / (1.5 * s))
    out = set()
    for q in range(q_lo, q_hi + 1):
        r_lo = math.floor((py - span) / (math.sqrt(3) * s) - q / 2.0)
        r_hi = math.ceil((py + span) / (math.sqrt(3) * s) - q / 2.0)
        for r in range(r_lo, r_hi + 1):
            cell = geo._encode_axial(q, r)
            if geo.haversine_km(p, geo.cell_centroid(cell, g)) <= reach:
                out.add(cell)
    return out


def quadkey_oracle(x: int, y: int, z: int) -> str:
    """Independent digit-by-digit interleave: digit k carries bit (z-1-k)
    of x in its low bit and of y in its high bit."""
    digits = []
    for k in range(z):
        bit = z - 1 - k
        d = ((x >> bit) & 1) | (((y >> bit) & 1) << 1)
        digits.append(str(d))
    return "".join(digits)


# ---------------------------------------------------------------------------
# Brute-force Shapley oracle for tree forests


def _tree_expectation(tree, x: np.ndarray, subset: frozenset) -> float:
    """E[f(x_S, X_notS)] with absent features marginalized by cover."""

    def walk(node: int) -> float:
        if tree.is_leaf(node):
            return float(tree.weight[node])
        feat = int(tree.feature[node])
        if feat in subset:
            val = x[feat]
            if math.isnan(val):
                go_left = bool(tree.default_left[node])
            else:
                go_left = val < tree.threshold[node]
            return walk(int(tree.left[node] if go_left else tree.right[node]))
        lc = tree.cover[int(tree.left[node])]
        rc = tree.cover[int(tree.right[node])]
        return (lc * walk(int(tree.left[node])) + rc * walk(int(tree.right[node]))) / (lc + rc)

    return walk(0)


def brute_force_shap(model, x: np.ndarray) -> tuple[np.ndarray, float]:
    """Exponential-subset Shapley values over all model features."""
    m = model.feature_count
    x = np.asarray(x, dtype=np.float64)
    phi = np.zeros(m)
    features = list(range(m))

    def value(subset: frozenset) -> float:
        return sum(_tree_expectation(t, x, subset) for t in model.trees)

    cache = {}

    def v(subset: frozenset) -> float:
        if subset not in cache:
            cache[subset] = value(subset)
        return cache[subset]

    for j in features:
        others = [f for f in features if f != j]
        for k in range(len(others) + 1):
            w = math.factorial(k) * math.factorial(m - k - 1) / math.factorial(m)
            for combo in combinations(others, k):
                s = frozenset(combo)
                phi[j] += w * (v(s | {j}) - v(s))
    base = model.base_score + v(frozenset())
    return phi, base


def random_tree(rng: np.random.Generator, n_features: int, max_depth: int):
    """A random well-formed tree with covers from a synthetic row flow."""
    from bbaudit.gbdt.trees import Tree

    feature, threshold, default_left, left, right, weight, cover = [], [], [], [], [], [], []

    def grow(depth: int, cov: float) -> int:
        idx = len(feature)
        is_leaf = depth >= max_depth or cov < 2 or rng.random() < 0.25
        feature.append(-1)
        threshold.append(0.0)
        default_left.append(True)
        left.append(-1)
        right.append(-1)
        weight.append(0.0)
        cover.append(cov)
        if is_leaf:
            weight[idx] = float(rng.normal())
            return idx
        feature[idx] = int(rng.integers(n_features))
        threshold[idx] = float(rng.uniform(-1, 1))
        default_left[idx] = bool(rng.integers(2))
        frac = float(rng.uniform(0.2, 0.8))
        lcov = max(1.0, round(cov * frac))
        rcov = max(1.0, cov - lcov)
        left[idx] = grow(depth + 1, lcov)
        right[idx] = grow(depth + 1, rcov)
        return idx

    grow(0, float(rng.integers(50, 200)))
    return Tree(feature, threshold, default_left, left, right, weight, cover)
