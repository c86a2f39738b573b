"""Isolation forest on flattened windows.

Classic formulation: an ensemble of random binary trees, each grown on a
small subsample with uniformly random axis-aligned splits. Outliers need few
splits to isolate, so their average path length E[h(x)] is short and the
anomaly score

    s(x, n) = 2 ** (-E[h(x)] / c(n))

approaches 1, while inliers sit below 0.5 (c(n) is the average path length
of an unsuccessful BST search, the normalizer that makes 0.5 the "as deep as
expected" midpoint). Scores are in (0, 1) and decrease monotonically with
average path length.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError

EULER_GAMMA = 0.5772156649015329


def average_path_length(n: float) -> float:
    """c(n): expected path length of an unsuccessful BST search over n items."""
    if n <= 1.0:
        return 0.0
    if n == 2.0:
        return 1.0
    return 2.0 * (math.log(n - 1.0) + EULER_GAMMA) - 2.0 * (n - 1.0) / n


@dataclass
class _Tree:
    """Flattened isolation tree: parallel arrays, leaves marked feature=-1."""

    feature: np.ndarray  # int, -1 at leaves
    threshold: np.ndarray  # float
    left: np.ndarray  # int child index
    right: np.ndarray  # int child index
    depth: np.ndarray  # int, node depth
    adjust: np.ndarray  # float, c(leaf size) at leaves, 0 elsewhere

    def path_lengths(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(len(x), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            cur = node[idx]
            go_left = x[idx, self.feature[cur]] < self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] >= 0
        return self.depth[node] + self.adjust[node]


class IsolationForest:
    """Ensemble of isolation trees with 3-sigma thresholding support.

    Attributes:
        threshold: set by calibrate(); verdicts use strict score > threshold,
            so perfectly tied scores (e.g. constant training data collapsing
            every tree to a single leaf, score 0.5 everywhere) flag nothing.
    """

    def __init__(self, n_trees: int = 100, subsample: int = 256, seed: int = 0):
        if n_trees < 1 or subsample < 2:
            raise ContractError("need n_trees >= 1 and subsample >= 2")
        self.n_trees = n_trees
        self.subsample = subsample
        self.seed = seed
        self.trees: list[_Tree] = []
        self.c_norm: float = 1.0
        self.threshold: float | None = None

    def fit(self, x: np.ndarray) -> "IsolationForest":
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or len(x) < 2:
            raise ContractError(f"fit expects a (n>=2, d) matrix, got {x.shape}")
        rng = np.random.default_rng(self.seed)
        psi = min(self.subsample, len(x))
        max_depth = math.ceil(math.log2(psi))
        self.c_norm = average_path_length(psi)
        self.trees = []
        for _ in range(self.n_trees):
            sample_idx = rng.choice(len(x), size=psi, replace=False)
            self.trees.append(_build_tree(x[sample_idx], max_depth, rng))
        return self

    def score(self, x: np.ndarray) -> np.ndarray:
        """Anomaly scores in (0, 1); higher = more anomalous."""
        if not self.trees:
            raise ContractError("forest not fitted")
        x = np.asarray(x, dtype=np.float64)
        total = np.zeros(len(x))
        for tree in self.trees:
            total += tree.path_lengths(x)
        mean_path = total / self.n_trees
        return np.power(2.0, -mean_path / self.c_norm)

    def calibrate(self, x_train: np.ndarray) -> float:
        """threshold = mean + 3*std of the training scores."""
        scores = self.score(x_train)
        self.threshold = float(scores.mean() + 3.0 * scores.std())
        return self.threshold

    # -- persistence ---------------------------------------------------------

    def save(self, path: str | Path) -> None:
        meta = {
            "n_trees": self.n_trees,
            "subsample": self.subsample,
            "seed": self.seed,
            "c_norm": self.c_norm,
            "threshold": self.threshold,
        }
        arrays = {}
        for i, t in enumerate(self.trees):
            arrays[f"t{i}/feature"] = t.feature
            arrays[f"t{i}/threshold"] = t.threshold
            arrays[f"t{i}/left"] = t.left
            arrays[f"t{i}/right"] = t.right
            arrays[f"t{i}/depth"] = t.depth
            arrays[f"t{i}/adjust"] = t.adjust
        np.savez(Path(path), meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "IsolationForest":
        with np.load(Path(path)) as data:
            meta = json.loads(bytes(data["meta"]))
            forest = cls(meta["n_trees"], meta["subsample"], meta["seed"])
            forest.c_norm = meta["c_norm"]
            forest.threshold = meta["threshold"]
            forest.trees = [
                _Tree(
                    feature=data[f"t{i}/feature"],
                    threshold=data[f"t{i}/threshold"],
                    left=data[f"t{i}/left"],
                    right=data[f"t{i}/right"],
                    depth=data[f"t{i}/depth"],
                    adjust=data[f"t{i}/adjust"],
                )
                for i in range(meta["n_trees"])
            ]
        return forest


def _build_tree(sample: np.ndarray, max_depth: int, rng: np.random.Generator) -> _Tree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    depth: list[int] = []
    adjust: list[float] = []

    def new_node(d: int) -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        depth.append(d)
        adjust.append(0.0)
        return len(feature) - 1

    def grow(rows: np.ndarray, d: int) -> int:
        node = new_node(d)
        if d >= max_depth or len(rows) <= 1:
            adjust[node] = average_path_length(len(rows))
            return node
        lo = rows.min(axis=0)
        hi = rows.max(axis=0)
        splittable = np.flatnonzero(hi > lo)
        if len(splittable) == 0:  # all duplicate rows
            adjust[node] = average_path_length(len(rows))
            return node
        q = int(rng.choice(splittable))
        p = rng.uniform(lo[q], hi[q])
        mask = rows[:, q] < p
        feature[node] = q
        threshold[node] = p
        left[node] = grow(rows[mask], d + 1)
        right[node] = grow(rows[~mask], d + 1)
        return node

    grow(sample, 0)
    return _Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        depth=np.asarray(depth, dtype=np.int64),
        adjust=np.asarray(adjust, dtype=np.float64),
    )
