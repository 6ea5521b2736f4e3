"""VLAD aggregation of patch features over a per-stream vocabulary."""
from __future__ import annotations

import numpy as np


def _pairwise_sq_dist(features: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # ||x - c||^2 expanded; avoids materializing an (n, k, d) tensor.
    return (
        (features**2).sum(axis=1, keepdims=True)
        - 2.0 * features @ centroids.T
        + (centroids**2).sum(axis=1)
    )


def kmeans(features: np.ndarray, clusters: int, seed: int, iterations: int = 25) -> np.ndarray:
    """Plain seeded Lloyd's iterations; deterministic by construction."""
    if len(features) < clusters:
        raise ValueError(f"need at least {clusters} features, got {len(features)}")
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(features), size=clusters, replace=False)
    centroids = features[np.sort(picks)].astype(np.float64).copy()
    for _ in range(iterations):
        assignment = np.argmin(_pairwise_sq_dist(features, centroids), axis=1)
        for j in range(clusters):
            members = features[assignment == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
    return centroids


class VladVocabulary:
    """Cluster vocabulary fitted on one stream's own patch features."""

    def __init__(self, centroids: np.ndarray):
        self.centroids = centroids
        self.clusters = centroids.shape[0]
        self.width = centroids.shape[1]

    @classmethod
    def fit(cls, features: np.ndarray, clusters: int, seed: int,
            max_samples: int = 8192) -> "VladVocabulary":
        features = np.asarray(features, dtype=np.float64)
        if len(features) > max_samples:
            rng = np.random.default_rng(seed)
            picks = np.sort(rng.choice(len(features), size=max_samples, replace=False))
            features = features[picks]
        return cls(kmeans(features, clusters, seed))

    def aggregate(self, features: np.ndarray) -> np.ndarray:
        """Hard-assignment VLAD: per-cluster residual sums, intra-normalized,
        flattened and L2-normalized to a unit descriptor."""
        features = np.asarray(features, dtype=np.float64)
        assignment = np.argmin(_pairwise_sq_dist(features, self.centroids), axis=1)
        residuals = np.zeros((self.clusters, self.width))
        for j in range(self.clusters):
            members = features[assignment == j]
            if len(members):
                residuals[j] = (members - self.centroids[j]).sum(axis=0)
        norms = np.linalg.norm(residuals, axis=1, keepdims=True)
        np.divide(residuals, norms, out=residuals, where=norms > 1e-12)
        flat = residuals.ravel()
        total = np.linalg.norm(flat)
        if total <= 1e-12:
            # degenerate input (all features on their centroids); keep the
            # output a valid unit vector
            flat = np.zeros_like(flat)
            flat[0] = 1.0
            return flat
        return flat / total
