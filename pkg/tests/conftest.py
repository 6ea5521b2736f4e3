import math

import numpy as np
import pytest

from toponav import ObservationDescriptors, ThresholdConfig, TopologicalMap, normalize


def unit(dim: int, axis: int = 0) -> np.ndarray:
    v = np.zeros(dim)
    v[axis] = 1.0
    return normalize(v)


def unit_with_cosine(base: np.ndarray, cosine: float, ortho_axis: int) -> np.ndarray:
    """Unit vector at an exact cosine to ``base``, rotated toward a basis axis
    orthogonal to it."""
    w = np.zeros_like(base)
    w[ortho_axis] = 1.0
    w = w - np.dot(w, base) * base
    w = w / np.linalg.norm(w)
    angle = math.acos(cosine)
    return normalize(math.cos(angle) * base + math.sin(angle) * w)


def frame_of(vec: np.ndarray, frame_index: int = 0, **segments) -> ObservationDescriptors:
    return ObservationDescriptors(
        frame_index=frame_index,
        full=vec,
        left=segments.get("left", vec),
        middle=segments.get("middle", vec),
        right=segments.get("right", vec),
    )


def random_walk_stream(rng: np.random.Generator, length: int, dim: int, sigma: float):
    """Stream whose descriptors drift smoothly, with irregular frame gaps."""
    v = normalize(rng.standard_normal(dim))
    frames = []
    frame_index = 0
    for _ in range(length):
        frames.append(frame_of(v, frame_index))
        frame_index += int(rng.integers(1, 4))
        v = normalize(v + sigma * rng.standard_normal(dim))
    return frames


def random_map(rng: np.random.Generator, n_nodes: int, dim: int = 8, edge_prob: float = 0.3,
               config: ThresholdConfig | None = None) -> TopologicalMap:
    m = TopologicalMap(dim=dim, config=config or ThresholdConfig())
    for i in range(n_nodes):
        m.add_node(i * 2, normalize(rng.standard_normal(dim)))
    for i in range(n_nodes):
        for j in range(n_nodes):
            if i != j and rng.random() < edge_prob:
                m.add_arc(i, j, int(rng.integers(0, 10)))
    return m


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
