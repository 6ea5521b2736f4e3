"""Frame extraction: videos/images to descriptor-stream records.

Output records follow the mapping engine's stream format exactly: one JSON
object per frame with unit-norm "full"/"left"/"middle"/"right" vectors and
the original video frame index. The VLAD vocabulary is fitted per input from
its own sampled frames, so no pretrained vocabulary ships with the tool.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterator

import cv2
import numpy as np

from .backbone import Backbone
from .errors import DecodeError
from .vlad import VladVocabulary


@dataclass(frozen=True)
class ExtractorConfig:
    backbone: str = "vit-rand/0"
    feature_layer: int = -1
    vlad_clusters: int = 32
    frame_stride: int = 30
    segment_fractions: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    vocab_samples: int = 8192
    seed: int = 0

    def __post_init__(self) -> None:
        if self.frame_stride < 1:
            raise ValueError("frame_stride must be >= 1")
        if self.vlad_clusters < 1:
            raise ValueError("vlad_clusters must be >= 1")
        if len(self.segment_fractions) != 3 or any(f <= 0 for f in self.segment_fractions):
            raise ValueError("segment_fractions must be three positive numbers")
        if abs(sum(self.segment_fractions) - 1.0) > 1e-6:
            raise ValueError("segment_fractions must sum to 1")


class FrameExtractor:
    """Backbone + per-input VLAD vocabulary, applied frame by frame."""

    def __init__(self, config: ExtractorConfig | None = None):
        self.config = config or ExtractorConfig()
        self.backbone = Backbone(self.config.backbone, self.config.feature_layer)

    @property
    def output_dim(self) -> int:
        return self.config.vlad_clusters * self.backbone.width

    def _segments(self, image: np.ndarray) -> list[np.ndarray]:
        width = image.shape[1]
        f_left, f_middle, _ = self.config.segment_fractions
        a = max(1, int(round(width * f_left)))
        b = max(a + 1, int(round(width * (f_left + f_middle))))
        b = min(b, width - 1)
        return [image[:, :a], image[:, a:b], image[:, b:]]

    def _fit_vocabulary(self, images: list[np.ndarray]) -> VladVocabulary:
        pools = [self.backbone.patch_features(img) for img in images]
        return VladVocabulary.fit(
            np.concatenate(pools, axis=0),
            clusters=self.config.vlad_clusters,
            seed=self.config.seed,
            max_samples=self.config.vocab_samples,
        )

    def _descriptor(self, image: np.ndarray, vocabulary: VladVocabulary) -> np.ndarray:
        return vocabulary.aggregate(self.backbone.patch_features(image))

    def _record(self, image: np.ndarray, frame_index: int, vocabulary: VladVocabulary) -> dict:
        left, middle, right = self._segments(image)
        return {
            "frame": frame_index,
            "full": _f32_list(self._descriptor(image, vocabulary)),
            "left": _f32_list(self._descriptor(left, vocabulary)),
            "middle": _f32_list(self._descriptor(middle, vocabulary)),
            "right": _f32_list(self._descriptor(right, vocabulary)),
        }

    # -- public API ---------------------------------------------------------

    def extract_image(self, path: str | Path) -> dict:
        """One stream record for a single image; the vocabulary is fitted on
        the image's own patch features together with its segment crops (a
        vocabulary fitted on exactly the aggregated feature set would leave
        every cluster's residual sum at zero)."""
        image = _read_image(path)
        vocabulary = self._fit_vocabulary([image, *self._segments(image)])
        return self._record(image, 0, vocabulary)

    def extract_video(self, path: str | Path) -> Iterator[dict]:
        """Stream records for every ``frame_stride``-th frame of a video,
        carrying original frame indices."""
        sampled = _sample_video(path, self.config.frame_stride)
        if not sampled:
            raise DecodeError(f"no frames decoded from {path}")
        vocabulary = self._fit_vocabulary([img for _, img in sampled])
        for frame_index, image in sampled:
            yield self._record(image, frame_index, vocabulary)


def write_records(records, out: str | Path | IO[str]) -> None:
    def _dump(handle: IO[str]) -> None:
        for record in records:
            handle.write(json.dumps(record))
            handle.write("\n")

    if hasattr(out, "write"):
        _dump(out)  # type: ignore[arg-type]
    else:
        with open(out, "w", encoding="utf-8") as handle:
            _dump(handle)


def _f32_list(v: np.ndarray) -> list[float]:
    # 32-bit precision on the wire; shortest-repr floats round-trip exactly.
    return [float(x) for x in np.asarray(v, dtype=np.float32)]


def _read_image(path: str | Path) -> np.ndarray:
    image = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if image is None:
        raise DecodeError(f"cannot decode image {path}")
    return cv2.cvtColor(image, cv2.COLOR_BGR2RGB)


def _sample_video(path: str | Path, stride: int) -> list[tuple[int, np.ndarray]]:
    capture = cv2.VideoCapture(str(path))
    if not capture.isOpened():
        raise DecodeError(f"cannot open video {path}")
    sampled = []
    index = 0
    try:
        while True:
            ok, frame = capture.read()
            if not ok:
                break
            if index % stride == 0:
                sampled.append((index, cv2.cvtColor(frame, cv2.COLOR_BGR2RGB)))
            index += 1
    finally:
        capture.release()
    return sampled
