"""Global appearance descriptors and the similarity machinery built on them.

A descriptor is a unit-norm float vector summarizing one camera view. All
higher layers (map building, localization, action selection) reduce to
cosine similarities between such vectors, gated by the thresholds collected
in :class:`ThresholdConfig`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import (
    DimMismatchError,
    EmptyCandidatesError,
    FormatError,
    NonMonotonicFrameError,
    StreamTooShortError,
    ZeroNormError,
)

_NORM_FLOOR = 1e-12
# Calibrated similarity thresholds are kept strictly inside (-1, 1).
_CAL_CLAMP = 0.99


def normalize(raw: Sequence[float] | np.ndarray) -> np.ndarray:
    """Return ``raw`` rescaled to unit L2 norm as a float64 vector.

    Raises ZeroNormError when the input has no usable direction (norm below
    1e-12, e.g. a degenerate frontend output) and ValueError for vectors
    shorter than 2 components.
    """
    v = np.asarray(raw, dtype=np.float64)
    if v.ndim != 1 or v.size < 2:
        raise ValueError(f"descriptor must be a 1-D vector with dim >= 2, got shape {v.shape}")
    norm = float(np.linalg.norm(v))
    if norm <= _NORM_FLOOR:
        raise ZeroNormError(f"descriptor norm {norm:.3e} is below {_NORM_FLOOR:.0e}")
    return v / norm


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of two unit vectors, clamped into [-1, 1]."""
    if a.shape != b.shape:
        raise DimMismatchError(f"descriptor dims differ: {a.shape[0]} vs {b.shape[0]}")
    s = float(np.dot(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)))
    return min(1.0, max(-1.0, s))


def best_match(
    query: np.ndarray,
    candidates: Sequence[np.ndarray],
    restrict: Iterable[int] | None = None,
) -> tuple[int, float]:
    """Linear-scan argmax of cosine similarity over an indexed candidate set.

    ``restrict`` limits the scan to the given candidate indices. Ties break
    toward the lowest index so repeated runs stay reproducible. Maps stay
    small (tens of nodes), so the exact scan is also the fast path.
    """
    if restrict is None:
        indices = range(len(candidates))
    else:
        indices = sorted(set(restrict))
    best_index = -1
    best_score = -2.0
    for i in indices:
        score = cosine_similarity(query, candidates[i])
        if score > best_score:
            best_index = i
            best_score = score
    if best_index < 0:
        raise EmptyCandidatesError("no candidates to match against")
    return best_index, best_score


@dataclass(frozen=True)
class ObservationDescriptors:
    """Descriptors for one frame: the whole view plus its three horizontal segments."""

    frame_index: int
    full: np.ndarray
    left: np.ndarray
    middle: np.ndarray
    right: np.ndarray

    def __post_init__(self) -> None:
        if self.frame_index < 0:
            raise ValueError("frame_index must be non-negative")
        dim = self.full.shape[0]
        for name in ("left", "middle", "right"):
            if getattr(self, name).shape[0] != dim:
                raise DimMismatchError(f"segment '{name}' dim differs from full ({dim})")

    @property
    def dim(self) -> int:
        return self.full.shape[0]


@dataclass(frozen=True)
class ThresholdConfig:
    """All similarity/gating thresholds used by map building and navigation.

    Defaults are tuned for the synthetic descriptor world; real streams
    should go through :func:`calibrate_thresholds` instead.
    """

    t_add_new_node: float = 0.60
    t_add_distance: float = 0.995
    t_loop_closure: float = 0.85
    t_interval: int = 5
    t_milestone: float = 0.70
    t_change_node: float = 0.60
    t_limited_control: float = 0.50
    match_window_behind: int = 1
    match_window_ahead: int = 2
    loop_exclusion: int = 2

    def validate(self) -> None:
        from .errors import BadThresholdsError

        sims = {
            "t_add_new_node": self.t_add_new_node,
            "t_add_distance": self.t_add_distance,
            "t_loop_closure": self.t_loop_closure,
            "t_milestone": self.t_milestone,
            "t_change_node": self.t_change_node,
            "t_limited_control": self.t_limited_control,
        }
        for name, value in sims.items():
            if not -1.0 < value < 1.0:
                raise BadThresholdsError(f"{name}={value} must lie strictly inside (-1, 1)")
        if self.t_interval < 1:
            raise BadThresholdsError(f"t_interval={self.t_interval} must be >= 1")
        if self.t_change_node > self.t_milestone:
            raise BadThresholdsError(
                f"t_change_node={self.t_change_node} must not exceed t_milestone={self.t_milestone}"
            )
        if not self.t_add_new_node < self.t_loop_closure:
            raise BadThresholdsError(
                f"t_add_new_node={self.t_add_new_node} must be below "
                f"t_loop_closure={self.t_loop_closure}"
            )
        for name in ("match_window_behind", "match_window_ahead", "loop_exclusion"):
            if getattr(self, name) < 0:
                raise BadThresholdsError(f"{name} must be non-negative")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "ThresholdConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise FormatError(f"unknown threshold fields: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg


def _clamp_cal(value: float) -> float:
    return min(_CAL_CLAMP, max(-_CAL_CLAMP, value))


def calibrate_thresholds(
    stream: Sequence[ObservationDescriptors], gap: int
) -> ThresholdConfig:
    """Derive a ThresholdConfig from the similarity statistics of a stream.

    Consecutive-frame similarities set the motion threshold, ``gap``-frame
    similarities set the node-addition threshold, and the remaining
    thresholds are placed relative to those two. Output is clamped so the
    config invariants always hold.
    """
    if gap < 1:
        raise ValueError("gap must be >= 1")
    if len(stream) < gap + 2:
        raise StreamTooShortError(
            f"need at least gap + 2 = {gap + 2} frames, got {len(stream)}"
        )
    consecutive = np.array(
        [cosine_similarity(stream[i].full, stream[i - 1].full) for i in range(1, len(stream))]
    )
    gapped = np.array(
        [cosine_similarity(stream[i].full, stream[i - gap].full) for i in range(gap, len(stream))]
    )
    t_add_distance = _clamp_cal(float(np.percentile(consecutive, 50)))
    t_add_new_node = _clamp_cal(float(np.percentile(gapped, 25)))
    t_loop_closure = _clamp_cal(
        0.5 * (t_add_new_node + float(np.percentile(consecutive, 90)))
    )
    # Final clamping: keep the node-addition threshold strictly below the
    # loop threshold even on degenerate (e.g. stationary) streams.
    if t_add_new_node >= t_loop_closure:
        t_add_new_node = t_loop_closure - 0.01
    cfg = ThresholdConfig(
        t_add_new_node=t_add_new_node,
        t_add_distance=t_add_distance,
        t_loop_closure=t_loop_closure,
        t_milestone=_clamp_cal(t_add_new_node + 0.10),
        t_change_node=t_add_new_node,
        t_limited_control=_clamp_cal(t_add_new_node - 0.10),
    )
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# Descriptor stream files (JSON Lines, one record per frame)
# ---------------------------------------------------------------------------

def _f32_list(v: np.ndarray) -> list[float]:
    # Serialize at 32-bit precision; the shortest repr of the float32 value
    # round-trips exactly through JSON.
    return [float(x) for x in np.asarray(v, dtype=np.float32)]


def frame_to_record(frame: ObservationDescriptors, include_segments: bool = True) -> dict:
    record = {"frame": frame.frame_index, "full": _f32_list(frame.full)}
    if include_segments:
        record["left"] = _f32_list(frame.left)
        record["middle"] = _f32_list(frame.middle)
        record["right"] = _f32_list(frame.right)
    return record


def _parse_vector(record: dict, key: str, line_no: int, dim: int | None) -> np.ndarray:
    raw = record[key]
    if not isinstance(raw, list) or len(raw) < 2:
        raise FormatError(f"line {line_no}: field '{key}' must be a vector with dim >= 2")
    try:
        v = np.asarray(raw, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"line {line_no}: field '{key}' is not numeric") from exc
    if dim is not None and v.size != dim:
        raise FormatError(f"line {line_no}: field '{key}' has dim {v.size}, expected {dim}")
    norm = float(np.linalg.norm(v))
    if abs(norm - 1.0) > 1e-3:
        raise FormatError(f"line {line_no}: field '{key}' is not unit-norm (|v|={norm:.6f})")
    return v


def record_to_frame(record: dict, line_no: int = 0, dim: int | None = None) -> ObservationDescriptors:
    """Decode one stream record; segments default to the full-view descriptor."""
    if not isinstance(record, dict):
        raise FormatError(f"line {line_no}: record must be a JSON object")
    if "frame" not in record or "full" not in record:
        raise FormatError(f"line {line_no}: record needs 'frame' and 'full' fields")
    if not isinstance(record["frame"], int) or record["frame"] < 0:
        raise FormatError(f"line {line_no}: 'frame' must be a non-negative integer")
    full = _parse_vector(record, "full", line_no, dim)
    segments = {}
    for key in ("left", "middle", "right"):
        if key in record:
            segments[key] = _parse_vector(record, key, line_no, full.size)
        else:
            segments[key] = full
    return ObservationDescriptors(frame_index=record["frame"], full=full, **segments)


def write_stream(
    frames: Iterable[ObservationDescriptors],
    path: str | Path | IO[str],
    include_segments: bool = True,
) -> None:
    """Write frames as JSON Lines in the descriptor-stream format."""

    def _dump(out: IO[str]) -> None:
        for frame in frames:
            out.write(json.dumps(frame_to_record(frame, include_segments)))
            out.write("\n")

    if hasattr(path, "write"):
        _dump(path)  # type: ignore[arg-type]
    else:
        with open(path, "w", encoding="utf-8") as out:
            _dump(out)


def read_stream(path: str | Path | IO[str]) -> list[ObservationDescriptors]:
    """Read a descriptor stream, validating dims and frame monotonicity."""
    if hasattr(path, "read"):
        lines = path.read().splitlines()  # type: ignore[union-attr]
    else:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    frames: list[ObservationDescriptors] = []
    dim: int | None = None
    last_frame = -1
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"line {line_no}: invalid JSON at column {exc.colno}") from exc
        frame = record_to_frame(record, line_no, dim)
        if frame.frame_index <= last_frame:
            raise NonMonotonicFrameError(
                f"line {line_no}: frame {frame.frame_index} does not increase past {last_frame}"
            )
        last_frame = frame.frame_index
        dim = frame.dim
        frames.append(frame)
    return frames
