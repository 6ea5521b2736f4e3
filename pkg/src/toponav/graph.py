"""The topological map: a directed graph of place nodes with distance-weighted arcs."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from heapq import heappop, heappush
from typing import Iterable

import numpy as np

from .descriptors import ThresholdConfig, _f32_list
from .errors import (
    DimMismatchError,
    FormatError,
    FrozenMapError,
    NoPathError,
    SelfArcError,
    UnknownNodeError,
    VersionError,
)

MAP_VERSION = "1"


@dataclass
class TopoArc:
    """Directed arc to another node, weighted by the relative-distance count."""

    to: int
    weight: int


@dataclass
class TopoNode:
    """One place node: the source frame, its descriptor, and outgoing arcs."""

    id: int
    frame_index: int
    descriptor: np.ndarray
    arcs: list[TopoArc] = field(default_factory=list)

    def arc_to(self, dst: int) -> TopoArc | None:
        for arc in self.arcs:
            if arc.to == dst:
                return arc
        return None


class TopologicalMap:
    """Directed place graph, id-indexed with a contiguous 0..n-1 range.

    Mutable while a single writer builds it; freeze() makes it safe to share
    read-only between concurrent localization and planning calls.
    """

    def __init__(self, dim: int, config: ThresholdConfig, version: str = MAP_VERSION):
        if dim < 2:
            raise ValueError("descriptor dim must be >= 2")
        self.dim = dim
        self.config = config
        self.version = version
        self.nodes: list[TopoNode] = []
        self._frozen = False

    # -- construction ------------------------------------------------------

    def add_node(self, frame_index: int, descriptor: np.ndarray) -> int:
        self._check_mutable()
        if descriptor.shape[0] != self.dim:
            raise DimMismatchError(
                f"descriptor dim {descriptor.shape[0]} does not match map dim {self.dim}"
            )
        node_id = len(self.nodes)
        self.nodes.append(TopoNode(id=node_id, frame_index=frame_index, descriptor=descriptor))
        return node_id

    def add_arc(self, src: int, dst: int, weight: int) -> None:
        """Insert arc src->dst; a parallel arc keeps the minimum weight."""
        self._check_mutable()
        if src == dst:
            raise SelfArcError(f"self-arc on node {src}")
        for node_id in (src, dst):
            if not 0 <= node_id < len(self.nodes):
                raise UnknownNodeError(f"node {node_id} does not exist")
        if weight < 0:
            raise ValueError("arc weight must be non-negative")
        existing = self.nodes[src].arc_to(dst)
        if existing is not None:
            existing.weight = min(existing.weight, weight)
        else:
            self.nodes[src].arcs.append(TopoArc(to=dst, weight=weight))

    def freeze(self) -> None:
        self._frozen = True

    @property
    def frozen(self) -> bool:
        return self._frozen

    def _check_mutable(self) -> None:
        if self._frozen:
            raise FrozenMapError("map is finalized and read-only")

    # -- queries -----------------------------------------------------------

    def __len__(self) -> int:
        return len(self.nodes)

    def node(self, node_id: int) -> TopoNode:
        if not 0 <= node_id < len(self.nodes):
            raise UnknownNodeError(f"node {node_id} does not exist")
        return self.nodes[node_id]

    def descriptors(self) -> list[np.ndarray]:
        return [n.descriptor for n in self.nodes]

    def arc_count(self) -> int:
        return sum(len(n.arcs) for n in self.nodes)

    def shortest_path(self, start: int, goal: int) -> tuple[list[int], int]:
        """Minimum-weight directed path start..goal inclusive, via Dijkstra.

        Equal-cost paths resolve to the fewest nodes, then the
        lexicographically smallest id sequence, so plans are identical
        across runs and platforms.
        """
        self.node(start)
        self.node(goal)
        settled: set[int] = set()
        heap: list[tuple[int, int, tuple[int, ...]]] = [(0, 1, (start,))]
        while heap:
            cost, length, path = heappop(heap)
            node_id = path[-1]
            if node_id in settled:
                continue
            settled.add(node_id)
            if node_id == goal:
                return list(path), cost
            for arc in self.nodes[node_id].arcs:
                if arc.to not in settled:
                    heappush(heap, (cost + arc.weight, length + 1, path + (arc.to,)))
        raise NoPathError(f"node {goal} is unreachable from node {start}")

    def reachable_from(self, start: int) -> set[int]:
        seen = {start}
        stack = [start]
        while stack:
            for arc in self.nodes[stack.pop()].arcs:
                if arc.to not in seen:
                    seen.add(arc.to)
                    stack.append(arc.to)
        return seen

    def validate(self, require_reachable: bool = False) -> None:
        """Check all node/arc invariants, raising FormatError on violation."""
        for i, node in enumerate(self.nodes):
            if node.id != i:
                raise FormatError(f"node at position {i} carries id {node.id}")
            if node.frame_index < 0:
                raise FormatError(f"node {i} has negative frame index")
            if node.descriptor.shape[0] != self.dim:
                raise FormatError(f"node {i} descriptor dim != map dim {self.dim}")
            norm = float(np.linalg.norm(node.descriptor))
            if abs(norm - 1.0) > 1e-3:
                raise FormatError(f"node {i} descriptor is not unit-norm (|v|={norm:.6f})")
            seen_targets: set[int] = set()
            for arc in node.arcs:
                if arc.to == i:
                    raise FormatError(f"node {i} has a self-arc")
                if not 0 <= arc.to < len(self.nodes):
                    raise FormatError(f"node {i} has an arc to unknown node {arc.to}")
                if arc.to in seen_targets:
                    raise FormatError(f"node {i} has parallel arcs to {arc.to}")
                if arc.weight < 0 or arc.weight != int(arc.weight):
                    raise FormatError(f"arc {i}->{arc.to} weight {arc.weight} is invalid")
                seen_targets.add(arc.to)
        self.config.validate()
        if require_reachable and self.nodes:
            missing = set(range(len(self.nodes))) - self.reachable_from(0)
            if missing:
                raise FormatError(f"nodes {sorted(missing)} unreachable from node 0")

    def copy(self) -> "TopologicalMap":
        dup = TopologicalMap(self.dim, self.config, self.version)
        for node in self.nodes:
            dup.nodes.append(
                TopoNode(
                    id=node.id,
                    frame_index=node.frame_index,
                    descriptor=node.descriptor,
                    arcs=[TopoArc(a.to, a.weight) for a in node.arcs],
                )
            )
        return dup

    def to_dot(self) -> str:
        """Render the map as a Graphviz digraph, one statement per node/arc."""
        lines = ["digraph topomap {", "  rankdir=LR;"]
        for node in self.nodes:
            lines.append(f'  N{node.id} [label="N{node.id}"];')
        for node in self.nodes:
            for arc in node.arcs:
                lines.append(f'  N{node.id} -> N{arc.to} [label="{arc.weight}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Map document (JSON)
# ---------------------------------------------------------------------------

def serialize(topo_map: TopologicalMap) -> bytes:
    """Encode the map as a canonical JSON document (descriptors at 32-bit)."""
    doc = {
        "version": topo_map.version,
        "dim": topo_map.dim,
        "config": topo_map.config.to_dict(),
        "nodes": [
            {
                "id": node.id,
                "frame": node.frame_index,
                "descriptor": _f32_list(node.descriptor),
                "arcs": [{"to": arc.to, "weight": arc.weight} for arc in node.arcs],
            }
            for node in topo_map.nodes
        ],
    }
    return (json.dumps(doc, separators=(",", ":")) + "\n").encode("utf-8")


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise FormatError(message)


def deserialize(data: bytes | str) -> TopologicalMap:
    """Decode a map document; the result is validated and frozen."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON at line {exc.lineno} column {exc.colno}") from exc
    _require(isinstance(doc, dict), "map document must be a JSON object")
    version = doc.get("version")
    if version != MAP_VERSION:
        raise VersionError(f"unsupported map version {version!r} (supported: {MAP_VERSION!r})")
    for key in ("dim", "config", "nodes"):
        _require(key in doc, f"map document missing field '{key}'")
    _require(isinstance(doc["dim"], int) and doc["dim"] >= 2, "field 'dim' must be an int >= 2")
    _require(isinstance(doc["config"], dict), "field 'config' must be an object")
    config = ThresholdConfig.from_dict(doc["config"])
    topo_map = TopologicalMap(dim=doc["dim"], config=config, version=version)
    _require(isinstance(doc["nodes"], list), "field 'nodes' must be a list")
    for pos, entry in enumerate(doc["nodes"]):
        _require(isinstance(entry, dict), f"nodes[{pos}] must be an object")
        for key in ("id", "frame", "descriptor", "arcs"):
            _require(key in entry, f"nodes[{pos}] missing field '{key}'")
        _require(entry["id"] == pos, f"nodes[{pos}] id {entry['id']} breaks the 0..n-1 range")
        _require(
            isinstance(entry["frame"], int) and entry["frame"] >= 0,
            f"nodes[{pos}] frame must be a non-negative int",
        )
        descriptor = np.asarray(entry["descriptor"], dtype=np.float64)
        _require(
            descriptor.ndim == 1 and descriptor.size == doc["dim"],
            f"nodes[{pos}] descriptor dim != {doc['dim']}",
        )
        topo_map.nodes.append(
            TopoNode(id=pos, frame_index=entry["frame"], descriptor=descriptor)
        )
    for pos, entry in enumerate(doc["nodes"]):
        _require(isinstance(entry["arcs"], list), f"nodes[{pos}] arcs must be a list")
        targets: set[int] = set()
        for arc_pos, arc in enumerate(entry["arcs"]):
            where = f"nodes[{pos}].arcs[{arc_pos}]"
            _require(isinstance(arc, dict), f"{where} must be an object")
            for key in ("to", "weight"):
                _require(key in arc, f"{where} missing field '{key}'")
            _require(
                isinstance(arc["to"], int) and isinstance(arc["weight"], int),
                f"{where} fields must be integers",
            )
            _require(arc["to"] not in targets, f"{where} duplicates an arc to {arc['to']}")
            targets.add(arc["to"])
            try:
                topo_map.add_arc(pos, arc["to"], arc["weight"])
            except (SelfArcError, UnknownNodeError, ValueError) as exc:
                raise FormatError(f"{where}: {exc}") from exc
    topo_map.validate()
    topo_map.freeze()
    return topo_map
