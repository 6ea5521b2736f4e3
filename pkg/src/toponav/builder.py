"""Incremental map construction from a descriptor stream, plus offline optimization.

Every frame runs through the same gate sequence: motion counting against the
previous frame, a similarity-and-interval gate against the last node, then a
loop-closure scan before a new node may be founded.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .descriptors import ObservationDescriptors, ThresholdConfig, best_match, cosine_similarity
from .errors import BadThresholdsError, DimMismatchError, NonMonotonicFrameError
from .graph import TopoArc, TopologicalMap, TopoNode


class UpdateKind(str, Enum):
    NO_CHANGE = "no_change"
    DISTANCE_INCREMENTED = "distance_incremented"
    NODE_ADDED = "node_added"
    LOOP_CLOSED = "loop_closed"


@dataclass(frozen=True)
class MapUpdate:
    """What one processed frame did to the map under construction."""

    kind: UpdateKind
    frame_index: int
    node_id: int | None = None
    loop_from: int | None = None
    loop_to: int | None = None
    weight: int | None = None

    def to_record(self) -> dict:
        record = {"frame": self.frame_index, "event": self.kind.value}
        if self.kind is UpdateKind.NODE_ADDED:
            record["node"] = self.node_id
            record["weight"] = self.weight
        elif self.kind is UpdateKind.LOOP_CLOSED:
            record["from"] = self.loop_from
            record["to"] = self.loop_to
            record["weight"] = self.weight
        return record


class MapBuilder:
    """Single-writer, strictly sequential map construction state.

    The first frame always founds node 0; call process_frame for every later
    frame in stream order, then finalize once.
    """

    def __init__(self, first_frame: ObservationDescriptors, config: ThresholdConfig):
        config.validate()
        self.config = config
        self.map = TopologicalMap(dim=first_frame.dim, config=config)
        self.map.add_node(first_frame.frame_index, first_frame.full)
        self.last_node = 0
        self.m_distance = 0
        self.prev_descriptor = first_frame.full
        self.frames_since_last_node = 0
        self.last_frame_index = first_frame.frame_index
        self.events: list[MapUpdate] = []

    def process_frame(self, frame: ObservationDescriptors) -> MapUpdate:
        if frame.dim != self.map.dim:
            raise DimMismatchError(f"frame dim {frame.dim} != map dim {self.map.dim}")
        if frame.frame_index <= self.last_frame_index:
            raise NonMonotonicFrameError(
                f"frame {frame.frame_index} does not increase past {self.last_frame_index}"
            )
        self.last_frame_index = frame.frame_index

        # Motion counting: the distance counter moves only when the view
        # changed noticeably since the previous frame, so standing still
        # never inflates arc weights.
        moved = cosine_similarity(frame.full, self.prev_descriptor) < self.config.t_add_distance
        if moved:
            self.m_distance += 1
        self.prev_descriptor = frame.full
        self.frames_since_last_node += 1

        s_last = cosine_similarity(frame.full, self.map.nodes[self.last_node].descriptor)
        if s_last >= self.config.t_add_new_node or (
            self.frames_since_last_node < self.config.t_interval
        ):
            kind = UpdateKind.DISTANCE_INCREMENTED if moved else UpdateKind.NO_CHANGE
            update = MapUpdate(kind=kind, frame_index=frame.frame_index)
        else:
            update = self._node_event(frame)
        self.events.append(update)
        return update

    def _node_event(self, frame: ObservationDescriptors) -> MapUpdate:
        # Loop-closure scan over the whole map, skipping the most recently
        # added nodes so departure neighborhoods cannot instantly self-close.
        scan_end = len(self.map.nodes) - self.config.loop_exclusion
        if scan_end > 0:
            matched, score = best_match(
                frame.full, self.map.descriptors(), restrict=range(scan_end)
            )
            if score > self.config.t_loop_closure:
                weight = self.m_distance
                self.map.add_arc(self.last_node, matched, weight)
                update = MapUpdate(
                    kind=UpdateKind.LOOP_CLOSED,
                    frame_index=frame.frame_index,
                    loop_from=self.last_node,
                    loop_to=matched,
                    weight=weight,
                )
                self.last_node = matched
                self._reset_counters()
                return update
        new_id = self.map.add_node(frame.frame_index, frame.full)
        weight = self.m_distance
        self.map.add_arc(self.last_node, new_id, weight)
        self.last_node = new_id
        self._reset_counters()
        return MapUpdate(
            kind=UpdateKind.NODE_ADDED,
            frame_index=frame.frame_index,
            node_id=new_id,
            weight=weight,
        )

    def _reset_counters(self) -> None:
        self.m_distance = 0
        self.frames_since_last_node = 0

    def finalize(self) -> TopologicalMap:
        """Validate, freeze, and return the constructed map (idempotent)."""
        self.map.validate(require_reachable=True)
        self.map.freeze()
        return self.map


def build_from_stream(
    frames: Sequence[ObservationDescriptors], config: ThresholdConfig
) -> tuple[TopologicalMap, list[MapUpdate]]:
    """Run the full begin/process/finalize cycle over a stream."""
    if not frames:
        raise ValueError("stream is empty")
    builder = MapBuilder(frames[0], config)
    for frame in frames[1:]:
        builder.process_frame(frame)
    return builder.finalize(), builder.events


# ---------------------------------------------------------------------------
# Offline map optimization
# ---------------------------------------------------------------------------

def optimize(
    topo_map: TopologicalMap,
    merge_similarity: float,
    sparsify_similarity: float,
) -> TopologicalMap:
    """Return a sparser copy of the map; the input is left untouched.

    Two passes run to fixpoint before ids are compacted:
      1. near-duplicate nodes (similarity >= merge_similarity) merge into the
         lower id, with arcs redirected and parallels min-merged;
      2. chain nodes with exactly one in- and one out-arc drop out when they
         resemble their predecessor, their two arc weights summing so path
         costs survive the contraction.
    """
    if not merge_similarity > sparsify_similarity:
        raise BadThresholdsError(
            f"merge_similarity={merge_similarity} must exceed "
            f"sparsify_similarity={sparsify_similarity}"
        )
    nodes: dict[int, TopoNode] = {
        n.id: TopoNode(n.id, n.frame_index, n.descriptor, [TopoArc(a.to, a.weight) for a in n.arcs])
        for n in topo_map.nodes
    }

    def set_arc_min(src: int, dst: int, weight: int) -> None:
        existing = nodes[src].arc_to(dst)
        if existing is not None:
            existing.weight = min(existing.weight, weight)
        else:
            nodes[src].arcs.append(TopoArc(dst, weight))

    def drop_node(victim: int) -> None:
        del nodes[victim]
        for node in nodes.values():
            node.arcs = [a for a in node.arcs if a.to != victim]

    # Pass 1: merge near-duplicates, highest-similarity pair first.
    while True:
        ids = sorted(nodes)
        best_pair: tuple[int, int] | None = None
        best_score = merge_similarity
        for ai in range(len(ids)):
            for bi in range(ai + 1, len(ids)):
                score = cosine_similarity(
                    nodes[ids[ai]].descriptor, nodes[ids[bi]].descriptor
                )
                if score > best_score or (score == best_score and best_pair is None):
                    best_pair = (ids[ai], ids[bi])
                    best_score = score
        if best_pair is None:
            break
        keep, gone = best_pair
        for arc in nodes[gone].arcs:
            if arc.to != keep:
                set_arc_min(keep, arc.to, arc.weight)
        for node in nodes.values():
            if node.id in (keep, gone):
                continue
            for arc in list(node.arcs):
                if arc.to == gone:
                    node.arcs.remove(arc)
                    if node.id != keep:
                        set_arc_min(node.id, keep, arc.weight)
        nodes[gone].arcs = []
        drop_node(gone)

    # Pass 2: contract pass-through chain nodes, ascending id order.
    changed = True
    while changed:
        changed = False
        for vid in sorted(nodes):
            in_arcs = [
                (node.id, arc.weight)
                for node in nodes.values()
                for arc in node.arcs
                if arc.to == vid
            ]
            out_arcs = nodes[vid].arcs
            if len(in_arcs) != 1 or len(out_arcs) != 1:
                continue
            (uid, w_in), out = in_arcs[0], out_arcs[0]
            if uid == out.to:
                continue
            if cosine_similarity(nodes[uid].descriptor, nodes[vid].descriptor) < sparsify_similarity:
                continue
            w_total = w_in + out.weight
            xid = out.to
            drop_node(vid)
            set_arc_min(uid, xid, w_total)
            changed = True

    # Compact ids to 0..m-1, preserving relative order.
    remap = {old: new for new, old in enumerate(sorted(nodes))}
    result = TopologicalMap(dim=topo_map.dim, config=topo_map.config, version=topo_map.version)
    for old in sorted(nodes):
        node = nodes[old]
        result.add_node(node.frame_index, node.descriptor)
    for old in sorted(nodes):
        for arc in nodes[old].arcs:
            result.add_arc(remap[old], remap[arc.to], arc.weight)
    result.validate()
    result.freeze()
    return result
