"""Goal-directed navigation over a finalized map.

A Navigator owns the planned node sequence and walks it with three
mechanisms: similarity-driven reference switching, windowed relocalization
when confidence drops, and a two-cycle arbitration over segment votes for
the actual motion commands.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numpy as np

from .descriptors import ObservationDescriptors, ThresholdConfig, best_match, cosine_similarity
from .errors import EmptyCandidatesError, GoalNotInMapError, InvalidPhaseError
from .graph import TopologicalMap


class Action(str, Enum):
    FORWARD = "forward"
    LEFT = "left"
    RIGHT = "right"
    FORWARD_LEFT = "forward_left"
    FORWARD_RIGHT = "forward_right"
    ROTATE_SEARCH = "rotate_search"
    NO_ACTION = "no_action"


class Phase(str, Enum):
    LOCALIZING_START = "localizing_start"
    NAVIGATING = "navigating"
    RELOCALIZING = "relocalizing"
    REACHED = "reached"
    FAILED = "failed"


EVENT_NONE = "none"
EVENT_NODE_SWITCHED = "node_switched"
EVENT_GOAL_REACHED = "goal_reached"
EVENT_RELOCALIZATION = "relocalization_triggered"
EVENT_LOCALIZATION_FAILED = "localization_failed"


@dataclass(frozen=True)
class LocalizationResult:
    node_id: int
    score: float
    matched: bool


@dataclass(frozen=True)
class StepOutcome:
    action: Action
    event: str
    seq_pos: int
    s_ref: float

    def to_record(self, step: int) -> dict:
        return {
            "step": step,
            "action": self.action.value,
            "event": self.event,
            "seq_pos": self.seq_pos,
            "s_ref": self.s_ref,
        }


class NeedRotation:
    """Sentinel: the caller should rotate counterclockwise and retry."""

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return "NeedRotation()"


NEED_ROTATION = NeedRotation()


def localize(
    observation: np.ndarray,
    topo_map: TopologicalMap,
    t_milestone: float,
    restrict: Iterable[int] | None = None,
) -> LocalizationResult:
    """Best-match localization; a match only counts above the milestone threshold."""
    node_id, score = best_match(observation, topo_map.descriptors(), restrict=restrict)
    return LocalizationResult(node_id=node_id, score=score, matched=score > t_milestone)


def segment_vote(
    obs: ObservationDescriptors, target: np.ndarray, t_limited_control: float
) -> Action:
    """Raw per-cycle vote: the segment most similar to the target node image.

    Ties prefer Middle, then Left, then Right (forward progress first). When
    even the best segment falls at or below the control floor the vote is a
    counterclockwise search rotation.
    """
    s_left = cosine_similarity(obs.left, target)
    s_middle = cosine_similarity(obs.middle, target)
    s_right = cosine_similarity(obs.right, target)
    highest = max(s_middle, s_left, s_right)
    if highest <= t_limited_control:
        return Action.ROTATE_SEARCH
    if s_middle == highest:
        return Action.FORWARD
    if s_left == highest:
        return Action.LEFT
    return Action.RIGHT


def combine_cycles(first: Action, second: Action) -> Action:
    """Two-cycle arbitration: act only when both cycles agree, except that a
    Forward vote paired with a turn vote blends into a forward-turn."""
    if first == second:
        return first
    pair = {first, second}
    if pair == {Action.FORWARD, Action.LEFT}:
        return Action.FORWARD_LEFT
    if pair == {Action.FORWARD, Action.RIGHT}:
        return Action.FORWARD_RIGHT
    return Action.NO_ACTION


class Navigator:
    """Sequential navigation state over an immutable map.

    One Navigator per episode; the underlying map may be shared between any
    number of concurrent navigators.
    """

    def __init__(
        self,
        topo_map: TopologicalMap,
        plan: list[int],
        config: ThresholdConfig,
        low_confidence_budget: int = 10,
        reloc_failure_budget: int = 8,
    ):
        if not plan:
            raise ValueError("plan must contain at least one node")
        self.map = topo_map
        self.plan = list(plan)
        self.config = config
        self.low_confidence_budget = low_confidence_budget
        self.reloc_failure_budget = reloc_failure_budget
        self.seq_pos = 0
        self.phase = Phase.NAVIGATING
        self.pending_action: Action | None = None
        self.cycle_parity = 0
        self.low_confidence_steps = 0
        self.relocalization_count = 0
        self.failed_relocalizations = 0
        # The starting reference comes from a confirmed localization.
        self.ref_confirmed = True

    # -- motion control ----------------------------------------------------

    def select_action(self, obs: ObservationDescriptors, target: np.ndarray) -> Action:
        raw = segment_vote(obs, target, self.config.t_limited_control)
        if self.cycle_parity == 0:
            self.pending_action = raw
            self.cycle_parity = 1
            return Action.NO_ACTION
        decided = combine_cycles(self.pending_action, raw)
        self.pending_action = None
        self.cycle_parity = 0
        return decided

    # -- node selection ----------------------------------------------------

    def _window_positions(self) -> list[int]:
        lo = max(0, self.seq_pos - self.config.match_window_behind)
        hi = min(len(self.plan) - 1, self.seq_pos + self.config.match_window_ahead)
        return list(range(lo, hi + 1))

    def _similarity_to(self, obs: ObservationDescriptors, plan_pos: int) -> float:
        return cosine_similarity(obs.full, self.map.nodes[self.plan[plan_pos]].descriptor)

    def step(self, obs: ObservationDescriptors) -> StepOutcome:
        """Advance the node-selection state machine one observation."""
        if self.phase not in (Phase.NAVIGATING, Phase.RELOCALIZING):
            raise InvalidPhaseError(f"cannot step in phase {self.phase.value}")
        last = len(self.plan) - 1
        event = EVENT_NONE
        s_ref = self._similarity_to(obs, self.seq_pos)
        if s_ref > self.config.t_milestone:
            self.ref_confirmed = True

        # Reference switching: once a confirmed reference fades below the
        # change threshold the next node in the sequence takes over. An
        # unconfirmed reference never switches away; windowed relocalization
        # is the recovery path when tracking is lost.
        if s_ref < self.config.t_change_node and self.seq_pos < last and self.ref_confirmed:
            self.seq_pos += 1
            s_ref = self._similarity_to(obs, self.seq_pos)
            self.ref_confirmed = s_ref > self.config.t_milestone
            if self.ref_confirmed:
                event = EVENT_NODE_SWITCHED

        if self.seq_pos == last and s_ref > self.config.t_milestone:
            self.phase = Phase.REACHED
            return StepOutcome(Action.NO_ACTION, EVENT_GOAL_REACHED, self.seq_pos, s_ref)

        action: Action | None = None
        if s_ref <= self.config.t_milestone:
            self.low_confidence_steps += 1
            if self.low_confidence_steps > self.low_confidence_budget:
                # One relocalization attempt per burst; the counter resets so
                # rotation keeps sweeping between attempts.
                self.low_confidence_steps = 0
                positions = self._window_positions()
                result = localize(
                    obs.full,
                    self.map,
                    self.config.t_milestone,
                    restrict=[self.plan[p] for p in positions],
                )
                if result.matched:
                    self.seq_pos = self.plan.index(result.node_id)
                    self.relocalization_count += 1
                    self.failed_relocalizations = 0
                    self.phase = Phase.NAVIGATING
                    self.ref_confirmed = True
                    event = EVENT_RELOCALIZATION
                    s_ref = result.score
                else:
                    self.failed_relocalizations += 1
                    self.phase = Phase.RELOCALIZING
                    if self.failed_relocalizations >= self.reloc_failure_budget:
                        self.phase = Phase.FAILED
                        return StepOutcome(
                            Action.ROTATE_SEARCH, EVENT_LOCALIZATION_FAILED, self.seq_pos, s_ref
                        )
                    action = Action.ROTATE_SEARCH
        else:
            self.low_confidence_steps = 0
            self.failed_relocalizations = 0
            self.phase = Phase.NAVIGATING

        if action is None:
            # Steer toward the next node in the sequence.
            target = self.map.nodes[self.plan[min(self.seq_pos + 1, last)]].descriptor
            action = self.select_action(obs, target)
        return StepOutcome(action, event, self.seq_pos, s_ref)


def start_navigation(
    topo_map: TopologicalMap,
    goal: np.ndarray,
    initial_obs: np.ndarray,
    config: ThresholdConfig,
    low_confidence_budget: int = 10,
    reloc_failure_budget: int = 8,
) -> Navigator | NeedRotation:
    """Localize goal and current view, plan, and hand back a ready Navigator.

    Both localizations scan the whole map. An unlocatable goal raises
    GoalNotInMapError; an unlocatable current view returns NEED_ROTATION so
    the caller can rotate counterclockwise and try again.
    """
    if len(topo_map) == 0:
        raise EmptyCandidatesError("map has no nodes")
    goal_loc = localize(goal, topo_map, config.t_milestone)
    if not goal_loc.matched:
        raise GoalNotInMapError(
            f"goal localizes to node {goal_loc.node_id} at {goal_loc.score:.3f}, "
            f"below milestone {config.t_milestone}"
        )
    current_loc = localize(initial_obs, topo_map, config.t_milestone)
    if not current_loc.matched:
        return NEED_ROTATION
    plan, _ = topo_map.shortest_path(current_loc.node_id, goal_loc.node_id)
    return Navigator(
        topo_map,
        plan,
        config,
        low_confidence_budget=low_confidence_budget,
        reloc_failure_budget=reloc_failure_budget,
    )
