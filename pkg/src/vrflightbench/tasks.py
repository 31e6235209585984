"""Task conditions, difficulty indices, world placement, and randomized trial plans."""

from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass, field

from .sim import Vec3

KIND_POINTING = "pointing"
KIND_CROSSING = "crossing"
KINDS = (KIND_POINTING, KIND_CROSSING)

MODE_TWO_BUTTON = "two_button"
MODE_ONE_HANDED = "one_handed"
MODES = (MODE_TWO_BUTTON, MODE_ONE_HANDED)

WELFORD = "welford_2d_over_w"
SHANNON = "shannon"
FORMULATIONS = (WELFORD, SHANNON)

# Study grid: three target sizes by two flying distances per operation kind.
POINTING_DISTANCES = (2.0, 4.0)
POINTING_WIDTHS = (0.4, 0.7, 1.1)
CROSSING_DISTANCES = (2.5, 3.5)
CROSSING_WIDTHS = (0.3, 0.4, 0.5)

PARTICIPANT_RE = re.compile(r"P[0-9]+")


def difficulty_index(distance: float, width: float, formulation: str = WELFORD) -> float:
    """Task difficulty in bits: log2(2D/W), or log2(D/W + 1) in the Shannon form."""
    if not (distance > 0.0 and width > 0.0):
        raise ValueError("distance and width must be positive")
    if formulation == WELFORD:
        return math.log2(2.0 * distance / width)
    if formulation == SHANNON:
        return math.log2(distance / width + 1.0)
    raise ValueError(f"unknown difficulty formulation {formulation!r}")


@dataclass(frozen=True)
class TaskCondition:
    kind: str
    distance: float  # D, m
    width: float     # W, m
    id_value: float  # bits
    id_formulation: str = WELFORD

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}")
        expected = difficulty_index(self.distance, self.width, self.id_formulation)
        if not math.isclose(self.id_value, expected, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError(
                f"id_value {self.id_value} does not match {self.id_formulation} "
                f"for D={self.distance}, W={self.width} (expected {expected})"
            )

    def label(self) -> str:
        return f"{self.kind}-D{self.distance:g}-W{self.width:g}"


def make_condition(kind: str, distance: float, width: float, formulation: str = WELFORD) -> TaskCondition:
    return TaskCondition(kind, distance, width, difficulty_index(distance, width, formulation), formulation)


def enumerate_conditions(kind: str, formulation: str = WELFORD) -> list[TaskCondition]:
    """The six study conditions of one kind, ascending by difficulty."""
    if kind == KIND_POINTING:
        distances, widths = POINTING_DISTANCES, POINTING_WIDTHS
    elif kind == KIND_CROSSING:
        distances, widths = CROSSING_DISTANCES, CROSSING_WIDTHS
    else:
        raise ValueError(f"unknown task kind {kind!r}")
    conditions = [
        TaskCondition(kind, d, w, difficulty_index(d, w, formulation), formulation)
        for d in distances
        for w in widths
    ]
    conditions.sort(key=lambda c: c.id_value)
    return conditions


@dataclass(frozen=True)
class TaskLayout:
    """Where tasks sit in the world: spawn point and crossing-frame height."""

    start_pos: Vec3 = Vec3(1.0, 0.0, 0.0)
    frame_height: float = 1.5


@dataclass(frozen=True)
class TaskInstance:
    condition: TaskCondition
    start_pos: Vec3
    target_center: Vec3

    @property
    def width(self) -> float:
        return self.condition.width


def instantiate_task(condition: TaskCondition, layout: TaskLayout = TaskLayout()) -> TaskInstance:
    """Place a condition in the world: approach along +x from the fixed spawn.

    Pointing plates lie on the ground at the target distance; crossing frames
    hang opening-first at the configured height.
    """
    start = layout.start_pos
    if condition.kind == KIND_POINTING:
        center = Vec3(start.x + condition.distance, start.y, 0.0)
    else:
        center = Vec3(start.x + condition.distance, start.y, layout.frame_height)
    return TaskInstance(condition=condition, start_pos=start, target_center=center)


@dataclass(frozen=True)
class PlanEntry:
    condition: TaskCondition
    trial_index: int  # 1-based repetition within the (mode, condition) pair
    mode: str


@dataclass(frozen=True)
class TrialPlan:
    participant_id: str
    seed: int
    entries: tuple[PlanEntry, ...] = field(default_factory=tuple)

    def describe(self) -> dict:
        first = self.entries[0] if self.entries else None
        return {
            "participant_id": self.participant_id,
            "seed": self.seed,
            "kind": first.condition.kind if first else None,
            "id_formulation": first.condition.id_formulation if first else None,
            "repetitions": max((e.trial_index for e in self.entries), default=0),
            "entries": len(self.entries),
        }


def randomize_order(
    conditions: list[TaskCondition],
    modes: tuple[str, ...] = MODES,
    repetitions: int = 5,
    seed: int = 0,
    participant_id: str = "P00",
) -> TrialPlan:
    """Seeded trial schedule: counterbalanced mode blocks, shuffled conditions.

    The seed's parity picks which controller mode goes first, so half of all
    seeds lead with each mode; within a mode block the condition order is a
    seeded shuffle and each condition repeats `repetitions` times in a row.
    """
    if not conditions:
        raise ValueError("condition list is empty")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if not PARTICIPANT_RE.fullmatch(participant_id):
        raise ValueError(f"participant_id {participant_id!r} must match P[0-9]+")

    mode_order = list(modes) if seed % 2 == 0 else list(reversed(modes))
    rng = random.Random(seed)
    entries: list[PlanEntry] = []
    for mode in mode_order:
        block = list(conditions)
        rng.shuffle(block)
        for condition in block:
            for trial in range(1, repetitions + 1):
                entries.append(PlanEntry(condition=condition, trial_index=trial, mode=mode))
    return TrialPlan(participant_id=participant_id, seed=seed, entries=tuple(entries))
