"""Session orchestration: arm trials from a plan, tick the simulator from a
command source, evaluate completion and failure, and apply the rerun rule."""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Protocol, Union

from .controllers import BotGains, BotPilot
from .logfile import (
    Cmd,
    Event,
    Header,
    Sample,
    TrialLogWriter,
    condition_to_dict,
    trial_log_path,
)
from .protocol import RcCommand
from .sim import DroneState, EnvironmentParams, SimConfig, Vec3, ZERO, advance, check_crossing_trigger, check_landing
from .tasks import KIND_CROSSING, TaskInstance, TaskLayout, TrialPlan, instantiate_task

OUTCOME_COMPLETE = "complete"
OUTCOME_FAILED_COLLISION = "failed_collision"
OUTCOME_ABORTED = "aborted"

PARTICIPANT_RE = re.compile(r"P[0-9]+")

# Sentinels a command source may return instead of commands.
STOP = object()          # operator pressed stop: abort the trial
SOURCE_CLOSED = object()  # source went away mid-trial


class CommandSource(Protocol):
    def begin_trial(self, task: TaskInstance) -> None: ...

    def poll(self, state: DroneState, tick: int) -> Union[list[RcCommand], object]:
        """Commands taking effect at this tick; STOP or SOURCE_CLOSED to end."""
        ...


@dataclass(frozen=True)
class SessionMeta:
    participant_id: str
    controller_mode: str
    plan_seed: int
    created_at: str
    environment: EnvironmentParams = EnvironmentParams()
    sim_config: SimConfig = SimConfig()
    layout: TaskLayout = TaskLayout()

    def __post_init__(self) -> None:
        if not PARTICIPANT_RE.fullmatch(self.participant_id):
            raise ValueError(f"participant_id {self.participant_id!r} must match P[0-9]+")

    def to_dict(self) -> dict:
        return {
            "participant_id": self.participant_id,
            "controller_mode": self.controller_mode,
            "plan_seed": self.plan_seed,
            "created_at": self.created_at,
            "environment": {
                "wind": list(self.environment.wind.as_tuple()),
                "weather_tag": self.environment.weather_tag,
            },
            "sim_config": dataclasses.asdict(self.sim_config),
            "layout": {
                "start": list(self.layout.start_pos.as_tuple()),
                "frame_height": self.layout.frame_height,
            },
        }


@dataclass(frozen=True)
class TrialResult:
    condition: "object"
    trial_index: int
    mode: str
    outcome: str
    completion_time: Optional[float] = None
    log_path: Optional[Path] = None
    attempt: int = 1


class BotSource:
    """Command source backed by the deterministic bot pilot, one command per tick."""

    def __init__(self, gains: BotGains = BotGains(), s_max: float = 2.0, dt: float = 0.01):
        self.gains = gains
        self.s_max = s_max
        self.dt = dt
        self._pilot: Optional[BotPilot] = None
        self._seq = 0

    def begin_trial(self, task: TaskInstance) -> None:
        self._pilot = BotPilot(task, self.gains, self.s_max)
        self._seq = 0

    def poll(self, state: DroneState, tick: int):
        cmd = self._pilot.step(state)
        self._seq += 1
        return [
            RcCommand(
                seq=self._seq,
                t_ms=int(round(tick * self.dt * 1000.0)),
                vx=cmd.x,
                vy=cmd.y,
                vz=cmd.z,
            )
        ]


def run_trial(
    task: TaskInstance,
    source: CommandSource,
    sim_cfg: SimConfig = SimConfig(),
    env: EnvironmentParams = EnvironmentParams(),
    writer: Optional[TrialLogWriter] = None,
    trial_index: int = 1,
    mode: str = "two_button",
    max_sim_seconds: float = 120.0,
    attempt: int = 1,
) -> TrialResult:
    """Run one trial to completion, failure, or abort.

    The drone resets to the task start; each tick polls the source, applies
    the last setpoint, steps the simulator, logs one sample, and evaluates the
    completion and collision predicates.  The trial clock starts at the arm,
    so completion time is exactly trigger tick times dt.
    """
    source.begin_trial(task)
    state = DroneState(t=0.0, pos=task.start_pos, vel=ZERO, acc=ZERO)

    def log(record):
        if writer is not None:
            writer.append(record)

    log(Event(tick=0, kind="trial_start", payload=None))
    log(_sample_record(0, state))

    held = ZERO
    outcome = OUTCOME_ABORTED
    completion_time: Optional[float] = None
    max_ticks = int(round(max_sim_seconds / sim_cfg.dt))

    tick = 0
    for tick in range(1, max_ticks + 1):
        polled = source.poll(state, tick)
        if polled is STOP or polled is SOURCE_CLOSED:
            log(Event(tick=tick - 1, kind="aborted", payload=None))
            outcome = OUTCOME_ABORTED
            break
        for rc in polled:
            log(Cmd(tick=tick, seq=rc.seq, vx=rc.vx, vy=rc.vy, vz=rc.vz, yaw_rate=rc.yaw_rate))
            held = Vec3(rc.vx, rc.vy, rc.vz)

        prev = state
        state, contact = advance(prev, held, task, env, sim_cfg)
        log(_sample_record(tick, state))

        if contact is not None:
            log(Event(tick=tick, kind="collision",
                      payload={"px": contact.x, "py": contact.y, "pz": contact.z}))
            log(Event(tick=tick, kind="trial_failed", payload=None))
            outcome = OUTCOME_FAILED_COLLISION
            break
        if task.condition.kind == KIND_CROSSING:
            done = check_crossing_trigger(prev, state, task, sim_cfg)
        else:
            done = check_landing(state, task, sim_cfg)
        if done:
            log(Event(tick=tick, kind="trial_complete", payload=None))
            outcome = OUTCOME_COMPLETE
            completion_time = tick * sim_cfg.dt
            break
    else:
        log(Event(tick=max_ticks, kind="aborted", payload=None))

    log_path = writer.finalize() if writer is not None else None
    return TrialResult(
        condition=task.condition,
        trial_index=trial_index,
        mode=mode,
        outcome=outcome,
        completion_time=completion_time,
        log_path=log_path,
        attempt=attempt,
    )


def _sample_record(tick: int, state: DroneState) -> Sample:
    return Sample(tick=tick, pos=state.pos, vel=state.vel, acc=state.acc, collided=state.collided)


class PlanScheduler:
    """Walks plan entries in order, re-queuing failed entries immediately.

    An entry that keeps failing is abandoned after `max_attempts` runs and
    recorded as unresolved; the session continues with the next entry.
    """

    def __init__(self, plan: TrialPlan, max_attempts: int = 3):
        self._entries = list(plan.entries)
        self._index = 0
        self._attempt = 1
        self.max_attempts = max_attempts
        self.unresolved: list = []

    def next(self):
        if self._index >= len(self._entries):
            return None
        return self._entries[self._index], self._attempt

    def report(self, outcome: str) -> None:
        if outcome == OUTCOME_COMPLETE:
            self._index += 1
            self._attempt = 1
        elif self._attempt >= self.max_attempts:
            self.unresolved.append(self._entries[self._index])
            self._index += 1
            self._attempt = 1
        else:
            self._attempt += 1


def run_session(
    plan: TrialPlan,
    source_factory: Callable[[TaskInstance, str], CommandSource],
    sim_cfg: SimConfig = SimConfig(),
    env: EnvironmentParams = EnvironmentParams(),
    layout: TaskLayout = TaskLayout(),
    out_dir: Optional[Path] = None,
    created_at: str = "1970-01-01T00:00:00Z",
    max_attempts: int = 3,
    max_sim_seconds: float = 120.0,
) -> list[TrialResult]:
    """Execute a whole trial plan, logging one file per run under out_dir.

    Failed and aborted runs stay on disk (flagged by their closing event) and
    the entry reruns immediately; analysis excludes them by default.
    """
    scheduler = PlanScheduler(plan, max_attempts=max_attempts)
    results: list[TrialResult] = []
    while True:
        slot = scheduler.next()
        if slot is None:
            break
        entry, attempt = slot
        task = instantiate_task(entry.condition, layout)
        writer = None
        if out_dir is not None:
            meta = SessionMeta(
                participant_id=plan.participant_id,
                controller_mode=entry.mode,
                plan_seed=plan.seed,
                created_at=created_at,
                environment=env,
                sim_config=sim_cfg,
                layout=layout,
            )
            header = Header(
                session=meta.to_dict(),
                plan=plan.describe(),
                condition=condition_to_dict(entry.condition),
                trial_index=entry.trial_index,
                controller_mode=entry.mode,
            )
            path = trial_log_path(
                out_dir, plan.participant_id, entry.condition, entry.mode, entry.trial_index, attempt
            )
            writer = TrialLogWriter(path, header)
        result = run_trial(
            task,
            source_factory(task, entry.mode),
            sim_cfg=sim_cfg,
            env=env,
            writer=writer,
            trial_index=entry.trial_index,
            mode=entry.mode,
            max_sim_seconds=max_sim_seconds,
            attempt=attempt,
        )
        results.append(result)
        scheduler.report(result.outcome)
    return results
