"""Append-only trial logs and exact replay.

One JSON record per line using the wire-protocol field vocabulary plus a tick
index.  Floats are written as their shortest round-trippable decimal, so a
parsed record is numerically identical to the one written, and feeding the
reconstructed command sequence back through the simulator regenerates every
sample bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .sim import DroneState, EnvironmentParams, SimConfig, Vec3, ZERO, advance
from .tasks import TaskCondition, TaskInstance, TaskLayout, difficulty_index, instantiate_task


class LogFormatError(ValueError):
    """The log on disk is structurally invalid (beyond a torn final line)."""


@dataclass(frozen=True)
class Header:
    session: dict
    plan: dict
    condition: dict
    trial_index: int
    controller_mode: str


@dataclass(frozen=True)
class Cmd:
    tick: int
    seq: int
    vx: float
    vy: float
    vz: float
    yaw_rate: float = 0.0


@dataclass(frozen=True)
class Sample:
    tick: int
    pos: Vec3
    vel: Vec3
    acc: Vec3
    collided: bool = False


@dataclass(frozen=True)
class Event:
    tick: int
    kind: str
    payload: Optional[dict] = None


LogRecord = Union[Header, Cmd, Sample, Event]


def condition_to_dict(condition: TaskCondition) -> dict:
    return {
        "kind": condition.kind,
        "D": condition.distance,
        "W": condition.width,
        "id": condition.id_value,
        "id_formulation": condition.id_formulation,
    }


def condition_from_dict(data: dict) -> TaskCondition:
    return TaskCondition(
        kind=data["kind"],
        distance=data["D"],
        width=data["W"],
        id_value=data.get("id", difficulty_index(data["D"], data["W"], data["id_formulation"])),
        id_formulation=data["id_formulation"],
    )


def _record_to_json(record: LogRecord) -> dict:
    if isinstance(record, Header):
        return {
            "type": "header",
            "session": record.session,
            "plan": record.plan,
            "condition": record.condition,
            "trial_index": record.trial_index,
            "controller_mode": record.controller_mode,
        }
    if isinstance(record, Cmd):
        return {
            "type": "cmd",
            "tick": record.tick,
            "seq": record.seq,
            "vx": record.vx,
            "vy": record.vy,
            "vz": record.vz,
            "yaw_rate": record.yaw_rate,
        }
    if isinstance(record, Sample):
        out = {"type": "sample", "tick": record.tick}
        for prefix, vec in (("p", record.pos), ("v", record.vel), ("a", record.acc)):
            for axis in "xyz":
                out[prefix + axis] = getattr(vec, axis)
        out["collided"] = record.collided
        return out
    if isinstance(record, Event):
        return {"type": "event", "tick": record.tick, "kind": record.kind, "payload": record.payload}
    raise TypeError(f"not a log record: {type(record).__name__}")


def _record_from_json(data: dict) -> LogRecord:
    kind = data.get("type")
    if kind == "header":
        return Header(
            session=data["session"],
            plan=data["plan"],
            condition=data["condition"],
            trial_index=data["trial_index"],
            controller_mode=data["controller_mode"],
        )
    if kind == "cmd":
        return Cmd(
            tick=data["tick"],
            seq=data["seq"],
            vx=data["vx"],
            vy=data["vy"],
            vz=data["vz"],
            yaw_rate=data["yaw_rate"],
        )
    if kind == "sample":
        return Sample(
            tick=data["tick"],
            pos=Vec3(data["px"], data["py"], data["pz"]),
            vel=Vec3(data["vx"], data["vy"], data["vz"]),
            acc=Vec3(data["ax"], data["ay"], data["az"]),
            collided=data["collided"],
        )
    if kind == "event":
        return Event(tick=data["tick"], kind=data["kind"], payload=data.get("payload"))
    raise LogFormatError(f"unknown record type {kind!r}")


class TrialLogWriter:
    """Single-writer, append-only log for one trial.

    Records are flushed as they arrive so a crash leaves at most one torn
    final line, which the reader truncates away.
    """

    def __init__(self, path: Path, header: Header):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", encoding="utf-8")
        self._last_tick = 0
        self._last_sample_tick: Optional[int] = None
        self._write(header)

    def append(self, record: LogRecord) -> None:
        if self._fh is None:
            raise LogFormatError("writer already finalized")
        if isinstance(record, Header):
            raise LogFormatError("header must be the first record")
        if record.tick < self._last_tick:
            raise LogFormatError(
                f"tick regression: {record.tick} after {self._last_tick}"
            )
        if isinstance(record, Sample):
            if self._last_sample_tick is not None and record.tick != self._last_sample_tick + 1:
                raise LogFormatError(
                    f"sample tick {record.tick} does not follow {self._last_sample_tick}"
                )
            self._last_sample_tick = record.tick
        self._last_tick = record.tick
        self._write(record)

    def _write(self, record: LogRecord) -> None:
        self._fh.write(json.dumps(_record_to_json(record), separators=(",", ":"), allow_nan=False))
        self._fh.write("\n")
        self._fh.flush()

    def finalize(self) -> Path:
        if self._fh is not None:
            self._fh.close()
            self._fh = None
        return self.path

    def __enter__(self) -> "TrialLogWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.finalize()


@dataclass
class TrialLog:
    path: Path
    header: Header
    cmds: list[Cmd] = field(default_factory=list)
    samples: list[Sample] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)
    truncated: bool = False

    @property
    def records(self) -> list[LogRecord]:
        merged: list[LogRecord] = [self.header]
        merged.extend(sorted(self.cmds + self.samples + self.events, key=lambda r: r.tick))
        return merged

    def outcome(self) -> Optional[str]:
        """Final trial event kind, if the log was closed: trial_complete,
        trial_failed, or aborted."""
        for event in reversed(self.events):
            if event.kind in ("trial_complete", "trial_failed", "aborted"):
                return event.kind
        return None

    def end_tick(self) -> int:
        return self.samples[-1].tick if self.samples else 0


def read_log(path: Path) -> TrialLog:
    """Parse a trial log, recovering all complete records of a torn file."""
    path = Path(path)
    raw = path.read_bytes()
    lines = raw.split(b"\n")
    trailing = lines.pop() if lines else b""
    truncated = trailing != b""  # no newline after the final record

    parsed: list[LogRecord] = []
    for index, line in enumerate(lines):
        if line == b"":
            continue
        try:
            parsed.append(_record_from_json(json.loads(line.decode("utf-8"))))
        except (ValueError, KeyError) as exc:
            if index == len(lines) - 1:
                truncated = True  # torn write mid-line plus a stray newline
                break
            raise LogFormatError(f"{path}: bad record on line {index + 1}: {exc}") from None

    if not parsed or not isinstance(parsed[0], Header):
        raise LogFormatError(f"{path}: missing header record")
    log = TrialLog(path=path, header=parsed[0], truncated=truncated)
    for record in parsed[1:]:
        if isinstance(record, Cmd):
            log.cmds.append(record)
        elif isinstance(record, Sample):
            log.samples.append(record)
        elif isinstance(record, Event):
            log.events.append(record)
        else:
            raise LogFormatError(f"{path}: duplicate header record")
    return log


def _session_configs(header: Header) -> tuple[SimConfig, EnvironmentParams, TaskLayout]:
    session = header.session
    cfg = SimConfig(**session["sim_config"])
    env_data = session["environment"]
    env = EnvironmentParams(wind=Vec3(*env_data["wind"]), weather_tag=env_data["weather_tag"])
    layout_data = session["layout"]
    layout = TaskLayout(start_pos=Vec3(*layout_data["start"]), frame_height=layout_data["frame_height"])
    return cfg, env, layout


def task_from_header(header: Header) -> TaskInstance:
    _, _, layout = _session_configs(header)
    return instantiate_task(condition_from_dict(header.condition), layout)


def replay_commands(log: TrialLog) -> list[Vec3]:
    """Commanded velocity applied at every tick 1..N.

    The setpoint holds until replaced: each tick uses the last command at or
    before it, zero before the first.
    """
    n_ticks = log.end_tick()
    held = ZERO
    by_tick: dict[int, Vec3] = {}
    for cmd in log.cmds:  # already in append order; later cmds at a tick win
        by_tick[cmd.tick] = Vec3(cmd.vx, cmd.vy, cmd.vz)
        if cmd.tick <= 0:
            held = by_tick[cmd.tick]  # applies from the first step onwards
    sequence = []
    for tick in range(1, n_ticks + 1):
        if tick in by_tick:
            held = by_tick[tick]
        sequence.append(held)
    return sequence


def replay(log: TrialLog) -> tuple[DroneState, list[DroneState]]:
    """Regenerate the full state trajectory from the header and command records."""
    cfg, env, layout = _session_configs(log.header)
    task = task_from_header(log.header)
    state = DroneState(t=0.0, pos=layout.start_pos, vel=ZERO, acc=ZERO)
    out = [state]
    for cmd in replay_commands(log):
        state, _ = advance(state, cmd, task, env, cfg)
        out.append(state)
    return out[0], out[1:]


def _sample_matches(sample: Sample, state: DroneState) -> bool:
    return (
        sample.pos == state.pos
        and sample.vel == state.vel
        and sample.acc == state.acc
        and sample.collided == state.collided
    )


def verify_replay(log: TrialLog) -> Optional[int]:
    """Bitwise replay check: None if every sample regenerates exactly, else
    the first divergent tick."""
    initial, states = replay(log)
    regenerated = [initial] + states
    if len(log.samples) != len(regenerated):
        return min(len(log.samples), len(regenerated))
    for sample, state in zip(log.samples, regenerated):
        if not _sample_matches(sample, state):
            return sample.tick
    return None


def trial_log_path(
    out_dir: Path,
    participant_id: str,
    condition: TaskCondition,
    mode: str,
    trial_index: int,
    attempt: int = 1,
) -> Path:
    """Per-trial file under the participant directory, named by the testing
    conditions; rerun attempts get an -r suffix so nothing is overwritten."""
    name = f"{condition.kind}-{mode}-D{condition.distance:g}-W{condition.width:g}-t{trial_index}"
    if attempt > 1:
        name += f"-r{attempt}"
    return Path(out_dir) / participant_id / f"{name}.log"


def find_logs(root: Path) -> list[Path]:
    root = Path(root)
    if root.is_file():
        return [root]
    return sorted(root.rglob("*.log"))
