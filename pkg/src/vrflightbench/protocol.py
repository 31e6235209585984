"""Wire protocol: message schema, canonical JSON codec, and the session state machine.

One message per datagram or socket frame.  Payloads are canonical UTF-8 JSON
with fixed key order, so the same bytes travel over UDP (native clients) and
the message-framed socket transport (browser cockpit).  Floats are carried at
up to 9 significant digits; values already at wire precision round-trip
exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Optional, Union

from .sim import Vec3

PROTOCOL_VERSION = 1
MAX_ENCODED_SIZE = 1200

DATAGRAM_PORT = 47800
STREAM_PORT = 47801

EVENT_KINDS = ("trial_start", "trial_complete", "trial_failed", "collision", "checkpoint")
CONTROLLER_MODES = ("two_button", "one_handed")

# Phases of one client session.
IDLE = "idle"
CONFIGURED = "configured"
TRIAL_RUNNING = "trial_running"
TRIAL_DONE = "trial_done"


class ProtocolError(Exception):
    """Structured decode/encode failure; never lets malformed input crash the host."""

    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code
        self.detail = detail


@dataclass(frozen=True)
class RcCommand:
    seq: int
    t_ms: int
    vx: float
    vy: float
    vz: float
    yaw_rate: float = 0.0


@dataclass(frozen=True)
class SessionControl:
    action: str  # "start" | "stop"


@dataclass(frozen=True)
class ConfigUpdate:
    participant_id: str
    controller_mode: str
    plan_seed: int


@dataclass(frozen=True)
class StateUpdate:
    t_ms: int
    pos: Vec3
    vel: Vec3
    acc: Vec3
    collided: bool = False


@dataclass(frozen=True)
class EventNotice:
    kind: str
    t_ms: int
    payload: Optional[dict] = None


@dataclass(frozen=True)
class ErrorMessage:
    code: str
    text: str = ""


Message = Union[RcCommand, SessionControl, ConfigUpdate, StateUpdate, EventNotice, ErrorMessage]


def _wire_float(value: float, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProtocolError("invalid_message", f"{name} is not a number")
    value = float(value)
    if not math.isfinite(value):
        raise ProtocolError("invalid_message", f"{name} is not finite")
    if value == 0.0:
        return 0.0  # canonical zero: negative zero never hits the wire
    # Quantize to <= 9 significant decimal digits; repr of the result is the
    # shortest round-trippable form of the quantized value.
    return float(format(value, ".9g"))


def _wire_int(value: int, name: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ProtocolError("invalid_message", f"{name} is not an integer")
    if value < minimum:
        raise ProtocolError("invalid_message", f"{name} below {minimum}")
    return value


def encode(msg: Message) -> bytes:
    """Canonical bytes for one message; decode(encode(m)) == m at wire precision."""
    record: dict = {"v": PROTOCOL_VERSION}
    if isinstance(msg, RcCommand):
        record["type"] = "rc"
        record["seq"] = _wire_int(msg.seq, "seq")
        record["t_ms"] = _wire_int(msg.t_ms, "t_ms")
        for name in ("vx", "vy", "vz", "yaw_rate"):
            record[name] = _wire_float(getattr(msg, name), name)
    elif isinstance(msg, SessionControl):
        if msg.action not in ("start", "stop"):
            raise ProtocolError("invalid_message", f"bad session action {msg.action!r}")
        record["type"] = msg.action
    elif isinstance(msg, ConfigUpdate):
        if msg.controller_mode not in CONTROLLER_MODES:
            raise ProtocolError("invalid_message", f"bad controller_mode {msg.controller_mode!r}")
        record["type"] = "config"
        record["participant_id"] = str(msg.participant_id)
        record["controller_mode"] = msg.controller_mode
        record["plan_seed"] = _wire_int(msg.plan_seed, "plan_seed")
    elif isinstance(msg, StateUpdate):
        record["type"] = "state"
        record["t_ms"] = _wire_int(msg.t_ms, "t_ms")
        for prefix, vec in (("p", msg.pos), ("v", msg.vel), ("a", msg.acc)):
            for axis in "xyz":
                name = prefix + axis
                record[name] = _wire_float(getattr(vec, axis), name)
        record["collided"] = bool(msg.collided)
    elif isinstance(msg, EventNotice):
        if msg.kind not in EVENT_KINDS:
            raise ProtocolError("invalid_message", f"bad event kind {msg.kind!r}")
        record["type"] = "event"
        record["kind"] = msg.kind
        record["t_ms"] = _wire_int(msg.t_ms, "t_ms")
        record["payload"] = msg.payload
    elif isinstance(msg, ErrorMessage):
        record["type"] = "error"
        record["code"] = str(msg.code)
        record["text"] = str(msg.text)
    else:
        raise ProtocolError("invalid_message", f"not a protocol message: {type(msg).__name__}")

    data = json.dumps(record, separators=(",", ":"), allow_nan=False).encode("utf-8")
    if len(data) > MAX_ENCODED_SIZE:
        raise ProtocolError("oversize", f"{len(data)} bytes > {MAX_ENCODED_SIZE}")
    return data


def _reject_constant(token: str):
    raise ValueError(f"non-finite literal {token}")


_FIELDS = {
    "rc": {"seq", "t_ms", "vx", "vy", "vz", "yaw_rate"},
    "start": set(),
    "stop": set(),
    "config": {"participant_id", "controller_mode", "plan_seed"},
    "state": {"t_ms", "px", "py", "pz", "vx", "vy", "vz", "ax", "ay", "az", "collided"},
    "event": {"kind", "t_ms", "payload"},
    "error": {"code", "text"},
}


def _need(record: dict, name: str):
    if name not in record:
        raise ProtocolError("malformed_payload", f"missing field {name}")
    return record[name]


def _num(record: dict, name: str) -> float:
    value = _need(record, name)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProtocolError("malformed_payload", f"{name} is not a number")
    value = float(value)
    if not math.isfinite(value):
        raise ProtocolError("malformed_payload", f"{name} is not finite")
    return value


def _uint(record: dict, name: str) -> int:
    value = _need(record, name)
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ProtocolError("malformed_payload", f"{name} is not an unsigned integer")
    return value


def _text(record: dict, name: str) -> str:
    value = _need(record, name)
    if not isinstance(value, str):
        raise ProtocolError("malformed_payload", f"{name} is not a string")
    return value


def decode(data: bytes) -> Message:
    """Strict parse of one datagram/frame; raises ProtocolError, never crashes."""
    if len(data) > MAX_ENCODED_SIZE:
        raise ProtocolError("malformed_payload", "oversize datagram")
    try:
        record = json.loads(data.decode("utf-8"), parse_constant=_reject_constant)
    except (UnicodeDecodeError, ValueError) as exc:
        raise ProtocolError("malformed_payload", str(exc)) from None
    if not isinstance(record, dict):
        raise ProtocolError("malformed_payload", "not an object")

    if "v" not in record:
        raise ProtocolError("malformed_payload", "missing version")
    if record["v"] != PROTOCOL_VERSION:
        raise ProtocolError("version_mismatch", f"v={record['v']!r}")

    msg_type = record.get("type")
    if not isinstance(msg_type, str) or msg_type not in _FIELDS:
        raise ProtocolError("unknown_type", repr(msg_type))
    extras = set(record) - _FIELDS[msg_type] - {"v", "type"}
    if extras:
        raise ProtocolError("malformed_payload", f"unexpected fields {sorted(extras)}")

    if msg_type == "rc":
        return RcCommand(
            seq=_uint(record, "seq"),
            t_ms=_uint(record, "t_ms"),
            vx=_num(record, "vx"),
            vy=_num(record, "vy"),
            vz=_num(record, "vz"),
            yaw_rate=_num(record, "yaw_rate"),
        )
    if msg_type in ("start", "stop"):
        return SessionControl(action=msg_type)
    if msg_type == "config":
        mode = _text(record, "controller_mode")
        if mode not in CONTROLLER_MODES:
            raise ProtocolError("malformed_payload", f"bad controller_mode {mode!r}")
        return ConfigUpdate(
            participant_id=_text(record, "participant_id"),
            controller_mode=mode,
            plan_seed=_uint(record, "plan_seed"),
        )
    if msg_type == "state":
        collided = _need(record, "collided")
        if not isinstance(collided, bool):
            raise ProtocolError("malformed_payload", "collided is not a boolean")
        return StateUpdate(
            t_ms=_uint(record, "t_ms"),
            pos=Vec3(_num(record, "px"), _num(record, "py"), _num(record, "pz")),
            vel=Vec3(_num(record, "vx"), _num(record, "vy"), _num(record, "vz")),
            acc=Vec3(_num(record, "ax"), _num(record, "ay"), _num(record, "az")),
            collided=collided,
        )
    if msg_type == "event":
        kind = _text(record, "kind")
        if kind not in EVENT_KINDS:
            raise ProtocolError("malformed_payload", f"bad event kind {kind!r}")
        payload = _need(record, "payload")
        if payload is not None and not isinstance(payload, dict):
            raise ProtocolError("malformed_payload", "payload is not an object or null")
        return EventNotice(kind=kind, t_ms=_uint(record, "t_ms"), payload=payload)
    # error
    return ErrorMessage(code=_text(record, "code"), text=_text(record, "text"))


@dataclass(frozen=True)
class SessionState:
    phase: str = IDLE
    last_seq: int = 0


# Action verbs handed back to the hosting loop.
ARM_TRIAL = "arm_trial"
EMIT_TRIAL_START = "emit_trial_start"
EMIT_TRIAL_COMPLETE = "emit_trial_complete"
FORWARD_TO_SIM = "forward_to_sim"
CLOSE_TRIAL = "close_trial"
REPLY = "reply"
APPLY_CONFIG = "apply_config"

Action = tuple[str, Optional[Message]]


def transition(state: SessionState, msg: Message) -> tuple[SessionState, list[Action]]:
    """Session step: the trial lifecycle is config -> start -> rc* -> stop, repeat.

    Stale or duplicate rc sequence numbers are dropped silently; any message
    arriving in the wrong phase gets a bad_phase error reply and leaves the
    state untouched.  A trial_complete notice (injected by the runner when the
    target is reached) is broadcast without changing phase: the stop button
    still closes the trial.
    """
    bad_phase = [(REPLY, ErrorMessage(code="bad_phase", text=f"in phase {state.phase}"))]

    if isinstance(msg, ConfigUpdate):
        if state.phase != IDLE:
            return state, bad_phase
        return replace(state, phase=CONFIGURED), [(APPLY_CONFIG, msg)]

    if isinstance(msg, SessionControl) and msg.action == "start":
        if state.phase not in (CONFIGURED, TRIAL_DONE):
            return state, bad_phase
        return replace(state, phase=TRIAL_RUNNING, last_seq=0), [
            (ARM_TRIAL, None),
            (EMIT_TRIAL_START, None),
        ]

    if isinstance(msg, RcCommand):
        if state.phase != TRIAL_RUNNING:
            return state, bad_phase
        if msg.seq <= state.last_seq:
            return state, []  # stale or duplicate: dropped
        return replace(state, last_seq=msg.seq), [(FORWARD_TO_SIM, msg)]

    if isinstance(msg, SessionControl) and msg.action == "stop":
        if state.phase != TRIAL_RUNNING:
            return state, bad_phase
        return replace(state, phase=TRIAL_DONE), [(CLOSE_TRIAL, None)]

    if isinstance(msg, EventNotice) and msg.kind == "trial_complete":
        if state.phase != TRIAL_RUNNING:
            return state, bad_phase
        return state, [(EMIT_TRIAL_COMPLETE, None)]

    return state, bad_phase
