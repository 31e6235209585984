"""Live session server: datagram + websocket transports feeding one simulator loop.

Native clients speak the wire protocol over UDP; the browser cockpit connects
to a message-framed websocket carrying byte-identical payloads.  One session
at a time: config -> start -> rc stream -> stop, repeating down the trial plan
with the same rerun rule as the headless runner.
"""

from __future__ import annotations

import base64
import hashlib
import http.server
import logging
import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import partial
from pathlib import Path
from typing import Optional

from . import protocol as proto
from .logfile import Cmd, Event, Header, Sample, TrialLogWriter, condition_to_dict, trial_log_path
from .protocol import EventNotice, ProtocolError, SessionState, StateUpdate, transition
from .runner import OUTCOME_COMPLETE, PlanScheduler, SessionMeta
from .sim import (
    DroneState,
    EnvironmentParams,
    SimConfig,
    Vec3,
    WorldScene,
    ZERO,
    advance,
    check_crossing_trigger,
    check_landing,
)
from .tasks import KIND_CROSSING, TaskLayout, enumerate_conditions, instantiate_task, randomize_order

log = logging.getLogger("vrflightbench.server")

WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"
REMOTE_DECIMATION = 3  # broadcast every Nth tick to non-loopback peers


class WsConnection:
    """One accepted websocket client (RFC 6455, text frames, no extensions)."""

    def __init__(self, conn: socket.socket, addr):
        self.conn = conn
        self.addr = addr
        self.open = True
        self._send_lock = threading.Lock()

    def handshake(self) -> bool:
        data = b""
        self.conn.settimeout(5.0)
        while b"\r\n\r\n" not in data:
            chunk = self.conn.recv(2048)
            if not chunk or len(data) > 16384:
                return False
            data += chunk
        head = data.split(b"\r\n\r\n", 1)[0].decode("latin-1")
        headers = {}
        for line in head.split("\r\n")[1:]:
            if ":" in line:
                name, value = line.split(":", 1)
                headers[name.strip().lower()] = value.strip()
        key = headers.get("sec-websocket-key")
        if key is None or "websocket" not in headers.get("upgrade", "").lower():
            self.conn.sendall(b"HTTP/1.1 400 Bad Request\r\n\r\n")
            return False
        accept = base64.b64encode(hashlib.sha1((key + WS_GUID).encode()).digest()).decode()
        self.conn.sendall(
            (
                "HTTP/1.1 101 Switching Protocols\r\n"
                "Upgrade: websocket\r\n"
                "Connection: Upgrade\r\n"
                f"Sec-WebSocket-Accept: {accept}\r\n\r\n"
            ).encode("latin-1")
        )
        self.conn.settimeout(None)
        return True

    def _read_exact(self, n: int) -> Optional[bytes]:
        buf = b""
        while len(buf) < n:
            chunk = self.conn.recv(n - len(buf))
            if not chunk:
                return None
            buf += chunk
        return buf

    def recv_message(self) -> Optional[bytes]:
        """Next complete text/binary message payload, or None when closed."""
        fragments = b""
        while True:
            head = self._read_exact(2)
            if head is None:
                return None
            fin = head[0] & 0x80
            opcode = head[0] & 0x0F
            masked = head[1] & 0x80
            length = head[1] & 0x7F
            if length == 126:
                ext = self._read_exact(2)
                if ext is None:
                    return None
                length = struct.unpack(">H", ext)[0]
            elif length == 127:
                ext = self._read_exact(8)
                if ext is None:
                    return None
                length = struct.unpack(">Q", ext)[0]
            if length > 1 << 20:
                return None
            mask = self._read_exact(4) if masked else b"\x00\x00\x00\x00"
            if mask is None:
                return None
            payload = self._read_exact(length) if length else b""
            if payload is None:
                return None
            if masked:
                payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))

            if opcode == 0x8:  # close
                self.send_raw(0x8, b"")
                return None
            if opcode == 0x9:  # ping
                self.send_raw(0xA, payload)
                continue
            if opcode == 0xA:  # pong
                continue
            fragments += payload
            if fin:
                return fragments

    def send_raw(self, opcode: int, payload: bytes) -> None:
        header = bytes([0x80 | opcode])
        n = len(payload)
        if n < 126:
            header += bytes([n])
        elif n < 1 << 16:
            header += bytes([126]) + struct.pack(">H", n)
        else:
            header += bytes([127]) + struct.pack(">Q", n)
        with self._send_lock:
            self.conn.sendall(header + payload)

    def send_text(self, payload: bytes) -> None:
        try:
            self.send_raw(0x1, payload)
        except OSError:
            self.open = False

    def close(self) -> None:
        self.open = False
        try:
            self.conn.close()
        except OSError:
            pass


@dataclass
class _LiveTrial:
    entry: object
    attempt: int
    task: object
    writer: TrialLogWriter
    state: DroneState
    tick: int = 0
    held: Vec3 = ZERO
    pending: list = field(default_factory=list)
    outcome: Optional[str] = None  # set once the trial froze


class LiveServer:
    """Binds the transports and runs the 100 Hz session loop."""

    def __init__(
        self,
        udp_port: int = proto.DATAGRAM_PORT,
        ws_port: int = proto.STREAM_PORT,
        http_port: int = 47802,
        http_root: Optional[Path] = None,
        out_dir: Path = Path("runs"),
        kind: str = KIND_CROSSING,
        repetitions: int = 5,
        id_formulation: str = "welford_2d_over_w",
        sim_cfg: SimConfig = SimConfig(),
        env: EnvironmentParams = EnvironmentParams(),
        layout: TaskLayout = TaskLayout(),
        max_attempts: int = 3,
    ):
        self.sim_cfg = sim_cfg
        self.env = env
        self.layout = layout
        self.kind = kind
        self.repetitions = repetitions
        self.id_formulation = id_formulation
        self.out_dir = Path(out_dir)
        self.max_attempts = max_attempts

        self._stop = threading.Event()
        self._inbound: "queue.Queue[tuple[bytes, tuple]]" = queue.Queue()
        self._udp_peers: dict[tuple, bool] = {}  # addr -> is_loopback
        self._ws_clients: list[WsConnection] = []
        self._ws_lock = threading.Lock()
        self._threads: list[threading.Thread] = []

        self.session = SessionState()
        self._config: Optional[proto.ConfigUpdate] = None
        self._scheduler: Optional[PlanScheduler] = None
        self._plan = None
        self._trial: Optional[_LiveTrial] = None
        self._parked = DroneState(t=0.0, pos=layout.start_pos)
        self._tick_serial = 0

        try:
            self._udp = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            self._udp.bind(("0.0.0.0", udp_port))
        except OSError as exc:
            raise OSError(f"datagram port {udp_port} unavailable: {exc}") from exc
        self.udp_port = self._udp.getsockname()[1]

        try:
            self._ws_listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            self._ws_listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            self._ws_listener.bind(("0.0.0.0", ws_port))
            self._ws_listener.listen(8)
        except OSError as exc:
            self._udp.close()
            raise OSError(f"stream port {ws_port} unavailable: {exc}") from exc
        self.ws_port = self._ws_listener.getsockname()[1]

        self._httpd = None
        self.http_port = None
        if http_root is not None:
            handler = partial(_QuietHttpHandler, directory=str(http_root))
            try:
                self._httpd = http.server.ThreadingHTTPServer(("0.0.0.0", http_port), handler)
            except OSError as exc:
                self._udp.close()
                self._ws_listener.close()
                raise OSError(f"http port {http_port} unavailable: {exc}") from exc
            self.http_port = self._httpd.server_address[1]

    # -- transports ---------------------------------------------------------

    def _udp_reader(self) -> None:
        while not self._stop.is_set():
            try:
                data, addr = self._udp.recvfrom(2048)
            except OSError:
                return
            self._udp_peers.setdefault(addr, addr[0].startswith("127."))
            self._inbound.put((data, ("udp", addr)))

    def _ws_acceptor(self) -> None:
        while not self._stop.is_set():
            try:
                conn, addr = self._ws_listener.accept()
            except OSError:
                return
            client = WsConnection(conn, addr)
            thread = threading.Thread(target=self._ws_reader, args=(client,), daemon=True)
            thread.start()

    def _ws_reader(self, client: WsConnection) -> None:
        try:
            if not client.handshake():
                client.close()
                return
        except OSError:
            client.close()
            return
        with self._ws_lock:
            self._ws_clients.append(client)
        log.info("websocket client connected from %s", client.addr)
        while not self._stop.is_set():
            try:
                payload = client.recv_message()
            except OSError:
                break
            if payload is None:
                break
            self._inbound.put((payload, ("ws", client)))
        client.close()
        with self._ws_lock:
            if client in self._ws_clients:
                self._ws_clients.remove(client)
        log.info("websocket client disconnected")

    def _reply(self, origin, msg) -> None:
        data = proto.encode(msg)
        transport, target = origin
        if transport == "udp":
            self._udp.sendto(data, target)
        else:
            target.send_text(data)

    def _broadcast(self, msg, to_local: bool = True, to_remote: bool = True) -> None:
        # Loopback UDP peers count as local (full 100 Hz); websocket clients and
        # off-host UDP peers are remote (decimated state stream).
        data = proto.encode(msg)
        for addr, is_loopback in list(self._udp_peers.items()):
            if (is_loopback and to_local) or (not is_loopback and to_remote):
                try:
                    self._udp.sendto(data, addr)
                except OSError:
                    pass
        if to_remote:
            with self._ws_lock:
                clients = list(self._ws_clients)
            for client in clients:
                client.send_text(data)

    # -- session ------------------------------------------------------------

    def _announce(self, payload: dict) -> None:
        t_ms = self._trial.tick * self._ms_per_tick() if self._trial else 0
        self._broadcast(EventNotice(kind="checkpoint", t_ms=t_ms, payload=payload))

    def _ms_per_tick(self) -> int:
        return int(round(self.sim_cfg.dt * 1000.0))

    def _apply_config(self, cfg_msg: proto.ConfigUpdate) -> None:
        self._config = cfg_msg
        conditions = enumerate_conditions(self.kind, self.id_formulation)
        self._plan = randomize_order(
            conditions,
            repetitions=self.repetitions,
            seed=cfg_msg.plan_seed,
            participant_id=cfg_msg.participant_id,
        )
        self._scheduler = PlanScheduler(self._plan, max_attempts=self.max_attempts)
        log.info(
            "session configured: %s %s seed=%d (%d plan entries)",
            cfg_msg.participant_id, cfg_msg.controller_mode, cfg_msg.plan_seed,
            len(self._plan.entries),
        )
        scene = WorldScene()
        self._announce({
            "phase": "configured",
            "participant_id": cfg_msg.participant_id,
            "controller_mode": cfg_msg.controller_mode,
            "plan_seed": cfg_msg.plan_seed,
            "kind": self.kind,
            "entries": len(self._plan.entries),
            "scene": {
                "camera": list(scene.camera_pos.as_tuple()),
                "fov_deg": scene.camera_fov_deg,
                "landmarks": [
                    {"shape": shape, "pos": list(pos.as_tuple())}
                    for shape, pos in scene.landmarks
                ],
            },
        })

    def _arm_trial(self) -> bool:
        slot = self._scheduler.next() if self._scheduler else None
        if slot is None:
            self.session = SessionState(phase=proto.TRIAL_DONE, last_seq=0)
            self._announce({"phase": "plan_complete"})
            return False
        entry, attempt = slot
        task = instantiate_task(entry.condition, self.layout)
        meta = SessionMeta(
            participant_id=self._plan.participant_id,
            controller_mode=entry.mode,
            plan_seed=self._plan.seed,
            created_at=datetime.now(timezone.utc).isoformat(),
            environment=self.env,
            sim_config=self.sim_cfg,
            layout=self.layout,
        )
        header = Header(
            session=meta.to_dict(),
            plan=self._plan.describe(),
            condition=condition_to_dict(entry.condition),
            trial_index=entry.trial_index,
            controller_mode=entry.mode,
        )
        path = trial_log_path(
            self.out_dir, self._plan.participant_id, entry.condition, entry.mode,
            entry.trial_index, attempt,
        )
        writer = TrialLogWriter(path, header)
        state = DroneState(t=0.0, pos=task.start_pos)
        writer.append(Event(tick=0, kind="trial_start", payload=None))
        writer.append(Sample(tick=0, pos=state.pos, vel=state.vel, acc=state.acc))
        self._trial = _LiveTrial(entry=entry, attempt=attempt, task=task, writer=writer, state=state)
        log.info("trial armed: %s %s attempt %d -> %s",
                 entry.condition.label(), entry.mode, attempt, path)
        condition = entry.condition
        self._broadcast(EventNotice(kind="trial_start", t_ms=0, payload={
            "kind": condition.kind,
            "D": condition.distance,
            "W": condition.width,
            "id": condition.id_value,
            "trial_index": entry.trial_index,
            "mode": entry.mode,
            "start": list(task.start_pos.as_tuple()),
            "target": list(task.target_center.as_tuple()),
        }))
        return True

    def _close_trial(self) -> None:
        trial = self._trial
        if trial is None:
            return
        if trial.outcome is None:
            trial.outcome = "aborted"
            trial.writer.append(Event(tick=trial.tick, kind="aborted", payload=None))
        trial.writer.finalize()
        self._scheduler.report(
            OUTCOME_COMPLETE if trial.outcome == "trial_complete" else trial.outcome
        )
        self._parked = trial.state
        log.info("trial closed: %s", trial.outcome)
        self._announce({"phase": "trial_done", "outcome": trial.outcome})
        self._trial = None

    def _handle_message(self, data: bytes, origin) -> None:
        try:
            msg = proto.decode(data)
        except ProtocolError as exc:
            self._reply(origin, proto.ErrorMessage(code=exc.code, text=exc.detail[:120]))
            return
        self.session, actions = transition(self.session, msg)
        for verb, payload in actions:
            if verb == proto.APPLY_CONFIG:
                self._apply_config(payload)
            elif verb == proto.ARM_TRIAL:
                self._arm_trial()
            elif verb == proto.EMIT_TRIAL_START:
                pass  # broadcast happens inside _arm_trial with the geometry payload
            elif verb == proto.FORWARD_TO_SIM:
                if self._trial is not None and self._trial.outcome is None:
                    self._trial.pending.append(payload)
            elif verb == proto.CLOSE_TRIAL:
                self._close_trial()
            elif verb == proto.REPLY:
                self._reply(origin, payload)

    def _tick_trial(self) -> None:
        trial = self._trial
        if trial is None or trial.outcome is not None:
            return
        trial.tick += 1
        tick = trial.tick
        for rc in trial.pending:
            trial.writer.append(
                Cmd(tick=tick, seq=rc.seq, vx=rc.vx, vy=rc.vy, vz=rc.vz, yaw_rate=rc.yaw_rate)
            )
            trial.held = Vec3(rc.vx, rc.vy, rc.vz)
        trial.pending.clear()

        prev = trial.state
        state, contact = advance(prev, trial.held, trial.task, self.env, self.sim_cfg)
        trial.state = state
        trial.writer.append(Sample(tick=tick, pos=state.pos, vel=state.vel, acc=state.acc,
                                   collided=state.collided))
        if contact is not None:
            trial.writer.append(Event(tick=tick, kind="collision",
                                      payload={"px": contact.x, "py": contact.y, "pz": contact.z}))
            trial.writer.append(Event(tick=tick, kind="trial_failed", payload=None))
            trial.outcome = "trial_failed"
            t_ms = tick * self._ms_per_tick()
            self._broadcast(EventNotice(kind="collision", t_ms=t_ms,
                                        payload={"px": contact.x, "py": contact.y, "pz": contact.z}))
            self._broadcast(EventNotice(kind="trial_failed", t_ms=t_ms, payload=None))
            return
        if trial.task.condition.kind == KIND_CROSSING:
            done = check_crossing_trigger(prev, state, trial.task, self.sim_cfg)
        else:
            done = check_landing(state, trial.task, self.sim_cfg)
        if done:
            trial.writer.append(Event(tick=tick, kind="trial_complete", payload=None))
            trial.outcome = "trial_complete"
            self.session, actions = transition(
                self.session,
                EventNotice(kind="trial_complete", t_ms=tick * self._ms_per_tick()),
            )
            for verb, _ in actions:
                if verb == proto.EMIT_TRIAL_COMPLETE:
                    self._broadcast(EventNotice(
                        kind="trial_complete",
                        t_ms=tick * self._ms_per_tick(),
                        payload={"completion_time": tick * self.sim_cfg.dt},
                    ))

    def _current_state(self) -> tuple[int, DroneState]:
        if self._trial is not None:
            return self._trial.tick, self._trial.state
        return 0, self._parked

    def _sim_loop(self) -> None:
        next_deadline = time.monotonic()
        while not self._stop.is_set():
            while True:
                try:
                    data, origin = self._inbound.get_nowait()
                except queue.Empty:
                    break
                self._handle_message(data, origin)

            self._tick_trial()
            self._tick_serial += 1
            tick, state = self._current_state()
            update = StateUpdate(
                t_ms=tick * self._ms_per_tick(),
                pos=state.pos, vel=state.vel, acc=state.acc, collided=state.collided,
            )
            self._broadcast(
                update,
                to_local=True,
                to_remote=self._tick_serial % REMOTE_DECIMATION == 0,
            )

            next_deadline += self.sim_cfg.dt
            delay = next_deadline - time.monotonic()
            if delay > 0:
                self._stop.wait(delay)
            else:  # fell behind: resync rather than burst
                next_deadline = time.monotonic()

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> None:
        self._threads = [
            threading.Thread(target=self._udp_reader, daemon=True),
            threading.Thread(target=self._ws_acceptor, daemon=True),
            threading.Thread(target=self._sim_loop, daemon=True),
        ]
        if self._httpd is not None:
            self._threads.append(threading.Thread(target=self._httpd.serve_forever, daemon=True))
        for thread in self._threads:
            thread.start()

    def serve_forever(self) -> None:
        self.start()
        try:
            while not self._stop.is_set():
                time.sleep(0.2)
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    def stop(self) -> None:
        self._stop.set()
        if self._trial is not None:
            self._close_trial()
        self._udp.close()
        self._ws_listener.close()
        if self._httpd is not None:
            self._httpd.shutdown()
        with self._ws_lock:
            for client in self._ws_clients:
                client.close()


class _QuietHttpHandler(http.server.SimpleHTTPRequestHandler):
    def log_message(self, fmt, *args):
        log.debug("http: " + fmt, *args)
