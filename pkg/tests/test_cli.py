import json
import socket
import subprocess
import sys
import time
from pathlib import Path

import pytest

from vrflightbench import protocol as proto
from vrflightbench.cli import load_settings, main
from vrflightbench.controllers import BotPilot
from vrflightbench.logfile import find_logs, read_log, verify_replay
from vrflightbench.server import LiveServer
from vrflightbench.sim import DroneState, Vec3
from vrflightbench.tasks import TaskCondition, instantiate_task


def run_cli(*argv):
    return main(list(argv))


def slurp_tree(root: Path) -> dict:
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


class TestPlanCommand:
    def test_plan_is_deterministic(self, capsys):
        assert run_cli("plan", "--participant", "P01", "--seed", "7") == 0
        first = capsys.readouterr().out
        assert run_cli("plan", "--participant", "P01", "--seed", "7") == 0
        assert capsys.readouterr().out == first

    def test_unknown_flag_rejected(self):
        with pytest.raises(SystemExit) as exc:
            run_cli("plan", "--seed", "1", "--frobnicate")
        assert exc.value.code != 0


class TestRunBotCommand:
    def test_identical_log_bytes_across_runs(self, tmp_path, capsys):
        a_dir, b_dir = tmp_path / "a", tmp_path / "b"
        assert run_cli("run-bot", "--kind", "crossing", "--seed", "42", "--trials", "1",
                       "--out", str(a_dir)) == 0
        assert run_cli("run-bot", "--kind", "crossing", "--seed", "42", "--trials", "1",
                       "--out", str(b_dir)) == 0
        capsys.readouterr()
        a_tree, b_tree = slurp_tree(a_dir), slurp_tree(b_dir)
        assert list(a_tree) == list(b_tree)
        assert a_tree == b_tree

    def test_trials_flag_controls_factorial_size(self, tmp_path, capsys):
        assert run_cli("run-bot", "--kind", "pointing", "--seed", "1", "--trials", "1",
                       "--out", str(tmp_path)) == 0
        out = capsys.readouterr().out
        assert "pointing: two_button 6/6 trials complete" in out
        assert "pointing: one_handed 6/6 trials complete" in out
        assert len(find_logs(tmp_path)) == 12

    def test_mode_flag_restricts_controllers(self, tmp_path, capsys):
        assert run_cli("run-bot", "--kind", "crossing", "--seed", "1", "--trials", "1",
                       "--mode", "one_handed", "--out", str(tmp_path)) == 0
        out = capsys.readouterr().out
        assert "one_handed 6/6" in out
        assert "two_button" not in out
        logs = find_logs(tmp_path)
        assert len(logs) == 6
        assert all("one_handed" in p.name for p in logs)

    def test_config_override_lands_in_header(self, tmp_path, capsys):
        settings = tmp_path / "settings.json"
        settings.write_text(json.dumps({"tau": 0.2}))
        out_dir = tmp_path / "runs"
        assert run_cli("run-bot", "--kind", "crossing", "--seed", "3", "--trials", "1",
                       "--out", str(out_dir), "--config", str(settings)) == 0
        capsys.readouterr()
        log = read_log(find_logs(out_dir)[0])
        assert log.header.session["sim_config"]["tau"] == 0.2

    def test_bad_settings_key_rejected(self, tmp_path, capsys):
        settings = tmp_path / "settings.json"
        settings.write_text(json.dumps({"thrust": 9000}))
        assert run_cli("run-bot", "--kind", "crossing", "--seed", "3", "--trials", "1",
                       "--out", str(tmp_path / "r"), "--config", str(settings)) == 1
        assert "thrust" in capsys.readouterr().err


@pytest.fixture(scope="module")
def session_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("runs")
    assert run_cli("run-bot", "--kind", "crossing", "--seed", "5", "--trials", "1",
                   "--out", str(out)) == 0
    return out


class TestReplayCommand:
    def test_verify_clean_logs(self, session_dir, capsys):
        assert run_cli("replay", "--logs", str(session_dir), "--verify") == 0
        out = capsys.readouterr().out
        assert out.count("OK") == 12

    def test_verify_detects_hand_edited_sample(self, session_dir, tmp_path, capsys):
        victim = tmp_path / "edited.log"
        lines = find_logs(session_dir)[0].read_text().splitlines()
        # Flip one digit inside a mid-file sample record.
        target = len(lines) // 2
        record = json.loads(lines[target])
        while record.get("type") != "sample":
            target += 1
            record = json.loads(lines[target])
        record["px"] = record["px"] + 1e-9
        lines[target] = json.dumps(record, separators=(",", ":"))
        victim.write_text("\n".join(lines) + "\n")
        assert run_cli("replay", "--logs", str(victim), "--verify") == 1
        out = capsys.readouterr().out
        assert f"first divergent tick {record['tick']}" in out

    def test_summary_mode(self, session_dir, capsys):
        assert run_cli("replay", "--logs", str(find_logs(session_dir)[0])) == 0
        assert "outcome trial_complete" in capsys.readouterr().out

    def test_verify_uses_header_configs_not_defaults(self, tmp_path, capsys):
        # Non-default time constant: replay must rebuild the physics from the
        # header or every regenerated sample diverges.
        settings = tmp_path / "s.json"
        settings.write_text(json.dumps({"tau": 0.2}))
        out = tmp_path / "runs"
        assert run_cli("run-bot", "--kind", "crossing", "--seed", "8", "--trials", "1",
                       "--out", str(out), "--config", str(settings)) == 0
        assert run_cli("replay", "--logs", str(out), "--verify") == 0
        capsys.readouterr()


class TestAnalyzeCommand:
    def test_analyze_emits_all_artifacts(self, tmp_path, capsys):
        out = tmp_path / "runs"
        assert run_cli("run-bot", "--kind", "crossing", "--seed", "5", "--trials", "2",
                       "--out", str(out)) == 0
        report_dir = tmp_path / "report"
        assert run_cli("analyze", "--logs", str(out), "--out", str(report_dir)) == 0
        capsys.readouterr()
        assert (report_dir / "metrics.csv").exists()
        assert (report_dir / "report.json").exists()
        assert sorted(p.name for p in (report_dir / "plotdata").iterdir()) == [
            "accel_crossing.csv",
            "fitts_crossing.csv",
            "jerk_crossing.csv",
            "speed_crossing.csv",
            "trial_area_crossing.csv",
        ]
        report = json.loads((report_dir / "report.json").read_text())
        assert set(report["kinds"]["crossing"]["fitts"]) == {"two_button", "one_handed"}


class TestSettings:
    def test_defaults_without_file(self):
        sim_cfg, env, adapter_cfg, layout = load_settings(None)
        assert sim_cfg.dt == 0.01 and env.weather_tag == "sunshine"
        assert adapter_cfg.s_max == 2.0 and layout.frame_height == 1.5

    def test_wind_and_layout_overrides(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text(json.dumps({"wind": [0.1, 0, 0], "frame_height": 2.0, "deadzone": 0.2}))
        sim_cfg, env, adapter_cfg, layout = load_settings(path)
        assert env.wind == Vec3(0.1, 0, 0)
        assert layout.frame_height == 2.0
        assert adapter_cfg.deadzone == 0.2


class UdpPilotClient:
    """Scripted wire client: flies the trial with the bot logic, over UDP."""

    def __init__(self, port):
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.settimeout(5.0)
        self.addr = ("127.0.0.1", port)
        self.seq = 0

    def send(self, msg):
        self.sock.sendto(proto.encode(msg), self.addr)

    def recv(self):
        data, _ = self.sock.recvfrom(2048)
        return proto.decode(data)

    def wait_for(self, predicate, timeout=10.0):
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            msg = self.recv()
            if predicate(msg):
                return msg
        raise AssertionError("timed out waiting for message")

    def close(self):
        self.sock.close()


class TestServeEndToEnd:
    def test_udp_session_flies_one_trial(self, tmp_path):
        server = LiveServer(udp_port=0, ws_port=0, out_dir=tmp_path, kind="crossing",
                            repetitions=1)
        server.start()
        client = UdpPilotClient(server.udp_port)
        try:
            client.send(proto.ConfigUpdate("P09", "two_button", 4))
            configured = client.wait_for(
                lambda m: isinstance(m, proto.EventNotice) and m.kind == "checkpoint"
                and m.payload.get("phase") == "configured"
            )
            shapes = {lm["shape"] for lm in configured.payload["scene"]["landmarks"]}
            assert shapes == {"triangular_pyramid", "cube"}
            client.send(proto.SessionControl("start"))
            armed = client.wait_for(
                lambda m: isinstance(m, proto.EventNotice) and m.kind == "trial_start"
            )
            condition = TaskCondition(
                armed.payload["kind"], armed.payload["D"], armed.payload["W"],
                armed.payload["id"],
            )
            task = instantiate_task(condition)
            pilot = BotPilot(task)
            completed = False
            deadline = time.monotonic() + 30.0
            while not completed and time.monotonic() < deadline:
                msg = client.recv()
                if isinstance(msg, proto.EventNotice) and msg.kind == "trial_complete":
                    completed = True
                elif isinstance(msg, proto.StateUpdate):
                    cmd = pilot.step(DroneState(t=msg.t_ms / 1000.0, pos=msg.pos, vel=msg.vel))
                    client.seq += 1
                    client.send(proto.RcCommand(
                        seq=client.seq, t_ms=msg.t_ms, vx=cmd.x, vy=cmd.y, vz=cmd.z,
                    ))
            assert completed, "trial did not complete over the wire"
            client.send(proto.SessionControl("stop"))
            client.wait_for(
                lambda m: isinstance(m, proto.EventNotice) and m.kind == "checkpoint"
                and m.payload.get("phase") == "trial_done"
            )
        finally:
            client.close()
            server.stop()
        logs = find_logs(tmp_path)
        assert len(logs) == 1
        log = read_log(logs[0])
        assert log.outcome() == "trial_complete"
        assert verify_replay(log) is None
        assert log.cmds, "wire commands were logged"

    def test_out_of_phase_rc_gets_error_reply(self, tmp_path):
        server = LiveServer(udp_port=0, ws_port=0, out_dir=tmp_path)
        server.start()
        client = UdpPilotClient(server.udp_port)
        try:
            client.send(proto.RcCommand(seq=1, t_ms=0, vx=1.0, vy=0.0, vz=0.0))
            reply = client.wait_for(lambda m: isinstance(m, proto.ErrorMessage))
            assert reply.code == "bad_phase"
        finally:
            client.close()
            server.stop()

    def test_occupied_port_is_a_startup_error(self, tmp_path, capsys):
        blocker = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        blocker.bind(("0.0.0.0", 0))
        port = blocker.getsockname()[1]
        try:
            code = run_cli("serve", "--udp-port", str(port), "--ws-port", "0",
                           "--out", str(tmp_path))
            assert code == 1
            assert str(port) in capsys.readouterr().err
        finally:
            blocker.close()


class TestServeSubprocess:
    def test_serve_prints_listening_line_and_shuts_down(self, tmp_path):
        process = subprocess.Popen(
            [sys.executable, "-m", "vrflightbench.cli", "serve", "--udp-port", "0",
             "--ws-port", "0", "--out", str(tmp_path)],
            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True,
        )
        try:
            line = process.stdout.readline()
            assert line.startswith("listening udp=")
        finally:
            process.terminate()
            process.wait(timeout=10)
