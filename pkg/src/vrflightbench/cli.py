"""Operator entry point: serve live sessions, run headless bot experiments,
analyze logs, verify replays, and print trial plans."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .analysis import summarize, write_report
from .controllers import AdapterConfig, BotGains
from .logfile import find_logs, read_log, verify_replay
from .runner import BotSource, run_session
from .server import LiveServer
from .sim import EnvironmentParams, SimConfig, Vec3
from .tasks import (
    KINDS,
    MODES,
    SHANNON,
    TaskLayout,
    WELFORD,
    enumerate_conditions,
    randomize_order,
)

log = logging.getLogger("vrflightbench")

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}

FORMULATION_FLAGS = {"welford": WELFORD, "shannon": SHANNON}

SIM_FIELDS = ("dt", "tau", "v_max", "landing_alt", "landing_speed", "drone_half_extent")
ENV_FIELDS = ("wind", "weather_tag")
ADAPTER_FIELDS = ("s_max", "deadzone", "yaw_rate_max")
LAYOUT_FIELDS = ("frame_height", "start")


class ConfigError(ValueError):
    pass


def load_settings(path: Path | None):
    """Settings file overriding SimConfig / EnvironmentParams / AdapterConfig
    (plus task layout) fields by name; unknown keys are rejected."""
    sim_kwargs: dict = {}
    env_kwargs: dict = {}
    adapter_kwargs: dict = {}
    layout_kwargs: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read settings file {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"settings file {path} must hold a JSON object")
        for key, value in data.items():
            if key in SIM_FIELDS:
                sim_kwargs[key] = value
            elif key == "wind":
                env_kwargs["wind"] = Vec3(*value)
            elif key == "weather_tag":
                env_kwargs["weather_tag"] = value
            elif key in ADAPTER_FIELDS:
                adapter_kwargs[key] = value
            elif key == "frame_height":
                layout_kwargs["frame_height"] = value
            elif key == "start":
                layout_kwargs["start_pos"] = Vec3(*value)
            else:
                raise ConfigError(f"unknown settings key {key!r}")
    return (
        SimConfig(**sim_kwargs),
        EnvironmentParams(**env_kwargs),
        AdapterConfig(**adapter_kwargs),
        TaskLayout(**layout_kwargs),
    )


def _kinds(flag: str) -> list[str]:
    return list(KINDS) if flag == "both" else [flag]


def _modes(flag: str) -> tuple[str, ...]:
    return MODES if flag == "both" else (flag,)


def cmd_plan(args) -> int:
    formulation = FORMULATION_FLAGS[args.id_formulation]
    for kind in _kinds(args.kind):
        conditions = enumerate_conditions(kind, formulation)
        plan = randomize_order(
            conditions, modes=_modes(args.mode), repetitions=args.trials,
            seed=args.seed, participant_id=args.participant,
        )
        print(f"# plan participant={plan.participant_id} seed={plan.seed} kind={kind} "
              f"entries={len(plan.entries)}")
        for i, entry in enumerate(plan.entries, 1):
            c = entry.condition
            print(f"{i:3d}  {entry.mode:10s} {c.kind:8s} D={c.distance:<4g} W={c.width:<4g} "
                  f"ID={c.id_value:.4f}  trial {entry.trial_index}")
    return 0


def cmd_run_bot(args) -> int:
    sim_cfg, env, adapter_cfg, layout = load_settings(args.config)
    formulation = FORMULATION_FLAGS[args.id_formulation]
    out_dir = Path(args.out)
    status = 0
    for kind in _kinds(args.kind):
        conditions = enumerate_conditions(kind, formulation)
        plan = randomize_order(
            conditions, modes=_modes(args.mode), repetitions=args.trials,
            seed=args.seed, participant_id=args.participant,
        )

        def bot_factory(task, mode):
            return BotSource(BotGains(), s_max=adapter_cfg.s_max, dt=sim_cfg.dt)

        results = run_session(
            plan, bot_factory, sim_cfg=sim_cfg, env=env, layout=layout, out_dir=out_dir
        )
        for mode in _modes(args.mode):
            mine = [r for r in results if r.mode == mode]
            done = sum(r.outcome == "complete" for r in mine)
            print(f"{kind}: {mode} {done}/{len(mine)} trials complete")
            if done != len(mine):
                status = 1
    print(f"logs written under {out_dir}")
    return status


def cmd_analyze(args) -> int:
    report = summarize(Path(args.logs), include_failed=args.include_failed)
    if not report.trials:
        print("no trials found", file=sys.stderr)
        return 1
    out_dir = Path(args.out)
    write_report(report, out_dir)
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"{len(report.trials)} trials -> {out_dir}/metrics.csv, report.json, plotdata/")
    for kind, section in report.sections.items():
        for mode, fit in section.fitts.items():
            print(f"{kind}: {mode} MT = {fit.intercept:.3f} + {fit.slope:.3f}*ID "
                  f"(R^2 = {fit.r_squared:.3f}, n = {fit.n_points})")
    return 0


def cmd_replay(args) -> int:
    paths = find_logs(Path(args.logs))
    if not paths:
        print("no logs found", file=sys.stderr)
        return 1
    status = 0
    for path in paths:
        log_data = read_log(path)
        if args.verify:
            divergent = verify_replay(log_data)
            note = " (truncated tail dropped)" if log_data.truncated else ""
            if divergent is None:
                print(f"OK   {path}{note}")
            else:
                print(f"FAIL {path}: first divergent tick {divergent}")
                status = 1
        else:
            from .logfile import replay

            _, states = replay(log_data)
            outcome = log_data.outcome() or "open"
            print(f"{path}: {len(states)} ticks, outcome {outcome}")
    return status


def cmd_serve(args) -> int:
    sim_cfg, env, _, layout = load_settings(args.config)
    http_root = Path(args.http_root) if args.http_root else None
    try:
        server = LiveServer(
            udp_port=args.udp_port,
            ws_port=args.ws_port,
            http_port=args.http_port,
            http_root=http_root,
            out_dir=Path(args.out),
            kind=args.kind,
            repetitions=args.trials,
            id_formulation=FORMULATION_FLAGS[args.id_formulation],
            sim_cfg=sim_cfg,
            env=env,
            layout=layout,
        )
    except OSError as exc:
        print(f"serve: {exc}", file=sys.stderr)
        return 1
    print(f"listening udp={server.udp_port} ws={server.ws_port}"
          + (f" http={server.http_port}" if server.http_port else ""),
          flush=True)
    if server.http_port:
        print(f"cockpit: http://127.0.0.1:{server.http_port}/", flush=True)
    server.serve_forever()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vrfb",
        description="Virtual drone flight bench: deterministic simulator, bot runs, "
                    "log replay, and controller statistics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_formulation(p):
        p.add_argument("--id-formulation", choices=sorted(FORMULATION_FLAGS), default="welford",
                       help="difficulty index form (default: welford)")

    p_serve = sub.add_parser("serve", help="run the live session server")
    p_serve.add_argument("--udp-port", type=int, default=47800)
    p_serve.add_argument("--ws-port", type=int, default=47801)
    p_serve.add_argument("--http-port", type=int, default=47802)
    p_serve.add_argument("--http-root", default=None,
                         help="directory of cockpit assets to serve (omit to disable http)")
    p_serve.add_argument("--out", default="runs")
    p_serve.add_argument("--config", default=None, help="JSON settings file")
    p_serve.add_argument("--kind", choices=[*KINDS], default="crossing")
    p_serve.add_argument("--trials", type=int, default=5, help="repetitions per condition")
    add_formulation(p_serve)
    p_serve.set_defaults(func=cmd_serve)

    p_bot = sub.add_parser("run-bot", help="run the full factorial with the bot pilot")
    p_bot.add_argument("--kind", choices=[*KINDS, "both"], default="both")
    p_bot.add_argument("--seed", type=int, default=0)
    p_bot.add_argument("--trials", type=int, default=5, help="repetitions per condition")
    p_bot.add_argument("--mode", choices=[*MODES, "both"], default="both",
                       help="controller mode(s) to run")
    p_bot.add_argument("--participant", default="P00")
    p_bot.add_argument("--out", required=True)
    p_bot.add_argument("--config", default=None)
    add_formulation(p_bot)
    p_bot.set_defaults(func=cmd_run_bot)

    p_an = sub.add_parser("analyze", help="compute metrics, fits, and ANOVA tables from logs")
    p_an.add_argument("--logs", required=True)
    p_an.add_argument("--out", required=True)
    p_an.add_argument("--include-failed", action="store_true")
    add_formulation(p_an)
    p_an.set_defaults(func=cmd_analyze)

    p_rp = sub.add_parser("replay", help="regenerate trajectories from logs")
    p_rp.add_argument("--logs", required=True)
    p_rp.add_argument("--verify", action="store_true",
                      help="exit nonzero unless every log regenerates bit-exactly")
    p_rp.set_defaults(func=cmd_replay)

    p_pl = sub.add_parser("plan", help="print the randomized trial plan for a participant")
    p_pl.add_argument("--participant", default="P00")
    p_pl.add_argument("--seed", type=int, required=True)
    p_pl.add_argument("--kind", choices=[*KINDS, "both"], default="both")
    p_pl.add_argument("--mode", choices=[*MODES, "both"], default="both",
                      help="controller mode(s) to schedule")
    p_pl.add_argument("--trials", type=int, default=5)
    add_formulation(p_pl)
    p_pl.set_defaults(func=cmd_plan)

    return parser


def main(argv=None) -> int:
    level = os.environ.get("VRFB_LOG_LEVEL", "warn").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
