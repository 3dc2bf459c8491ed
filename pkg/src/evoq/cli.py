"""Operator command line: simulate, serve, analyze, render.

Exit codes: 0 success, 1 validation problem (flags, config, inputs that
fail their contracts), 2 runtime failure (missing files, busy ports,
unexpected errors). Every data-producing command takes ``--json`` for
machine-readable output on stdout.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import socket
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    AnalysisError,
    load_sessions,
    mean_table,
    population_sd,
    preference_summary,
    write_convergence_csv,
    write_convergence_series,
    write_convergence_summary_csv,
    write_preference_csv,
)
from .de import Curve
from .dsp.filters import BandPlan, load_filter_file
from .dsp.loudness import measure_loudness
from .dsp.render import DEFAULT_TARGET_LUFS, render_stimulus
from .dsp.wav import ENCODINGS, read_wav, write_wav
from .session import ConfigError, SessionError, load_config
from .simulate import run_many, write_session_dir

log = logging.getLogger(__name__)


class UsageError(Exception):
    """Bad flags or arguments; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); the contract wants 1
        raise UsageError(message)


def _load_curve_file(path: str | Path) -> Curve:
    path = Path(path)
    if path.suffix.lower() == ".json":
        return Curve(np.asarray(json.loads(path.read_text()), dtype=float))
    return Curve(np.atleast_1d(np.loadtxt(path, dtype=float)))


def _emit(args, payload: dict, text: list[str]) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        for line in text:
            print(line)


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------

def _cmd_simulate(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    hidden = _load_curve_file(args.target) if args.target else None
    sims = run_many(
        config,
        args.sessions,
        hidden_target=hidden,
        noise_sd=args.noise_sd,
        indifference_width=args.indifference,
        random_verdicts=args.random_verdicts,
    )
    centers = config.band_plan.center_frequencies
    tables = [population_sd(s.state.history, centers) for s in sims]
    initial = np.array([t.band_averaged[0] for t in tables])
    final = np.array([t.band_averaged[-1] for t in tables])
    decreased = int(np.sum(final < initial))
    mean = mean_table(tables)

    payload = {
        "sessions": len(sims),
        "random_verdicts": args.random_verdicts,
        "mean_initial_sd_db": float(initial.mean()),
        "mean_final_sd_db": float(final.mean()),
        "mean_final_to_initial_ratio": float((final / initial).mean()),
        "sessions_decreased": decreased,
        "band_averaged_series": [float(x) for x in mean.band_averaged],
    }
    text = [
        f"sessions: {len(sims)}" + (" (random verdicts)" if args.random_verdicts else ""),
        f"band-averaged population sd: {initial.mean():.3f} dB (gen 0) -> "
        f"{final.mean():.3f} dB (gen {mean.generations - 1}), "
        f"mean ratio {(final / initial).mean():.3f}",
        f"sd decreased in {decreased}/{len(sims)} sessions",
    ]

    benchmark = [r for s in sims for r in s.benchmark]
    if benchmark:
        evaluations = [r for s in sims for r in s.state.evaluation_records]
        pref = preference_summary(evaluations, benchmark)
        payload["preference"] = {
            "mean_initial": pref.mean_initial,
            "mean_best": pref.mean_best,
            "wins": pref.wins,
            "losses": pref.losses,
            "ties": pref.ties,
            "odds_ratio": pref.odds_ratio,
            "ci": [pref.ci_low, pref.ci_high],
        }
        text.append(
            f"best-ranked vs initial: mean {pref.mean_best:.2f} vs "
            f"{pref.mean_initial:.2f}, wins/losses/ties "
            f"{pref.wins}/{pref.losses}/{pref.ties}, odds {pref.odds_ratio:.2f}"
        )

    if args.out:
        out = Path(args.out)
        for sim in sims:
            write_session_dir(sim, out / f"session_{sim.state.config.seed:06d}")
        payload["out"] = str(out)
        text.append(f"session logs written under {out}")

    _emit(args, payload, text)
    return 0


# --------------------------------------------------------------------------
# serve
# --------------------------------------------------------------------------

def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    config = load_config(args.config)
    app = create_app(config, args.data_dir)
    try:
        probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((args.host, args.port))
        probe.close()
    except OSError as exc:
        print(
            f"error: cannot listen on {args.host}:{args.port}: {exc}", file=sys.stderr
        )
        return 2
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# --------------------------------------------------------------------------
# analyze
# --------------------------------------------------------------------------

def _cmd_analyze(args) -> int:
    loaded = load_sessions(args.dir)
    tables = {
        s.name: population_sd(
            s.state.history, s.state.config.band_plan.center_frequencies
        )
        for s in loaded
    }
    mean = mean_table(list(tables.values()))

    out = Path(args.out) if args.out else Path(args.dir) / "analysis"
    out.mkdir(parents=True, exist_ok=True)
    write_convergence_csv(tables, out / "convergence.csv")
    write_convergence_summary_csv(mean, out / "convergence_summary.csv")
    write_convergence_series(mean, out / "convergence_series.dat")
    written = ["convergence.csv", "convergence_summary.csv", "convergence_series.dat"]

    payload = {
        "sessions": len(loaded),
        "generations": mean.generations,
        "band_averaged_series": [float(x) for x in mean.band_averaged],
        "out": str(out),
    }
    text = [
        f"sessions analyzed: {len(loaded)}",
        "band-averaged sd per generation: "
        + ", ".join(f"{x:.3f}" for x in mean.band_averaged),
    ]

    benchmark = [r for s in loaded for r in s.benchmark]
    if benchmark:
        evaluations = [r for s in loaded for r in s.state.evaluation_records]
        pref = preference_summary(evaluations, benchmark)
        write_preference_csv(pref, out / "preference.csv")
        written.append("preference.csv")
        payload["preference"] = {
            "mean_initial": pref.mean_initial,
            "mean_best": pref.mean_best,
            "wins": pref.wins,
            "losses": pref.losses,
            "ties": pref.ties,
            "win_proportion": pref.win_proportion,
            "odds_ratio": pref.odds_ratio,
            "ci": [pref.ci_low, pref.ci_high],
        }
        text.append(
            f"best-ranked vs initial: mean {pref.mean_best:.2f} vs "
            f"{pref.mean_initial:.2f}, odds {pref.odds_ratio:.2f} "
            f"[{pref.ci_low:.2f}, {pref.ci_high:.2f}]"
        )
    text.append(f"tables written to {out}: {', '.join(written)}")

    _emit(args, payload, text)
    return 0


# --------------------------------------------------------------------------
# render
# --------------------------------------------------------------------------

def _cmd_render(args) -> int:
    clip = read_wav(args.track)
    if args.start or args.duration is not None:
        duration = args.duration if args.duration is not None else clip.duration - args.start
        clip = clip.slice_seconds(args.start, duration)
    curve = _load_curve_file(args.curve)
    plan = BandPlan() if len(curve) == 10 else BandPlan(tuple(
        float(f) for f in np.geomspace(31.25, 16000.0, len(curve))
    ))
    compensation = load_filter_file(args.compensation) if args.compensation else None
    rendered = render_stimulus(
        clip,
        curve,
        plan,
        tap_count=args.tap_count,
        compensation=compensation,
        target_lufs=args.target_lufs,
    )
    write_wav(args.out, rendered, encoding=args.encoding)
    loudness = measure_loudness(rendered)
    payload = {
        "out": str(args.out),
        "duration_s": rendered.duration,
        "loudness_lufs": loudness,
        "encoding": args.encoding,
    }
    _emit(
        args,
        payload,
        [f"wrote {args.out}: {rendered.duration:.2f} s at {loudness:.2f} LUFS"],
    )
    return 0


# --------------------------------------------------------------------------
# parser plumbing
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="evoq",
        description="Evolve headphone target curves from listener preference.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run automated sessions with the simulated listener")
    sim.add_argument("--config", required=True, help="experiment config file (YAML/JSON)")
    sim.add_argument("--sessions", type=int, default=1, help="number of sessions")
    sim.add_argument("--seed", type=int, default=None, help="base seed (overrides config)")
    sim.add_argument("--out", default=None, help="directory for session logs")
    sim.add_argument("--noise-sd", type=float, default=0.0, help="listener noise SD in dB")
    sim.add_argument(
        "--indifference", type=float, default=0.0, help='half-width of the "Same" region (dB)'
    )
    sim.add_argument(
        "--target", default=None, help="hidden target curve file (default: random per session)"
    )
    sim.add_argument(
        "--random-verdicts",
        action="store_true",
        help="replace the listener with uniformly random verdicts (control)",
    )
    sim.add_argument("--json", action="store_true", help="machine-readable output")
    sim.set_defaults(func=_cmd_simulate)

    srv = sub.add_parser("serve", help="serve the listening-test HTTP API")
    srv.add_argument("--config", required=True, help="experiment config file")
    srv.add_argument("--data-dir", required=True, help="session persistence directory")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8000)
    srv.set_defaults(func=_cmd_serve)

    ana = sub.add_parser("analyze", help="compute convergence/preference tables from logs")
    ana.add_argument("--dir", required=True, help="directory of session directories")
    ana.add_argument("--out", default=None, help="output directory (default: DIR/analysis)")
    ana.add_argument("--json", action="store_true", help="machine-readable output")
    ana.set_defaults(func=_cmd_analyze)

    ren = sub.add_parser("render", help="render one stimulus from a track and a curve")
    ren.add_argument("--track", required=True, help="input WAV file")
    ren.add_argument("--curve", required=True, help="gain curve file (text or JSON)")
    ren.add_argument("--out", required=True, help="output WAV path")
    ren.add_argument("--start", type=float, default=0.0, help="excerpt start (s)")
    ren.add_argument("--duration", type=float, default=None, help="excerpt length (s)")
    ren.add_argument("--target-lufs", type=float, default=DEFAULT_TARGET_LUFS)
    ren.add_argument("--tap-count", type=int, default=4095)
    ren.add_argument("--compensation", default=None, help="compensation FIR file")
    ren.add_argument("--encoding", choices=ENCODINGS, default="float32")
    ren.add_argument("--json", action="store_true", help="machine-readable output")
    ren.set_defaults(func=_cmd_render)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, ConfigError, AnalysisError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, SessionError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
