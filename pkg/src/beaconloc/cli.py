"""Command-line interface: simulate, locate, eval, ablate, serve."""

import argparse
import dataclasses
import os
import signal
import sys
import threading
from pathlib import Path

from . import formats
from .evaluate import (
    compute_bias,
    compute_error_summary,
    compute_fixes,
    render_ablation,
    render_summary,
    run_ablation,
)
from .server import DEFAULT_RETENTION_SECONDS, PORT_ENV_VAR, LocationServer
from .sim import simulate
from .trilateration import VARIANT_NAMES, variant_params


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beaconloc",
        description="TDoA positioning from asynchronous acoustic beacons",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a scenario, write observation/truth/testbed files")
    p_sim.add_argument("scenario", help="scenario file")
    p_sim.add_argument("-o", "--output", required=True, help="output directory")
    p_sim.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_sim.add_argument("--speed-of-sound", type=float, default=None,
                       help="override the scenario speed of sound (m/s)")

    p_loc = sub.add_parser("locate", help="compute fixes from an observation file")
    p_loc.add_argument("observations", help="observation file")
    p_loc.add_argument("config", help="testbed config file")
    p_loc.add_argument("--variant", choices=VARIANT_NAMES, default="all-robust")
    p_loc.add_argument("-o", "--output", required=True, help="fix file to write")
    p_loc.add_argument("--window-seconds", type=float, default=18.0)
    p_loc.add_argument("--speed-of-sound", type=float, default=None)

    p_eval = sub.add_parser("eval", help="summarize fix errors against ground truth")
    p_eval.add_argument("fixes", help="fix file")
    p_eval.add_argument("truth", help="ground-truth file")
    p_eval.add_argument("-o", "--output", default=None, help="summary file (default: stdout)")

    p_abl = sub.add_parser("ablate", help="evaluate progressively smaller anchor subsets")
    p_abl.add_argument("observations", help="observation file")
    p_abl.add_argument("config", help="testbed config file")
    p_abl.add_argument("--truth", required=True, help="ground-truth file")
    p_abl.add_argument("--subsets", default=None,
                       help="file with one comma-separated anchor id list per line")
    p_abl.add_argument("--variant", choices=VARIANT_NAMES, default="all-robust")
    p_abl.add_argument("-o", "--output", default=None, help="table file (default: stdout)")
    p_abl.add_argument("--window-seconds", type=float, default=18.0)
    p_abl.add_argument("--speed-of-sound", type=float, default=None)

    p_srv = sub.add_parser("serve", help="run the TCP location server")
    p_srv.add_argument("config", help="testbed config file")
    p_srv.add_argument("--port", type=int, default=5533,
                       help=f"TCP port (0 = ephemeral; env {PORT_ENV_VAR} overrides)")
    p_srv.add_argument("--variant", choices=VARIANT_NAMES, default="all-robust")
    p_srv.add_argument("--window-seconds", type=float, default=18.0)
    p_srv.add_argument("--retention", type=float, default=DEFAULT_RETENTION_SECONDS)
    p_srv.add_argument("--speed-of-sound", type=float, default=None)
    return parser


def _load_config(path: str, speed_of_sound: float | None):
    config = formats.read_testbed(path)
    if speed_of_sound is not None:
        config = dataclasses.replace(config, speed_of_sound=speed_of_sound)
    return config


def _write_or_print(text: str, output: str | None) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


def _cmd_simulate(args) -> int:
    scenario = formats.read_scenario(args.scenario)
    if args.seed is not None:
        scenario = dataclasses.replace(scenario, seed=args.seed)
    if args.speed_of_sound is not None:
        testbed = dataclasses.replace(scenario.testbed, speed_of_sound=args.speed_of_sound)
        scenario = dataclasses.replace(scenario, testbed=testbed)
    observations, truth = simulate(scenario)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    formats.write_observations(out / "observations.txt", observations)
    formats.write_truth(out / "truth.txt", truth.target_positions)
    formats.write_testbed(out / "testbed.txt", scenario.testbed)
    print(f"wrote {len(observations)} observations for {len(scenario.targets)} target(s) to {out}")
    return 0


def _cmd_locate(args) -> int:
    config = _load_config(args.config, args.speed_of_sound)
    observations = formats.read_observations(args.observations)
    params = variant_params(args.variant)
    records = compute_fixes(observations, config, params, args.window_seconds)
    formats.write_fixes(args.output, records)
    print(f"wrote {len(records)} fixes to {args.output}")
    return 0


def _cmd_eval(args) -> int:
    fixes = formats.read_fixes(args.fixes)
    truth = formats.read_truth(args.truth)
    summary = compute_error_summary(fixes, truth)
    bias = compute_bias(fixes, truth)
    _write_or_print(render_summary(summary, bias), args.output)
    return 0


def _parse_subsets_file(path: str) -> list[frozenset[int]]:
    subsets = []
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            subsets.append(frozenset(int(tok) for tok in line.split(",")))
        except ValueError:
            raise formats.ParseError(line_no, "subset", f"expected comma-separated ids, got {line!r}")
    if not subsets:
        raise ValueError(f"no subsets found in {path}")
    return subsets


def _cmd_ablate(args) -> int:
    config = _load_config(args.config, args.speed_of_sound)
    observations = formats.read_observations(args.observations)
    truth = formats.read_truth(args.truth)
    params = variant_params(args.variant)
    subsets = _parse_subsets_file(args.subsets) if args.subsets else None
    results = run_ablation(observations, config, params, truth, subsets, args.window_seconds)
    _write_or_print(render_ablation(results), args.output)
    return 0


def _cmd_serve(args) -> int:
    config = _load_config(args.config, args.speed_of_sound)
    params = variant_params(args.variant)
    port = args.port
    if os.environ.get(PORT_ENV_VAR):
        port = int(os.environ[PORT_ENV_VAR])
    server = LocationServer(
        config, params, port=port,
        window_seconds=args.window_seconds, retention=args.retention,
    )

    def _stop(signum, frame):
        # shutdown() blocks until serve_forever() returns, so it cannot run
        # on the thread the signal interrupted
        threading.Thread(target=server.shutdown, daemon=True).start()

    signal.signal(signal.SIGINT, _stop)
    signal.signal(signal.SIGTERM, _stop)
    print(f"listening on port {server.port}", flush=True)
    try:
        server.serve_forever()
    finally:
        server.server_close()
    print("server stopped")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "locate": _cmd_locate,
    "eval": _cmd_eval,
    "ablate": _cmd_ablate,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
