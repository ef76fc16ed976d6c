"""Command line: ``run``, ``sweep`` and ``validate``.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..config import ConfigError, Mode, load_config
from ..engine import simulate
from .audit import audit_log
from .results import calibration_note, emit_results, write_manifest
from .scenarios import DESK_COUNTS, DURATION, FULL_COUNTS, FULL_DURATION
from .sweep import SweepError, run_sweep

log = logging.getLogger("lorafed")


def _csv(kind):
    def parse(text: str):
        try:
            return [kind(x) for x in text.split(",") if x]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return parse


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lorafed", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario file with one seed")
    r.add_argument("--scenario", required=True, type=Path)
    r.add_argument("--seed", type=int)
    r.add_argument("--log", type=Path, help="write the event log (NDJSON) here")
    r.add_argument("--out", type=Path, help="write metrics and manifest JSON here")

    s = sub.add_parser("sweep", help="sweep modes x device counts x seeds")
    s.add_argument("--modes", type=_csv(str),
                   default=[m.value for m in Mode])
    s.add_argument("--counts", type=_csv(int))
    s.add_argument("--repeats", type=int, default=3)
    s.add_argument("--seeds", type=_csv(int))
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--altruist", choices=("on", "off", "both"), default="on")
    s.add_argument("--full-scale", action="store_true",
                   help="counts 100..1000 and 5 h runs instead of the desk defaults")
    s.add_argument("--workers", type=int, default=1)

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("--scenario", required=True, type=Path)
    return p


def _cmd_run(args) -> int:
    cfg = load_config(args.scenario).validate()
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    metrics, elog = simulate(cfg, seed, args.log)
    result = {"scenario": cfg.name, "seed": seed, "metrics": metrics.core(),
              "audit": audit_log(elog, cfg), "log_sha256": elog.digest()}
    print(json.dumps(result, indent=2, sort_keys=True))
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        manifest = dict(result, config=cfg.to_dict(), calibration=calibration_note(),
                        extras=metrics.extras)
        (args.out / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return 0


def _cmd_sweep(args) -> int:
    try:
        modes = [Mode(m) for m in args.modes]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    counts = args.counts or list(FULL_COUNTS if args.full_scale else DESK_COUNTS)
    duration = FULL_DURATION if args.full_scale else DURATION
    flags = {"on": (True,), "off": (False,), "both": (True, False)}[args.altruist]
    if args.repeats < 1 or any(c < 0 for c in counts):
        raise ConfigError("repeats must be >= 1 and counts >= 0")
    try:
        table = run_sweep(modes, counts, args.repeats, args.seeds, altruist=flags,
                          workers=args.workers, duration=duration)
    except SweepError as exc:
        if exc.partial.runs:
            emit_results(exc.partial, args.out)
            write_manifest(exc.partial, args.out, {"aborted": str(exc)})
        raise
    for path in emit_results(table, args.out):
        log.info("wrote %s", path)
    write_manifest(table, args.out, {"duration": duration, "counts": counts,
                                     "altruist": args.altruist})
    for row in table.rows():
        print(json.dumps(row, sort_keys=True))
    return 0


def _cmd_validate(args) -> int:
    cfg = load_config(args.scenario).validate()
    print(f"{args.scenario}: ok ({cfg.mode.value}, {cfg.n_devices} devices, "
          f"{len(cfg.gateways)} gateways)")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    commands = {"run": _cmd_run, "sweep": _cmd_sweep, "validate": _cmd_validate}
    try:
        return commands[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
