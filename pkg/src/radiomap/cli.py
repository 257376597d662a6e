"""``radiomap`` command line.

Each run subcommand loads a run config, applies flag overrides and either runs
in-process or, with ``--server URL``, posts the resolved config to a running
service. Both paths write the same files.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ESTIMATORS, U64_MAX, load_run_config
from .errors import RadioMapError

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 1, 2
DEFAULT_OUT = Path("radiomap-out")


def _u64(text: str) -> int:
    try:
        v = int(text, 10)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v <= U64_MAX:
        raise argparse.ArgumentTypeError(f"seed must lie in [0, 2**64 - 1], got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="radiomap", description="Online radio-map reconstruction toolkit.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("simulate", "generate a measurement stream and a truth grid"),
        ("reconstruct", "run an estimator over a stream, write diagnostics and the final map"),
        ("evaluate", "score an estimator against the truth at the configured checkpoints"),
        ("sweep", "evaluate every point of the config's parameter grid"),
    ):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=True, type=Path, metavar="PATH", help="run config (YAML or JSON)")
        s.add_argument("--seed", type=_u64, metavar="U64", help="override the scenario seed")
        s.add_argument("--out", type=Path, metavar="DIR", help="output directory")
        s.add_argument("--estimator", choices=ESTIMATORS, metavar="NAME", help=f"one of {', '.join(ESTIMATORS)}")
        s.add_argument("--server", metavar="URL", help="send the run to a radiomap service instead of running locally")
    s = sub.add_parser("serve", help="start the HTTP service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    return p


def _remote(command: str, run, server: str) -> dict[str, str]:
    import httpx

    from .service.schemas import RunRequest

    measurements_csv = None
    if run.measurements is not None:
        measurements_csv = run.measurements.read_text()
        run = run.model_copy(update={"measurements": None})
    body = RunRequest(config=run.resolved(), measurements_csv=measurements_csv).model_dump(mode="json")
    resp = httpx.post(f"{server.rstrip('/')}/{command}", json=body, timeout=None)
    if resp.status_code != 200:
        raise RadioMapError(f"server answered {resp.status_code}: {resp.text}")
    return resp.json()["files"]


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        import uvicorn

        uvicorn.run("radiomap.service.app:app", host=args.host, port=args.port)
        return EXIT_OK
    from . import runs

    try:
        run = load_run_config(args.config, seed=args.seed, estimator=args.estimator, out=args.out)
        if args.server:
            files = _remote(args.command, run, args.server)
        else:
            files = runs.COMMANDS[args.command](run)
        written = runs.write_outputs(run.out or DEFAULT_OUT, files)
    except RadioMapError as exc:
        print(f"radiomap {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"radiomap {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # network failures from the thin client
        if type(exc).__module__.startswith("httpx"):
            print(f"radiomap {args.command}: cannot reach server: {exc}", file=sys.stderr)
            return EXIT_ERROR
        raise
    for p in written:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
