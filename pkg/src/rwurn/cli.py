"""Command line entry point: ``rwurn <subcommand> --config run.json``.

Exit codes: 0 ok, 2 configuration error, 3 oracle domain error, 4 resource
limit (node cap).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__, experiments
from .errors import ConfigError, NodeCapExceeded, RwurnError

log = logging.getLogger("rwurn")

RUN_COMMANDS = ("simulate", "moments", "normality", "gem", "coupling", "drift")


def _load(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None


def _apply_overrides(cfg: dict, args) -> dict:
    cfg = experiments.normalize_config(cfg)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.replicates is not None:
        cfg["replicates"] = args.replicates
    if getattr(args, "tree", None):
        cfg["tree_file"] = args.tree
    return cfg


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rwurn", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON run configuration (or a manifest.json to re-run)")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--replicates", type=int, help="replicate count (overrides the config)")
        sp.add_argument("--workers", type=int, default=None, help="worker processes (results do not depend on it)")
        sp.add_argument("--out", default="out", help="output directory (default: ./out)")
        sp.add_argument("-v", "--verbose", action="store_true")

    for name in RUN_COMMANDS:
        sp = sub.add_parser(name, help=f"run a {name} experiment")
        common(sp)
        if name == "normality":
            sp.add_argument("--tree", help="labelled tree in JSON lines to analyse instead of growing trees")
    sp = sub.add_parser("validate", help="check a configuration without running it")
    common(sp)
    return p


def _run(args) -> int:
    cfg = _apply_overrides(_load(args.config), args)
    if args.command == "validate":
        msgs = experiments.validate(cfg)
        for m in msgs:
            print(m)
        return 2 if any(m.startswith("error") for m in msgs) else 0
    allowed = experiments.SUBCOMMAND_EXPERIMENTS[args.command]
    exp = cfg.get("experiment")
    if exp is None and len(allowed) == 1:
        cfg["experiment"] = exp = allowed[0]
    if exp not in allowed:
        raise ConfigError(f"'{args.command}' runs {' or '.join(allowed)} experiments, config has {exp!r}")
    workers = args.workers or int(cfg.get("workers", 1))
    if workers < 1:
        raise ConfigError("--workers must be at least 1")
    man = experiments.run(cfg, args.out, workers)
    for name, digest in man["outputs"].items():
        print(f"{args.out}/{name}  sha256={digest}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except NodeCapExceeded as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return 4
    except MemoryError as exc:
        print(f"resource error: out of memory ({exc})", file=sys.stderr)
        return 4
    except RwurnError as exc:
        kind = "config" if isinstance(exc, ConfigError) else "domain"
        print(f"{kind} error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
