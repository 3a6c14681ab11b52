"""Command-line experiment runner.

    plcml <subcommand> [--config FILE] [--set key.path=value ...] [--seed N]
                       [--out DIR] [--threads N]

Exit status: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import shutil
import sys
import traceback
from pathlib import Path

from . import __version__
from . import config as cfgmod

SUBCOMMANDS = ("channel-gen", "noise-cluster", "gan-train", "ae-ser", "route-sim", "diagnose")
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="plcml", description="PLC emulation and ML experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS + ("validate",):
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config file (missing keys take defaults)")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted-path override, repeatable")
        s.add_argument("--seed", type=int, help="root seed")
        s.add_argument("--out", help="output directory")
        s.add_argument("--threads", type=int, help="BLAS thread cap")
    return p


def resolve_args(args) -> dict:
    raw = cfgmod.load(args.config) if args.config else {}
    raw = cfgmod.apply_overrides(raw, args.set)
    for key, value in (("seed", args.seed), ("output_dir", args.out), ("threads", args.threads)):
        if value is not None:
            raw[key] = value
    return cfgmod.resolve(raw)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _versions() -> dict:
    import numpy
    import scipy
    return {"plcml": __version__, "numpy": numpy.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def run(command: str, cfg: dict) -> Path:
    """Run one subcommand; artifacts appear in <output_dir>/<command>/ only on success."""
    from . import pipelines

    section, runner = pipelines.RUNNERS[command]
    root = Path(cfg["output_dir"])
    target = root / command
    staging = root / f".staging-{command}"
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir(parents=True)
    try:
        written = runner(cfg[section], cfg["seed"], staging)
        hashed = {k: v for k, v in cfg.items() if k != "output_dir"}
        manifest = {
            "subcommand": command,
            "seed": cfg["seed"],
            "config_hash": cfgmod.config_hash(hashed),
            "config": {"seed": cfg["seed"], "threads": cfg["threads"], section: cfg[section]},
            "artifacts": [{"file": name, "sha256": _sha256(staging / name)} for name in written],
            "versions": _versions(),
        }
        (staging / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    if target.exists():
        shutil.rmtree(target)
    staging.rename(target)
    return target


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = resolve_args(args)
    except cfgmod.ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print(json.dumps(cfg, indent=1))
        return EXIT_OK
    # BLAS reads these when numpy is first imported
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(cfg["threads"]))
    try:
        target = run(args.command, cfg)
    except Exception as exc:  # runtime failure of the experiment itself
        traceback.print_exc()
        print(f"{args.command} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"{args.command}: artifacts in {target}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
