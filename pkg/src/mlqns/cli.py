"""Command-line front end: ``qns run``, ``qns tabulate`` and ``qns levels``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .campaign import CampaignConfig, run_campaign, tabulate
from .errors import ConfigError

EXIT_OK = 0
EXIT_POINT_FAILURES = 1
EXIT_CONFIG = 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qns", description="Multi-level spin-locking noise spectroscopy")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a campaign and write spectra, traces and a manifest")
    run.add_argument("config", type=Path)
    run.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    run.add_argument("--out", type=Path, default=None, help="output directory")
    run.add_argument("--seed-offset", type=int, default=0, help="added to the config seed")
    run.add_argument("--quiet", action="store_true")

    tab = sub.add_parser("tabulate", help="static curve tables from the dressing engine")
    tab.add_argument("sub", choices=["rabi", "participation", "pumpprobe"])
    tab.add_argument("config", type=Path)
    tab.add_argument("--out", type=Path, default=None, help="write files here instead of stdout")

    lev = sub.add_parser("levels", help="print the undriven level structure as JSON")
    lev.add_argument("config", type=Path)
    return p


def _cmd_run(args) -> int:
    cfg = CampaignConfig.load(args.config)
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    out = args.out or (Path(cfg.output_dir) if cfg.output_dir else Path("qns_out") / cfg.name)

    def progress(r):
        if not args.quiet:
            msg = "ok" if r["status"] == "ok" else r["error"]
            print(f"target {r['target']} point {r['index']:3d} A={r['amplitude']:.3f} MHz: {msg}",
                  file=sys.stderr)

    res = run_campaign(cfg, out_dir=out, workers=args.workers, seed_offset=args.seed_offset,
                       progress=progress)
    print(f"wrote {len(res.files) + 1} files to {out}")
    if res.failures:
        print(f"{len(res.failures)} point(s) failed; see manifest.json", file=sys.stderr)
        return EXIT_POINT_FAILURES
    return EXIT_OK


def _cmd_tabulate(args) -> int:
    cfg = CampaignConfig.load(args.config)
    tables = tabulate(args.sub, cfg)
    if args.out is None:
        for i, (name, text) in enumerate(tables.items()):
            if len(tables) > 1:
                print(("" if i == 0 else "\n") + f"# {name}")
            sys.stdout.write(text)
        return EXIT_OK
    args.out.mkdir(parents=True, exist_ok=True)
    for name, text in tables.items():
        (args.out / name).write_text(text)
        print(args.out / name)
    return EXIT_OK


def _cmd_levels(args) -> int:
    cfg = CampaignConfig.load(args.config)
    print(cfg.levels().to_json(indent=2, sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {"run": _cmd_run, "tabulate": _cmd_tabulate, "levels": _cmd_levels}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"qns: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
