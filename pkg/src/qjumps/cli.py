"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import (
    PRESETS,
    ConfigError,
    NumericalAbort,
    conditioned_report,
    emit_bloch_locus,
    make_config,
    run_experiment,
    run_scaling,
    write_scaling,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", help="YAML file of configuration keys")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--scheme")
    p.add_argument("--omega", type=float, help="Rabi frequency in units of gamma")
    p.add_argument("--gamma", type=float)
    p.add_argument("--hwhm", type=float, help="filter half-width")
    p.add_argument("--n-max", dest="n_max", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--trajectories", type=int)
    p.add_argument("--duration", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=float)
    p.add_argument("--snapshot-interval", dest="snapshot_interval", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="qjumps", description="Quantum-jump simulations of a driven two-level atom.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(sub.add_parser("run", help="simulate an ensemble and write CSV/JSON"))
    sc = sub.add_parser("scaling", help="error-versus-Omega regression")
    _common(sc)
    sc.add_argument("--omegas", type=float, nargs="+")
    lo = sub.add_parser("locus", help="Bloch-sphere locus CSV")
    lo.add_argument("--out", required=True)
    lo.add_argument("--points", type=int, default=200)
    _common(sub.add_parser("conditioned", help="atomic state conditioned on a passed photon"))
    return ap


def _config(args, **extra):
    keys = ("scheme", "omega", "gamma", "hwhm", "n_max", "seed", "out", "trajectories", "duration",
            "workers", "burn_in", "snapshot_interval")
    over = {k: getattr(args, k) for k in keys}
    over.update(extra)
    return make_config(args.preset, args.config, **over)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "locus":
            if args.points < 4:
                raise ConfigError("--points must be at least 4")
            rows = emit_bloch_locus(args.out, args.points)
            print(f"wrote {len(rows)} locus rows to {args.out}")
        elif args.command == "run":
            res = run_experiment(_config(args))
            s = res.summary
            if "statistics" in s:
                print(json.dumps({"events": s["events"], "channel_rates": s["channel_rates"],
                                  "statistics": s["statistics"]}, sort_keys=True))
            else:
                print(json.dumps(s, sort_keys=True))
        elif args.command == "scaling":
            cfg = _config(args, omegas=args.omegas)
            rep = run_scaling(cfg)
            print(f"exponent {rep.exponent:.4f} +- {rep.exponent_stderr:.4f}, "
                  f"coefficient {rep.coefficient:.4g} +- {rep.coefficient_stderr:.2g}, chi2/dof {rep.chi2_dof:.3g}")
            if cfg.out:
                Path(cfg.out).parent.mkdir(parents=True, exist_ok=True)
                write_scaling(cfg.out, rep)
        else:
            cfg = _config(args, scheme="conditioned", **({"seed": 0} if args.seed is None else {}))
            rep = conditioned_report(cfg)
            text = json.dumps(rep, indent=2, sort_keys=True)
            if cfg.out:
                Path(cfg.out).parent.mkdir(parents=True, exist_ok=True)
                Path(cfg.out).write_text(text + "\n")
            print(text)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK
