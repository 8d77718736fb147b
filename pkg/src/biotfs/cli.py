"""Command-line front end.

Subcommands: estimate, solve, sweep, verify. Exit codes: 0 success, 2
configuration error, 3 numerical divergence, 4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, default_config, load_config
from .experiment import (
    dump_system,
    estimate_report,
    solve_report,
    sweep_report,
    verify_report,
    _problem,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_VERIFY = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biotfs",
        description=(
            "Fixed-stress splitting solver for impermeable poroelasticity "
            "with an a priori optimal stabilization parameter."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="configuration file (INI sections)")
        p.add_argument("--mesh-n", type=int, help="restrict to one mesh resolution")
        p.add_argument("--seed", type=int, help="override the spectral seed")
        p.add_argument(
            "--mode", choices=("fine", "coarse"), help="power iteration tolerance mode"
        )
        p.add_argument("--out", type=Path, help="output path (default: stdout)")
        p.add_argument(
            "--dump-matrices",
            type=Path,
            metavar="DIR",
            help="dump reduced operators in Matrix Market format per mesh",
        )

    p_est = sub.add_parser("estimate", help="spectral estimates and optimal parameters")
    common(p_est)

    p_solve = sub.add_parser("solve", help="time march one mesh at a stabilization")
    common(p_solve)
    p_solve.add_argument(
        "--L",
        default=None,
        help="stabilization parameter value or 'optimal' (default: config)",
    )

    p_sweep = sub.add_parser("sweep", help="average iterations over the D grid")
    common(p_sweep)

    p_verify = sub.add_parser("verify", help="dense-oracle verification battery")
    common(p_verify)

    return parser


def _load(args):
    cfg = load_config(args.config) if args.config else default_config()
    return cfg


def _emit(payload: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(payload)
        if not payload.endswith("\n"):
            sys.stdout.write("\n")
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(payload, encoding="utf-8")


def _dump(cfg, ns, directory: Path) -> None:
    for n in ns:
        dump_system(_problem(cfg, n), directory / f"n{n}")


def _mesh_selection(cfg, args):
    if args.mesh_n is not None:
        if args.mesh_n < 1:
            raise ConfigError(f"--mesh-n must be positive, got {args.mesh_n}")
        return (args.mesh_n,)
    return cfg.mesh_ns


def cmd_estimate(args) -> int:
    cfg = _load(args)
    ns = _mesh_selection(cfg, args)
    if args.dump_matrices:
        _dump(cfg, ns, args.dump_matrices)
    report = estimate_report(cfg, mesh_ns=ns, mode=args.mode, seed=args.seed)
    _emit(json.dumps(report, indent=2), args.out)
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = _load(args)
    ns = _mesh_selection(cfg, args)
    if len(ns) != 1:
        raise ConfigError(
            "solve needs a single mesh; pass --mesh-n or configure one value"
        )
    if args.dump_matrices:
        _dump(cfg, ns, args.dump_matrices)
    L_spec = args.L
    if L_spec is not None and L_spec != "optimal":
        try:
            L_spec = float(L_spec)
        except ValueError:
            raise ConfigError(f"--L expects a number or 'optimal', got {args.L!r}")
    report = solve_report(cfg, ns[0], L_spec=L_spec, mode=args.mode, seed=args.seed)
    _emit(json.dumps(report, indent=2), args.out)
    return EXIT_DIVERGED if report["diverged"] else EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    ns = _mesh_selection(cfg, args)
    if args.dump_matrices:
        _dump(cfg, ns, args.dump_matrices)
    report = sweep_report(cfg, mesh_ns=ns)
    csv_text = report.to_csv_text()
    if args.out is None:
        sys.stdout.write(csv_text)
    else:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(csv_text, encoding="utf-8")
        sidecar = args.out.with_suffix(args.out.suffix + ".json")
        sidecar.write_text(json.dumps(report.to_json_dict(), indent=2), encoding="utf-8")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _load(args)
    if args.dump_matrices:
        _dump(cfg, (4, 8), args.dump_matrices)
    report = verify_report(cfg)
    width = max(len(c["name"]) for c in report["checks"])
    lines = []
    for c in report["checks"]:
        status = "PASS" if c["passed"] else "FAIL"
        lines.append(
            f"{c['name']:<{width}}  measured={c['measured']:.6e}  "
            f"{c['op']} {c['bound']:.6e}  {status}"
        )
    lines.append("verdict: " + ("PASS" if report["passed"] else "FAIL"))
    table = "\n".join(lines) + "\n"
    sys.stdout.write(table)
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(report, indent=2), encoding="utf-8")
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "estimate": cmd_estimate,
        "solve": cmd_solve,
        "sweep": cmd_sweep,
        "verify": cmd_verify,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
