"""Command line: ``run``, ``check-potential`` and ``dispersion``.

Exit codes: 0 success, 1 numerical failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import wellposed
from .errors import AdmissibilityError, ConfigError, StepFailure
from .harness import config_from_dict, dispersion_omega, run
from .potential import potential_from_config


def _read_json(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def _cmd_run(args):
    raw = _read_json(args.config)
    if args.steps is not None:
        raw["steps"] = args.steps
    if args.out is not None:
        raw.setdefault("output", {})["out_dir"] = args.out
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.workers is not None:
        raw["workers"] = args.workers
    config = config_from_dict(raw, base_dir=Path(args.config).parent)
    log = None if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    try:
        result = run(config, log=log)
    except StepFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        out = Path(config.output.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(
            json.dumps(
                {"status": "step_failure", "exit_code": 1, "step": exc.step_index, "site": list(exc.site),
                 "residual": exc.residual, "config": config.to_dict()},
                indent=2,
            )
            + "\n"
        )
        return 1
    s = result.summary
    print(json.dumps({"out_dir": str(result.out_dir), "max_drift": s["max_drift"],
                      "max_solver_iterations": s["max_solver_iterations"],
                      "energy_mode": s["energy_mode"]}))
    return 0


def _cmd_check_potential(args):
    raw = _read_json(args.config)
    pot_spec = raw.get("potential", raw)
    potential = potential_from_config(pot_spec, Path(args.config).parent)
    tau = args.tau
    if tau is None and ("tau" in raw or "ratio" in raw) and "shape" in raw:
        tau = config_from_dict({**raw, "steps": raw.get("steps", 1)}, Path(args.config).parent).resolved_tau()
    if tau is not None and not tau > 0:
        raise ConfigError("--tau must be positive")
    report = wellposed.stability_report(potential, tau, args.scan_domain, args.grid)
    print(json.dumps(report.to_json_dict(), indent=2))
    return 0


def _cmd_dispersion(args):
    raw = _read_json(args.config)
    config = config_from_dict({**raw, "steps": raw.get("steps", 1)}, Path(args.config).parent)
    try:
        mode = [int(v) for v in args.mode.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"--mode must be comma-separated integers: {exc}") from exc
    amplitude = 0.0
    if config.initial.get("kind") == "plane_wave":
        amplitude = float(config.initial.get("amplitude", 1.0))
    if args.amplitude is not None:
        amplitude = args.amplitude
    omega = dispersion_omega(config.shape, config.resolved_tau(), config.potential, mode, amplitude)
    print(format(omega, ".17g"))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="lattice-kg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a configured run")
    p.add_argument("--config", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("check-potential", help="print solvability constants as JSON")
    p.add_argument("--config", required=True)
    p.add_argument("--tau", type=float)
    p.add_argument("--scan-domain", type=float, default=wellposed.DEFAULT_SCAN_DOMAIN)
    p.add_argument("--grid", type=int, default=wellposed.DEFAULT_GRID)
    p.set_defaults(func=_cmd_check_potential)

    p = sub.add_parser("dispersion", help="print the plane-wave frequency for a mode")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", required=True)
    p.add_argument("--amplitude", type=float)
    p.set_defaults(func=_cmd_dispersion)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, AdmissibilityError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
