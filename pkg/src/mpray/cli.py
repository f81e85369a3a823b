"""``mpray`` command line.

Exit codes: 0 success, 1 a check failed, 2 usage or configuration error, 3 numerical or
geometric failure (non-convergence, trapped ray, invalid metric).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys as _sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__, checks
from .action import ShootingError, boundary_action_table
from .config import ConfigError, RunConfig, from_dict, load_config
from .fieldexpr.jet import FieldDomainError
from .fieldexpr.parser import ExprSyntaxError
from .flow import Flow, NumericalFailure
from .geometry import GeometryError
from .measures import curvature_bound, santalo_residual
from .quadrature import boundary_fan, fan_from_angles, phase_quadrature, ray_state
from .transform import RayTransform, TensorTriple, sinogram_csv

log = logging.getLogger("mpray")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _triple(sys, spec: dict) -> TensorTriple:
    return TensorTriple.build(sys.dim, h=spec.get("h"), beta=spec.get("beta"), V=spec.get("V", 0.0))


class Runner:
    """Shared state for one invocation: config, output directory, run record."""

    def __init__(self, cfg: RunConfig, out: Path, deterministic: bool):
        self.cfg = cfg
        self.sys = cfg.system
        self.out = out
        self.deterministic = deterministic
        self.outputs: list[str] = []
        self.checks: list[checks.Check] = []
        self.summary: dict = {}

    @property
    def tol(self) -> dict:
        i = self.cfg["integrator"]
        return {"rtol": i["rtol"], "atol": i["atol"]}

    def write(self, name: str, text: str) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / name).write_text(text)
        self.outputs.append(name)
        log.info("wrote %s", self.out / name)

    def record(self, command: str, started: float) -> dict:
        rec = {
            "command": command,
            "version": __version__,
            "config": self.cfg.echo(),
            "system": self.sys.describe(),
            "checks": [c.as_dict() for c in self.checks],
            "passed": all(c.passed for c in self.checks),
            "outputs": sorted(self.outputs),
            "summary": self.summary,
        }
        if not self.deterministic:
            rec["wall_time_s"] = round(time.perf_counter() - started, 3)
        return rec


# ---------------------------------------------------------------------------
# Subcommands

def cmd_verify(r: Runner) -> int:
    g = r.cfg["grids"]
    r.checks = checks.run_all(r.sys, r.cfg.seed, quick=r.cfg["verify"]["quick"], fan=g["fan"], phase=g["phase"],
                              curvature_fan=g["curvature_fan"], **r.tol)
    for c in r.checks:
        print(c.line())
    return EXIT_OK if all(c.passed for c in r.checks) else EXIT_FAIL


def cmd_integrate(r: Runner) -> int:
    p = r.cfg["integrate"]
    if "x" in p or "v" in p:
        if "x" not in p or "v" not in p:
            raise ConfigError("give both x and v", "/integrate")
        x, v = np.array(p["x"], float), np.array(p["v"], float)
    else:
        x, v = ray_state(r.sys, p["boundary_angle"], p["direction_angle"])
    flow = Flow(r.sys, max_steps=r.cfg["integrator"]["max_steps"], **r.tol)
    tr = flow.run(x, v, t_max=p.get("t_max"), stop_at_exit=p["stop_at_exit"])
    r.write("trajectory.csv", tr.to_csv(r.sys))
    r.summary = {"status": tr.status, "steps": len(tr.times) - 1, "energy_drift": tr.energy_drift,
                 "exit_time": None if tr.exit is None else tr.exit.tau}
    if tr.status == "trapped":
        print("mpray: no boundary exit within the default horizon (trapped ray)", file=_sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _fan(r: Runner, rays):
    if rays is not None:
        return fan_from_angles(r.sys, rays)
    return boundary_fan(r.sys, *r.cfg["grids"]["fan"])


def cmd_transform(r: Runner) -> int:
    p = r.cfg["transform"]
    fan = _fan(r, p.get("rays"))
    triples = [_triple(r.sys, t) for t in p["triples"]]
    vals, tau = RayTransform(r.sys, triples, weight=p["weight"], **r.tol).on_fan(fan)
    r.write("sinogram.csv", sinogram_csv(fan, vals, tau))
    r.summary = {"rays": len(fan), "triples": len(triples)}
    return EXIT_OK


def cmd_action(r: Runner) -> int:
    p = r.cfg["action"]
    table = boundary_action_table(r.sys, p["angles"], p["min_separation"])
    r.write("action_table.csv", table.to_csv())
    r.summary = {"angles": len(p["angles"])}
    return EXIT_OK


def cmd_santalo(r: Runner) -> int:
    g = r.cfg["grids"]
    f = _triple(r.sys, r.cfg["santalo"]["integrand"])
    res = santalo_residual(r.sys, f, boundary_fan(r.sys, *g["fan"]), phase_quadrature(r.sys, *g["phase"]))
    r.write("santalo.json", _dump_json(res.as_dict()))
    r.summary = {"relative_gap": res.relative_gap}
    return EXIT_OK


def cmd_curvature(r: Runner) -> int:
    res = curvature_bound(r.sys, *r.cfg["grids"]["curvature_fan"], n_w=r.cfg["curvature"]["n_w"])
    r.write("curvature.json", _dump_json(res.as_dict()))
    r.summary = {"value": res.value, "verdict_le_4": res.verdict}
    return EXIT_OK


COMMANDS = {
    "verify": (cmd_verify, "run the full battery of identity checks"),
    "integrate": (cmd_integrate, "integrate one trajectory and write trajectory.csv"),
    "transform": (cmd_transform, "ray transform over a boundary fan, written to sinogram.csv"),
    "action": (cmd_action, "boundary action table, written to action_table.csv"),
    "santalo": (cmd_santalo, "both sides of the Santalo formula, written to santalo.json"),
    "curvature": (cmd_curvature, "curvature functional estimate, written to curvature.json"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration (default: {\"system\": \"SYS-E\"})")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory (default: current directory)")
    common.add_argument("--seed", type=int, metavar="N", help="RNG seed, overrides the config (default 42)")
    common.add_argument("--threads", type=int, metavar="N", default=1,
                        help="worker threads for compiled kernels (default 1)")
    common.add_argument("--deterministic", action="store_true",
                        help="fixed summation order and no wall-clock fields, for byte-identical outputs")
    parser = argparse.ArgumentParser(
        prog="mpray", description="Ray transforms, actions and measures for MP-systems.",
        epilog="Set MPRAY_LOG (DEBUG, INFO, WARNING, ...) to control logging on stderr.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (_fn, help_) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_, description=help_)
    return parser


def _setup_logging() -> None:
    level = os.environ.get("MPRAY_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=_sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _set_threads(n: int) -> None:
    if n < 1:
        raise ConfigError("--threads must be at least 1")
    import numba

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # threading-layer probing is noisy on some platforms
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    started = time.perf_counter()
    try:
        _set_threads(args.threads)
        cfg = load_config(args.config) if args.config else from_dict({"system": "SYS-E"})
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be nonnegative", "/seed")
            cfg.seed = args.seed
        runner = Runner(cfg, Path(args.out), args.deterministic)
        cfg.system.validate()
        code = COMMANDS[args.command][0](runner)
    except (ConfigError, ExprSyntaxError) as exc:
        print(f"mpray: configuration error: {exc}", file=_sys.stderr)
        return EXIT_USAGE
    except (GeometryError, NumericalFailure, ShootingError, FieldDomainError) as exc:
        print(f"mpray: {type(exc).__name__}: {exc}", file=_sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"mpray: error: {exc}", file=_sys.stderr)
        return EXIT_USAGE
    runner.write("run_record.json", _dump_json(runner.record(args.command, started)))
    return code


if __name__ == "__main__":
    raise SystemExit(main())
