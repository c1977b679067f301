"""Command-line front end.

Runs a boundary sweep on a channel config and writes one CSV row per
boundary point (plus an optional JSON-lines mirror).  Exit codes: 0 success,
2 configuration error, 3 solver failure, 4 infeasible demands.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import __version__, covopt, regions
from .model import ConfigError, NetworkInstance, load_channels, table1_document, validate
from .regions import BoundaryPoint

log = logging.getLogger("fdharvest")

SCENARIOS = ("bc-region", "d2d-region", "ps-rate-energy", "ts-rate-energy", "cross-rate-energy", "joint")
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INFEASIBLE = 0, 2, 3, 4
LOG_ENV = "FDHARVEST_LOG"


@dataclass
class RunSpec:
    scenario: str = "bc-region"
    signaling: str = "both"
    n_directions: int = 10
    eta_points: int = 101
    bisect_tol: float = 1e-6
    randomizations: int = 1000
    seed: int = 0
    output: str | None = None
    config: str | None = None
    baseline: str = "none"
    jsonl: str | None = None
    node: int = 1
    info: int = 2
    energy: int = 1
    both_roles: bool = False
    bs_silent: bool = False
    spacing: str = "linear"
    weights: list[list[float]] = field(default_factory=list)
    timing: bool = False
    workers: int = 1
    psi: list[float] | None = None
    sigma: list[float] | None = None
    kappa: float | None = None

    def check(self) -> list[str]:
        errs = []
        if self.scenario not in SCENARIOS:
            errs.append(f"unknown scenario {self.scenario!r}")
        if self.signaling not in ("proper", "improper", "both"):
            errs.append(f"unknown signaling {self.signaling!r}")
        if self.baseline not in ("none", "dpc"):
            errs.append(f"unknown baseline {self.baseline!r}")
        if self.baseline == "dpc" and self.scenario != "bc-region":
            errs.append("the dpc baseline applies to bc-region only")
        for name in ("n_directions", "eta_points", "randomizations", "workers"):
            if getattr(self, name) <= 0:
                errs.append(f"{name} must be positive")
        if self.n_directions < 2:
            errs.append("n_directions must be at least 2")
        if self.eta_points < 2:
            errs.append("eta_points must be at least 2")
        if not self.bisect_tol > 0:
            errs.append("bisect_tol must be positive")
        if self.seed < 0:
            errs.append("seed must be nonnegative")
        if self.scenario == "joint" and not self.weights:
            errs.append("joint needs at least one --weights list")
        if self.info == self.energy:
            errs.append("info and energy nodes must differ")
        for name in ("node", "info", "energy"):
            if getattr(self, name) not in (1, 2):
                errs.append(f"{name} must be 1 or 2")
        return errs

    @property
    def signalings(self) -> tuple[str, ...]:
        return regions.SIGNALINGS if self.signaling == "both" else (self.signaling,)


# ------------------------------------------------------------------ output

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int,)):
        return str(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.12g}"


def _label(lbl: str) -> str:
    return lbl.replace("R'", "Rd").replace("E'", "Ed")


def objective_columns(scenario: str, K: int, node: int = 1) -> list[str]:
    if scenario == "bc-region":
        return ["R_1", "R_2"]
    if scenario == "d2d-region":
        return ["Rd_1", "Rd_2"]
    if scenario in ("ps-rate-energy", "ts-rate-energy"):
        return [f"Rd_{node}", f"Ed_{node}"]
    if scenario == "cross-rate-energy":
        return ["info_node", "energy_node", "R_info", "E_energy"]
    return ["Rd_1", "Rd_2"] + [f"R_{k + 1}" for k in range(K)] + [f"E_{k + 1}" for k in range(K)]


def columns(scenario: str, K: int, node: int = 1, timing: bool = False) -> list[str]:
    n_w = 2 * K + 2 if scenario == "joint" else 2
    cols = ["scenario", "signaling"] + [f"w_{i + 1}" for i in range(n_w)] + ["eta"]
    cols += objective_columns(scenario, K, node)
    cols += ["gamma", "lambda", "rank_one", "ranks", "feasible_samples", "status"]
    if timing:
        cols.append("wall_time")
    return cols


def point_record(p: BoundaryPoint, scenario: str, K: int, node: int, timing: bool) -> dict:
    rec: dict = {"scenario": scenario, "signaling": p.signaling}
    for i, w in enumerate(p.weights):
        rec[f"w_{i + 1}"] = float(w)
    rec["eta"] = p.eta
    if scenario == "cross-rate-energy":
        rec["info_node"] = int(p.labels[0].split("_")[1])
        rec["energy_node"] = int(p.labels[1].split("_")[1])
        rec["R_info"], rec["E_energy"] = p.values
    else:
        for lbl, v in zip(p.labels, p.values):
            rec[_label(lbl)] = float(v)
    rec.update(gamma=p.gamma, **{"lambda": p.Lambda}, rank_one=bool(p.rank_one), ranks=p.ranks,
               feasible_samples=int(p.feasible_samples), status=p.status)
    if timing:
        rec["wall_time"] = p.runtime
    return rec


def write_csv(records: Sequence[dict], cols: Sequence[str], stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(cols)
    for rec in records:
        w.writerow([_fmt(rec.get(c)) if not isinstance(rec.get(c), str) else rec[c] for c in cols])


def write_jsonl(records: Sequence[dict], cols: Sequence[str], stream) -> None:
    for rec in records:
        out = {}
        for c in cols:
            v = rec.get(c)
            out[c] = None if isinstance(v, float) and math.isnan(v) else v
        stream.write(json.dumps(out, sort_keys=False) + "\n")


# --------------------------------------------------------------- execution

def load_instance(path: str | None, **overrides) -> NetworkInstance:
    doc = table1_document() if path is None else path
    inst = load_channels(doc)
    changes = {k: (tuple(v) if isinstance(v, list) else v) for k, v in overrides.items() if v is not None}
    if changes:
        try:
            inst = inst.with_config(**changes)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
    problems = validate(inst)
    if problems:
        raise ConfigError("; ".join(problems))
    return inst


def sweep(spec: RunSpec, inst: NetworkInstance) -> list[BoundaryPoint]:
    """Run the sweep selected by ``spec``."""
    kw = dict(tol=spec.bisect_tol, n_samples=spec.randomizations, seed=spec.seed)
    sig = spec.signalings
    if spec.scenario == "bc-region":
        pts = regions.scan_rate_region("bc-region", inst, spec.n_directions, sig, spacing=spec.spacing,
                                       workers=spec.workers, **kw).points
        if spec.baseline == "dpc":
            pts += regions.scan_dpc_region(inst, spec.n_directions, tol=spec.bisect_tol,
                                           spacing=spec.spacing, workers=spec.workers).points
        return pts
    if spec.scenario == "d2d-region":
        return regions.scan_rate_region("d2d-region", inst, spec.n_directions, sig, spacing=spec.spacing,
                                        workers=spec.workers, bs_silent=spec.bs_silent, **kw).points
    if spec.scenario == "ps-rate-energy":
        return regions.ps_rate_energy(inst, spec.node - 1, spec.n_directions, spec.eta_points, signaling=sig,
                                      spacing=spec.spacing, workers=spec.workers, bs_silent=spec.bs_silent,
                                      **kw).points
    if spec.scenario == "ts-rate-energy":
        ts = regions.ts_rate_energy(inst, spec.node - 1, bs_silent=spec.bs_silent, **kw)
        return [ts.id_point, ts.eh_point]
    if spec.scenario == "cross-rate-energy":
        return regions.cross_rate_energy(inst, spec.info - 1, spec.energy - 1, spec.n_directions, signaling=sig,
                                         spacing=spec.spacing, both_roles=spec.both_roles, workers=spec.workers,
                                         bs_silent=spec.bs_silent, **kw).points
    pts = []
    for beta in spec.weights:
        pts += regions.joint_region(inst, beta, sig, **kw)
    return pts


def run(spec: RunSpec, stdout=None) -> int:
    """Execute ``spec``; returns the exit status."""
    stdout = stdout or sys.stdout
    errs = spec.check()
    if errs:
        log.error("invalid run: %s", "; ".join(errs))
        return EXIT_CONFIG
    try:
        inst = load_instance(spec.config, Psi=spec.psi, Sigma=spec.sigma, kappa=spec.kappa)
        if spec.scenario == "joint":
            n = 2 * inst.config.K + 2
            bad = [w for w in spec.weights if len(w) != n]
            if bad:
                raise ConfigError(f"joint weights need {n} entries, got {len(bad[0])}")
        t0 = time.perf_counter()
        points = sweep(spec, inst)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except ValueError as exc:
        log.error("invalid input: %s", exc)
        return EXIT_CONFIG
    except covopt.ScenarioInfeasible as exc:
        log.error("infeasible: %s", exc)
        return EXIT_INFEASIBLE
    except covopt.SolverFailure as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER
    log.info("%d boundary points in %.2f s", len(points), time.perf_counter() - t0)

    K = inst.config.K
    cols = columns(spec.scenario, K, spec.node, spec.timing)
    records = [point_record(p, spec.scenario, K, spec.node, spec.timing) for p in points]
    buf = io.StringIO()
    write_csv(records, cols, buf)
    try:
        if spec.output in (None, "-"):
            stdout.write(buf.getvalue())
        else:
            Path(spec.output).write_text(buf.getvalue())
        if spec.jsonl:
            with open(spec.jsonl, "w") as fh:
                write_jsonl(records, cols, fh)
    except OSError as exc:
        log.error("cannot write output: %s", exc)
        return EXIT_CONFIG

    statuses = [p.status for p in points]
    if any(s.startswith("infeasible") for s in statuses):
        log.error("demands are unattainable for %d point(s)", sum(s.startswith("infeasible") for s in statuses))
        return EXIT_INFEASIBLE
    if any(s != "ok" for s in statuses):
        log.error("%d point(s) failed", sum(s != "ok" for s in statuses))
        return EXIT_SOLVER
    return EXIT_OK


def emit_table1_config(path: str | Path) -> None:
    """Write the bundled Table I channels and default parameters as a JSON config."""
    Path(path).write_text(json.dumps(table1_document(), indent=2) + "\n")


def verify(config: str | None, stdout=None) -> int:
    """Validate a config and run a one-direction smoke optimisation."""
    stdout = stdout or sys.stdout
    try:
        inst = load_channels(table1_document() if config is None else config)
    except ConfigError as exc:
        stdout.write(f"FAIL load: {exc}\n")
        return EXIT_CONFIG
    problems = validate(inst)
    if problems:
        for msg in problems:
            stdout.write(f"FAIL validate: {msg}\n")
        return EXIT_CONFIG
    stdout.write("PASS validate\n")
    try:
        sc = covopt.scenario_cellular(inst, (0.5, 0.5))
        res = covopt.chebyshev_bisect(sc, inst, tol=1e-4, n_samples=200)
    except covopt.ScenarioInfeasible as exc:
        stdout.write(f"FAIL smoke: scenario-infeasible ({exc})\n")
        return EXIT_INFEASIBLE
    except covopt.SolverFailure as exc:
        stdout.write(f"FAIL smoke: solver-failure ({exc})\n")
        return EXIT_SOLVER
    stdout.write(f"PASS smoke: bc-region value {res.value:.6g}\n")
    return EXIT_OK


# ------------------------------------------------------------------ parser

def _weights(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad weight list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fdharvest", description=__doc__.splitlines()[0])
    p.add_argument("command", nargs="?", choices=("run", "verify"), default="run")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--scenario", default="bc-region", help=", ".join(SCENARIOS))
    p.add_argument("--signaling", default="both", help="proper, improper or both")
    p.add_argument("--directions", type=int, default=10, dest="n_directions")
    p.add_argument("--eta-points", type=int, default=101)
    p.add_argument("--bisect-tol", type=float, default=1e-6)
    p.add_argument("--randomizations", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="JSON channel config (default: bundled Table I set)")
    p.add_argument("--output", help="CSV path (default: stdout)")
    p.add_argument("--jsonl", help="also write a JSON-lines mirror here")
    p.add_argument("--baseline", default="none", help="none or dpc")
    p.add_argument("--emit-example-config", metavar="PATH", help="write the Table I config and exit")
    p.add_argument("--node", type=int, default=1, help="D2D node for ps/ts scenarios")
    p.add_argument("--info", type=int, default=2, help="decoding node for cross-rate-energy")
    p.add_argument("--energy", type=int, default=1, help="harvesting node for cross-rate-energy")
    p.add_argument("--both-roles", action="store_true", help="cross-rate-energy: also sweep swapped roles")
    p.add_argument("--bs-silent", action="store_true", help="switch the BS off in D2D scenarios")
    p.add_argument("--spacing", default="linear", choices=("linear", "angle"))
    p.add_argument("--weights", type=_weights, action="append", default=[],
                   help="comma-separated joint weights; repeat for several points")
    p.add_argument("--psi", type=_weights, help="override the cellular energy demands, e.g. 0,0")
    p.add_argument("--sigma", type=_weights, help="override the cellular rate demands, e.g. 0.7,0.7")
    p.add_argument("--kappa", type=float, help="override the transmitter-noise factor")
    p.add_argument("--timing", action="store_true", help="add a wall_time column")
    p.add_argument("--workers", type=int, default=1)
    return p


def _setup_logging() -> None:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.emit_example_config:
        try:
            emit_table1_config(args.emit_example_config)
        except OSError as exc:
            log.error("cannot write %s: %s", args.emit_example_config, exc)
            return EXIT_CONFIG
        return EXIT_OK
    if args.command == "verify":
        return verify(args.config)
    spec = RunSpec(**{k: v for k, v in vars(args).items() if k not in ("command", "emit_example_config")})
    return run(spec)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
