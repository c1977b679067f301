"""Boundary assembly: direction scans, rate-energy curves and the joint problem."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import covopt
from .covopt import (
    CovOptResult,
    Scenario,
    ScenarioInfeasible,
    chebyshev_bisect,
    dpc_bisect,
    scenario_cellular,
    scenario_cross,
    scenario_d2d,
    scenario_joint,
    scenario_ps,
)
from .model import NetworkInstance
from .pseudoopt import ImproperResult, beamformers_of, build_improper_system, improper_bisect, improper_design
from .stats import TxDesign

log = logging.getLogger(__name__)

SIGNALINGS = ("proper", "improper")


@dataclass
class BoundaryPoint:
    scenario: str
    signaling: str
    weights: tuple[float, ...]
    labels: tuple[str, ...]
    values: tuple[float, ...]
    eta: float | None = None
    gamma: float = float("nan")  # proper Chebyshev value
    Lambda: float = float("nan")  # improper Chebyshev value
    rank_one: bool = True
    ranks: str = ""
    feasible_samples: int = 0
    runtime: float = 0.0
    status: str = "ok"
    design: TxDesign | None = field(default=None, repr=False)
    extra: dict = field(default_factory=dict, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def value(self, label: str) -> float:
        return self.values[self.labels.index(label)]


@dataclass
class RegionSweep:
    scenario: str
    points: list[BoundaryPoint]

    def select(self, signaling: str, ok_only: bool = True) -> list[BoundaryPoint]:
        return [p for p in self.points if p.signaling == signaling and (p.ok or not ok_only)]

    def pareto(self, signaling: str) -> list[BoundaryPoint]:
        pts = self.select(signaling)
        keep = pareto_filter([p.values for p in pts])
        return [pts[i] for i in keep]

    def curve(self, signaling: str) -> np.ndarray:
        return np.array([p.values for p in self.select(signaling)])


def pareto_filter(points: Sequence[Sequence[float]]) -> list[int]:
    """Indices of the mutually non-dominated points, first occurrence kept."""
    P = [np.asarray(p, dtype=float) for p in points]
    keep: list[int] = []
    for i, p in enumerate(P):
        dominated = False
        for j, q in enumerate(P):
            if i == j:
                continue
            if np.all(q >= p) and np.any(q > p):
                dominated = True
                break
            if np.array_equal(q, p) and j < i:
                dominated = True
                break
        if not dominated:
            keep.append(i)
    return keep


def direction_grid(n: int, spacing: str = "linear") -> list[tuple[float, float]]:
    """Two-objective weight directions from the first axis to the second.

    ``linear`` spaces ``alpha_1`` uniformly on [0, 1]; ``angle`` uses
    ``(cos^2 t, sin^2 t)`` over a uniform angle grid.
    """
    if n < 2:
        raise ValueError("at least two directions are needed")
    out = []
    for i in range(n):
        if spacing == "linear":
            a1 = 1.0 - i / (n - 1)
        elif spacing == "angle":
            a1 = math.cos(0.5 * math.pi * i / (n - 1)) ** 2
        else:
            raise ValueError(f"unknown spacing {spacing!r}")
        a1 = min(max(a1, 0.0), 1.0)
        if abs(a1) < 1e-15:
            a1 = 0.0
        out.append((a1, 1.0 - a1))
    return out


def _parallel_map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------- stages

@dataclass
class StageResult:
    proper: CovOptResult
    improper: ImproperResult | None
    improper_design: TxDesign | None


def solve_scenario(
    scenario: Scenario,
    instance: NetworkInstance,
    signaling: Sequence[str] = SIGNALINGS,
    tol: float = 1e-6,
    n_samples: int = 1000,
    seed: int = 0,
) -> StageResult:
    """Covariance stage, then (if requested) the pseudo-covariance stage."""
    res = chebyshev_bisect(scenario, instance, tol=tol, n_samples=n_samples, seed=seed)
    if "improper" not in signaling:
        return StageResult(res, None, None)
    if not res.rank_one:
        log.warning("%s: no rank-1 design, improper stage skipped", scenario.kind)
        return StageResult(res, None, None)
    system = build_improper_system(scenario, beamformers_of(instance, res.design), instance.config.K)
    imp = improper_bisect(system, tol=tol, n_samples=max(1, n_samples // 2), seed=seed + 1)
    return StageResult(res, imp, improper_design(instance, res.design, imp))


def _values(scenario: Scenario, instance: NetworkInstance, design: TxDesign, evaluator=None) -> tuple[float, ...]:
    if evaluator is not None:
        return tuple(float(v) for v in evaluator(design))
    from .stats import rates_and_energies

    rep = rates_and_energies(instance, design, ps_eta=_eta_of(scenario))
    out = []
    for o in scenario.objectives:
        out.append(_lookup(rep, o.label))
    return tuple(out)


def _eta_of(scenario: Scenario) -> float | None:
    for o in scenario.objectives:
        if isinstance(o, covopt.RateTerm) and o.label.startswith("R'") and scenario.kind == "ps":
            return o.eta
    return None


def _lookup(rep, label: str) -> float:
    idx = int(label.split("_")[1]) - 1
    if label.startswith("R'"):
        return float(rep.Rd[idx])
    if label.startswith("E'"):
        return float(rep.Ed[idx])
    if label.startswith("R"):
        return float(rep.R[idx])
    return float(rep.E[idx])


def _points(
    kind: str,
    scenario: Scenario,
    instance: NetworkInstance,
    signaling: Sequence[str],
    tol: float,
    n_samples: int,
    seed: int,
    eta: float | None = None,
) -> list[BoundaryPoint]:
    weights = tuple(float(w) for w in scenario.weights)
    labels = tuple(scenario.labels)
    t0 = time.perf_counter()
    try:
        st = solve_scenario(scenario, instance, signaling, tol, n_samples, seed)
    except (ScenarioInfeasible, covopt.SolverFailure) as exc:
        status = "infeasible" if isinstance(exc, ScenarioInfeasible) else "solver-failure"
        nan = tuple(float("nan") for _ in labels)
        return [BoundaryPoint(kind, s, weights, labels, nan, eta, status=f"{status}: {exc}") for s in signaling]
    pr = st.proper
    ranks = ";".join(f"{b}:{r}" for b, r in pr.ranks.items())
    out = []
    if "proper" in signaling:
        out.append(BoundaryPoint(
            kind, "proper", weights, labels, _values(scenario, instance, pr.design), eta,
            gamma=pr.value, Lambda=float("nan"), rank_one=pr.rank_one, ranks=ranks,
            feasible_samples=pr.randomization.feasible, runtime=pr.runtime, design=pr.design,
            extra={"relaxed_gamma": pr.gamma, "randomized": pr.randomization.used},
        ))
    if "improper" in signaling:
        if st.improper is None:
            out.append(BoundaryPoint(kind, "improper", weights, labels, tuple(float("nan") for _ in labels), eta,
                                     gamma=pr.value, status="failed: no rank-1 proper design"))
        else:
            imp = st.improper
            out.append(BoundaryPoint(
                kind, "improper", weights, labels, _values(scenario, instance, st.improper_design), eta,
                gamma=pr.value, Lambda=imp.value, rank_one=pr.rank_one, ranks=ranks + f";S:{imp.rank}",
                feasible_samples=imp.feasible_samples, runtime=time.perf_counter() - t0,
                design=st.improper_design,
                extra={"relaxed_lambda": imp.Lambda, "s": imp.s},
            ))
    return out


# --------------------------------------------------------- rate regions

def scan_rate_region(
    kind: str,
    instance: NetworkInstance,
    n_directions: int = 10,
    signaling: Sequence[str] = SIGNALINGS,
    tol: float = 1e-6,
    n_samples: int = 1000,
    seed: int = 0,
    demands: Sequence[float] | None = None,
    spacing: str = "linear",
    workers: int = 1,
    bs_silent: bool = False,
) -> RegionSweep:
    """Scan a two-user rate region (``bc-region`` or ``d2d-region``).

    ``demands`` are the energy demands ``Psi`` for the cellular region and the
    cellular rate demands ``Sigma`` for the D2D region.
    """
    if kind not in ("bc-region", "d2d-region"):
        raise ValueError(f"unknown region {kind!r}")
    if instance.config.K != 2 and kind == "bc-region":
        raise ValueError("bc-region scans need K = 2; use joint_region for other K")

    def one(item):
        idx, alpha = item
        sc = (scenario_cellular(instance, alpha, demands) if kind == "bc-region"
              else scenario_d2d(instance, alpha, demands, bs_silent=bs_silent))
        return _points(kind, sc, instance, signaling, tol, n_samples, seed + idx)

    dirs = list(enumerate(direction_grid(n_directions, spacing)))
    pts = [p for group in _parallel_map(one, dirs, workers) for p in group]
    return RegionSweep(kind, pts)


def scan_dpc_region(
    instance: NetworkInstance,
    n_directions: int = 10,
    tol: float = 1e-6,
    Psi: Sequence[float] | None = None,
    spacing: str = "linear",
    workers: int = 1,
) -> RegionSweep:
    """DPC baseline: per direction, the better of the two encoding orders."""

    def one(item):
        idx, alpha = item
        t0 = time.perf_counter()
        try:
            res, order = dpc_bisect(instance, alpha, Psi, tol)
        except (ScenarioInfeasible, covopt.SolverFailure) as exc:
            return BoundaryPoint("bc-region", "dpc", tuple(alpha), ("R_1", "R_2"), (math.nan, math.nan),
                                 status=f"failed: {exc}")
        rates = covopt.dpc_rates(instance, res.design, order)
        return BoundaryPoint("bc-region", "dpc", tuple(float(a) for a in alpha), ("R_1", "R_2"),
                             tuple(float(r) for r in rates), gamma=res.value, rank_one=False,
                             ranks=";".join(f"{b}:{r}" for b, r in res.ranks.items()),
                             runtime=time.perf_counter() - t0, design=res.design,
                             extra={"order": order})

    dirs = list(enumerate(direction_grid(n_directions, spacing)))
    return RegionSweep("bc-region", _parallel_map(one, dirs, workers))


def convex_hull_upper(points: np.ndarray) -> np.ndarray:
    """Upper convex hull of 2-D points together with their axis projections, by increasing x."""
    pts = np.asarray(points, dtype=float)
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    if pts.size == 0:
        return pts
    ext = np.vstack([pts, [[0.0, pts[:, 1].max()]], [[pts[:, 0].max(), 0.0]]])
    ext = ext[np.lexsort((-ext[:, 1], ext[:, 0]))]
    hull: list[np.ndarray] = []
    for p in ext:
        while len(hull) >= 2:
            o, a = hull[-2], hull[-1]
            if (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0]) >= 0:
                hull.pop()  # a is not a strict right turn, so it lies under the hull
            else:
                break
        hull.append(p)
    return np.array(hull)


def near_polyline(curve: np.ndarray, target: Sequence[float], rel_tol: float) -> bool:
    """Whether some point of the piecewise-linear ``curve`` is within ``rel_tol`` of ``target`` per coordinate."""
    target = np.asarray(target, dtype=float)
    tol = rel_tol * np.abs(target)
    pts = np.asarray(curve, dtype=float)
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    for p in pts:
        if np.all(np.abs(p - target) <= tol):
            return True
    for a, b in zip(pts[:-1], pts[1:]):
        # feasible interval of the segment parameter for every coordinate
        lo, hi = 0.0, 1.0
        for d in range(target.size):
            da = b[d] - a[d]
            if abs(da) < 1e-15:
                if abs(a[d] - target[d]) > tol[d]:
                    lo, hi = 1.0, 0.0
                continue
            t1 = (target[d] - tol[d] - a[d]) / da
            t2 = (target[d] + tol[d] - a[d]) / da
            lo, hi = max(lo, min(t1, t2)), min(hi, max(t1, t2))
        if lo <= hi:
            return True
    return False


# -------------------------------------------------------- rate-energy

def _golden(f: Callable[[float], float], a: float, b: float, tol: float = 1e-3) -> tuple[float, float]:
    g = (math.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def _ps_value(instance, j, alpha, eta, Sigma, tol, bs_silent=False) -> float:
    try:
        sc = scenario_ps(instance, j, alpha, eta, Sigma, bs_silent)
        gamma, _, _ = covopt.bisect(sc, tol)
        return gamma
    except (ScenarioInfeasible, covopt.SolverFailure):
        return -math.inf


def _improper_ps_value(instance, j, alpha, eta, Sigma, tol, n_samples, seed, bs_silent=False) -> float:
    try:
        sc = scenario_ps(instance, j, alpha, eta, Sigma, bs_silent)
        st = solve_scenario(sc, instance, SIGNALINGS, tol, n_samples, seed)
    except (ScenarioInfeasible, covopt.SolverFailure):
        return -math.inf
    return st.improper.value if st.improper is not None else st.proper.value


def best_eta(
    instance: NetworkInstance,
    j: int,
    alpha: Sequence[float],
    etas: Sequence[float],
    Sigma: Sequence[float] | None = None,
    tol: float = 1e-6,
    coarse_tol: float = 1e-3,
    bs_silent: bool = False,
) -> float:
    """Grid search over ``eta`` followed by one golden-section pass around the best cell."""
    etas = np.asarray(sorted(etas), dtype=float)
    if alpha[1] == 0:
        return 1.0  # rate only: decode everything
    if alpha[0] == 0:
        return 0.0  # energy only: harvest everything
    vals = np.array([_ps_value(instance, j, alpha, e, Sigma, coarse_tol, bs_silent) for e in etas])
    i = int(np.argmax(vals))
    lo = etas[max(i - 1, 0)]
    hi = etas[min(i + 1, etas.size - 1)]
    if hi - lo <= 1e-3:
        return float(etas[i])
    e_star, v_star = _golden(lambda e: _ps_value(instance, j, alpha, e, Sigma, coarse_tol, bs_silent), lo, hi)
    return float(e_star if v_star >= vals[i] else etas[i])


def ps_rate_energy(
    instance: NetworkInstance,
    j: int = 0,
    n_directions: int = 10,
    eta_points: int = 101,
    Sigma: Sequence[float] | None = None,
    signaling: Sequence[str] = SIGNALINGS,
    tol: float = 1e-6,
    n_samples: int = 1000,
    seed: int = 0,
    spacing: str = "linear",
    workers: int = 1,
    bs_silent: bool = False,
) -> RegionSweep:
    """Power-splitting rate-energy frontier ``(R'_j, E'_j)`` of D2D node ``j``."""
    etas = np.linspace(0.0, 1.0, eta_points)

    def one(item):
        idx, alpha = item
        eta = best_eta(instance, j, alpha, etas, Sigma, tol, bs_silent=bs_silent)
        out = []
        if "proper" in signaling:
            sc = scenario_ps(instance, j, alpha, eta, Sigma, bs_silent)
            out += _points("ps-rate-energy", sc, instance, ("proper",), tol, n_samples, seed + idx, eta)
        if "improper" in signaling:
            eta_i = eta
            if 0 < alpha[0] and 0 < alpha[1]:
                step = 1.0 / max(eta_points - 1, 1)
                lo, hi = max(eta - 2 * step, 0.0), min(eta + 2 * step, 1.0)
                f = lambda e: _improper_ps_value(  # noqa: E731
                    instance, j, alpha, e, Sigma, 1e-4, n_samples, seed + idx, bs_silent)
                e_star, v_star = _golden(f, lo, hi, tol=max(step / 4, 1e-3))
                if v_star > f(eta):
                    eta_i = e_star
            sc = scenario_ps(instance, j, alpha, eta_i, Sigma, bs_silent)
            out += _points("ps-rate-energy", sc, instance, ("improper",), tol, n_samples, seed + idx, eta_i)
        return out

    dirs = list(enumerate(direction_grid(n_directions, spacing)))
    pts = [p for group in _parallel_map(one, dirs, workers) for p in group]
    return RegionSweep("ps-rate-energy", pts)


@dataclass
class TimeSharing:
    id_point: BoundaryPoint
    eh_point: BoundaryPoint

    def line(self, n: int = 11) -> np.ndarray:
        a = np.array(self.id_point.values)
        b = np.array(self.eh_point.values)
        lam = np.linspace(0.0, 1.0, n)[:, None]
        return (1 - lam) * a + lam * b

    def at_rate(self, r: float) -> float:
        """Energy on the segment at rate ``r``."""
        r_max = self.id_point.values[0]
        e_max = self.eh_point.values[1]
        return e_max * (1.0 - r / r_max) if r_max > 0 else 0.0


def ts_rate_energy(
    instance: NetworkInstance,
    j: int = 0,
    Sigma: Sequence[float] | None = None,
    tol: float = 1e-6,
    n_samples: int = 1000,
    seed: int = 0,
    bs_silent: bool = False,
) -> TimeSharing:
    """Time sharing between the pure-decoding and the pure-harvesting solutions."""
    id_sc = scenario_ps(instance, j, (1.0, 0.0), 1.0, Sigma, bs_silent)
    eh_sc = scenario_ps(instance, j, (0.0, 1.0), 0.0, Sigma, bs_silent)
    id_pt = _points("ts-rate-energy", id_sc, instance, ("proper",), tol, n_samples, seed, 1.0)[0]
    eh_pt = _points("ts-rate-energy", eh_sc, instance, ("proper",), tol, n_samples, seed, 0.0)[0]
    return TimeSharing(id_pt, eh_pt)


def cross_rate_energy(
    instance: NetworkInstance,
    info: int = 1,
    energy: int = 0,
    n_directions: int = 10,
    Sigma: Sequence[float] | None = None,
    signaling: Sequence[str] = SIGNALINGS,
    tol: float = 1e-6,
    n_samples: int = 1000,
    seed: int = 0,
    spacing: str = "linear",
    both_roles: bool = False,
    workers: int = 1,
    bs_silent: bool = False,
) -> RegionSweep:
    """``(R'_info, E'_energy)`` boundary; ``both_roles`` adds the swapped assignment."""
    roles = [(info, energy)] + ([(energy, info)] if both_roles else [])
    items = [(r, idx, a) for r in roles for idx, a in enumerate(direction_grid(n_directions, spacing))]

    def one(item):
        (i, e), idx, alpha = item
        sc = scenario_cross(instance, i, e, alpha, Sigma, bs_silent)
        return _points("cross-rate-energy", sc, instance, signaling, tol, n_samples, seed + idx)

    pts = [p for group in _parallel_map(one, items, workers) for p in group]
    return RegionSweep("cross-rate-energy", pts)


def joint_region(
    instance: NetworkInstance,
    beta: Sequence[float],
    signaling: Sequence[str] = SIGNALINGS,
    tol: float = 1e-6,
    n_samples: int = 1000,
    seed: int = 0,
) -> list[BoundaryPoint]:
    """One Pareto point of ``(R'_1, R'_2, R_1..R_K, E_1..E_K)`` along ``beta``."""
    sc = scenario_joint(instance, beta)
    return _points("joint", sc, instance, signaling, tol, n_samples, seed)
