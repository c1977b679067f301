"""Covariance-stage optimisation.

Every scenario is a weighted Chebyshev problem

    maximise  Gamma  s.t.  f_i(C) >= alpha_i * Gamma  for each objective i

over the transmit covariances, with power budgets and per-user demands.  For
a fixed ``Gamma`` the rate constraints are linear in the covariances, so the
problem is solved by bisection over ``Gamma`` with a feasibility SDP at each
step (rank constraints dropped).  Rank-1 beamformers are recovered by rank
reduction and, failing that, Gaussian randomization.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np

from .model import N_D2D, NetworkInstance
from .sdp import SdpProblem, SdpSolution, numerical_rank, reduce_rank, solve
from .stats import TxDesign, rates_and_energies

log = logging.getLogger(__name__)

ALPHA_FLOOR = 1e-6


class ScenarioInfeasible(RuntimeError):
    """The demands cannot be met even at a zero objective level."""


class SolverFailure(RuntimeError):
    pass


class RandomizationFailure(RuntimeError):
    def __init__(self, relaxed_value: float, message: str = "no feasible randomization candidate"):
        super().__init__(f"{message} (relaxed value {relaxed_value:.6g})")
        self.relaxed_value = relaxed_value


def bs_block(k: int) -> str:
    return f"B{k + 1}"


def d2d_block(j: int) -> str:
    return f"D{j + 1}"


# ---------------------------------------------------------- linear pieces

@dataclass(frozen=True)
class Term:
    """``w * v^H C v`` on one block, or ``w * v^H diag(C) v`` when ``diag``.

    The matching pseudo-variance contribution is ``w * v^H Chat v^*`` in both
    cases.
    """

    block: str
    v: np.ndarray
    w: float = 1.0
    diag: bool = False

    def matrix(self) -> np.ndarray:
        if self.diag:
            return self.w * np.diag(np.abs(self.v) ** 2).astype(complex)
        return self.w * np.outer(self.v, self.v.conj())

    def value_rank1(self, t: np.ndarray) -> np.ndarray:
        """Value for beamformers ``t`` of shape (..., dim)."""
        if self.diag:
            return self.w * (np.abs(t) ** 2 @ (np.abs(self.v) ** 2))
        return self.w * np.abs(t @ self.v.conj()) ** 2

    def pseudo_gain(self, t_hat: np.ndarray) -> complex:
        return complex(self.w * np.vdot(self.v, t_hat) ** 2)


@dataclass
class LinExpr:
    terms: list[Term] = field(default_factory=list)
    const: float = 0.0

    def scaled(self, c: float) -> "LinExpr":
        return LinExpr([Term(t.block, t.v, c * t.w, t.diag) for t in self.terms], c * self.const)

    def __add__(self, other: "LinExpr") -> "LinExpr":
        return LinExpr(self.terms + other.terms, self.const + other.const)

    def coeffs(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for t in self.terms:
            M = t.matrix()
            out[t.block] = out[t.block] + M if t.block in out else M
        return out

    def value(self, X: dict[str, np.ndarray]) -> float:
        tot = self.const
        for b, A in self.coeffs().items():
            tot += float(np.real(np.trace(A @ X[b])))
        return tot

    def value_rank1(self, T: dict[str, np.ndarray]) -> np.ndarray:
        """Vectorised over candidate beamformer sets ``T[block]`` of shape (n, dim)."""
        tot = self.const
        for t in self.terms:
            tot = tot + t.value_rank1(T[t.block])
        return np.asarray(tot)

    def pseudo_gain(self, block: str, t_hat: np.ndarray) -> complex:
        return sum((t.pseudo_gain(t_hat) for t in self.terms if t.block == block), 0j)

    def bound(self, budgets: dict[str, float], groups: dict[str, str]) -> float:
        """Upper bound of the expression over the power budgets."""
        best: dict[str, float] = {}
        for t in self.terms:
            gain = t.w * (np.max(np.abs(t.v) ** 2) if t.diag else np.sum(np.abs(t.v) ** 2))
            g = groups[t.block]
            best[g] = max(best.get(g, 0.0), gain)
        return self.const + sum(budgets[g] * val for g, val in best.items())


@dataclass
class RateTerm:
    """``log2(1 + eta*D / (eta*I + F))`` with ``F`` the unscaled floor."""

    label: str
    desired: LinExpr
    interference: LinExpr
    floor: LinExpr
    eta: float = 1.0
    own_block: str = ""
    noise: float = 1.0

    def signal(self) -> LinExpr:
        return self.desired.scaled(self.eta)

    def impairment(self) -> LinExpr:
        return self.interference.scaled(self.eta) + self.floor

    def constraint(self, gamma: float) -> tuple[dict[str, np.ndarray], float]:
        """``eta*D - gamma*(eta*I + F_terms) >= gamma * F_const`` as (coeffs, rhs)."""
        expr = self.signal() + self.impairment().scaled(-gamma)
        coeffs = expr.coeffs()
        return coeffs, gamma * self.floor.const

    def value(self, X: dict[str, np.ndarray]) -> float:
        s = self.signal().value(X)
        q = self.impairment().value(X)
        return float(np.log2(1.0 + max(s, 0.0) / q))

    def value_rank1(self, T: dict[str, np.ndarray]) -> np.ndarray:
        s = self.signal().value_rank1(T)
        q = self.impairment().value_rank1(T)
        return np.log2(1.0 + np.maximum(s, 0.0) / q)

    def upper_bound(self, budgets, groups) -> float:
        return float(np.log2(1.0 + self.signal().bound(budgets, groups) / self.floor.const))

    def target(self, level: float) -> float:
        """SINR threshold for a rate ``level``."""
        return 2.0 ** level - 1.0


@dataclass
class EnergyTerm:
    label: str
    expr: LinExpr

    def value(self, X: dict[str, np.ndarray]) -> float:
        return self.expr.value(X)

    def value_rank1(self, T: dict[str, np.ndarray]) -> np.ndarray:
        return self.expr.value_rank1(T)

    def upper_bound(self, budgets, groups) -> float:
        return self.expr.bound(budgets, groups)


Objective = Union[RateTerm, EnergyTerm]


# ------------------------------------------------------- receiver models

def cellular_rate_term(instance: NetworkInstance, k: int, order: Sequence[int] | None = None) -> RateTerm:
    """Rate of cellular user ``k``; with ``order`` earlier-encoded streams are pre-cancelled."""
    ch, cfg = instance.channels, instance.config
    h = ch.h_B[k]
    if order is None:
        others = [m for m in range(cfg.K) if m != k]
    else:
        order = list(order)
        others = order[order.index(k) + 1:]
    interf = [Term(bs_block(m), h) for m in others]
    interf += [Term(d2d_block(j), ch.h_D[k, j]) for j in range(N_D2D)]
    return RateTerm(
        label=f"R_{k + 1}",
        desired=LinExpr([Term(bs_block(k), h)]),
        interference=LinExpr(interf),
        floor=LinExpr([], cfg.sigma2_n),
        own_block=bs_block(k),
        noise=cfg.sigma2_n,
    )


def cellular_energy_term(instance: NetworkInstance, k: int) -> EnergyTerm:
    ch, cfg = instance.channels, instance.config
    terms = [Term(bs_block(m), ch.h_B[k]) for m in range(cfg.K)]
    terms += [Term(d2d_block(j), ch.h_D[k, j]) for j in range(N_D2D)]
    return EnergyTerm(f"E_{k + 1}", LinExpr(terms))


def _d2d_incident(instance: NetworkInstance, j: int) -> tuple[LinExpr, LinExpr]:
    ch, cfg = instance.channels, instance.config
    i = 1 - j
    desired = LinExpr([Term(d2d_block(i), ch.g_peer[j])])
    interf = [Term(bs_block(m), ch.g_B[j]) for m in range(cfg.K)]
    if cfg.kappa > 0:
        interf.append(Term(d2d_block(j), ch.g_self[j], cfg.kappa, diag=True))
    return desired, LinExpr(interf)


def d2d_rate_term(instance: NetworkInstance, j: int, eta: float = 1.0) -> RateTerm:
    """Rate of D2D node ``j`` with power-splitting factor ``eta``."""
    cfg = instance.config
    desired, interf = _d2d_incident(instance, j)
    if cfg.sigma2_rsi is None:
        dg = instance.channels.dg_self[j]
        floor = LinExpr([Term(d2d_block(j), dg)] if np.any(dg) else [], cfg.sigma2_n)
    else:
        floor = LinExpr([], cfg.sigma2_n + cfg.sigma2_rsi)
    return RateTerm(f"R'_{j + 1}", desired, interf, floor, eta, d2d_block(1 - j), cfg.sigma2_n)


def d2d_energy_term(instance: NetworkInstance, j: int, eta: float = 0.0) -> EnergyTerm:
    desired, interf = _d2d_incident(instance, j)
    return EnergyTerm(f"E'_{j + 1}", (desired + interf).scaled(1.0 - eta))


# --------------------------------------------------------------- scenario

@dataclass
class Scenario:
    """A Chebyshev problem: weighted objectives plus fixed demands."""

    kind: str
    objectives: list[Objective]
    weights: np.ndarray
    blocks: dict[str, int]
    budgets: dict[str, float]
    groups: dict[str, str]
    rate_demands: list[tuple[RateTerm, float]] = field(default_factory=list)
    energy_demands: list[tuple[EnergyTerm, float]] = field(default_factory=list)
    silent: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.silent:
            self._strip(set(self.silent))
        w = np.asarray(self.weights, dtype=float)
        if w.size != len(self.objectives):
            raise ValueError(f"{w.size} weights for {len(self.objectives)} objectives")
        if np.any(w < 0) or not np.isclose(w.sum(), 1.0, atol=1e-12, rtol=0):
            raise ValueError("weights must be nonnegative and sum to 1")
        self.weights = w
        self.alpha = np.maximum(w, ALPHA_FLOOR)
        # zero-weight objectives are dropped (single-objective reduction)
        self.active = [i for i in range(w.size) if w[i] > 0]

    def _strip(self, silent: set[str]) -> None:
        """Remove transmitters that are forced off, together with every term they feed."""
        if any(t.own_block in silent for t, _ in self.rate_demands):
            raise ValueError("a rate demand is placed on a silenced transmitter")
        self.blocks = {b: n for b, n in self.blocks.items() if b not in silent}
        self.groups = {b: g for b, g in self.groups.items() if b not in silent}
        self.budgets = {g: p for g, p in self.budgets.items() if g in self.groups.values()}
        self.objectives = [_without(o, silent) for o in self.objectives]
        self.rate_demands = [(_without(t, silent), lv) for t, lv in self.rate_demands]
        self.energy_demands = [(_without(t, silent), lv) for t, lv in self.energy_demands]

    def active_pairs(self) -> list[tuple[float, Objective]]:
        return [(float(self.alpha[i]), self.objectives[i]) for i in self.active]

    @property
    def labels(self) -> list[str]:
        return [o.label for o in self.objectives]

    def _base(self) -> SdpProblem:
        p = SdpProblem()
        for name, dim in self.blocks.items():
            p.add_block(name, dim)
        for g in dict.fromkeys(self.groups.values()):
            members = [b for b, gg in self.groups.items() if gg == g]
            p.add({b: np.eye(self.blocks[b]) for b in members}, "<=", self.budgets[g], f"power {g}")
        for term, level in self.rate_demands:
            coeffs, rhs = term.constraint(term.target(level))
            p.add(coeffs, ">=", rhs, f"demand {term.label}")
        for term, level in self.energy_demands:
            p.add(term.expr.coeffs(), ">=", level - term.expr.const, f"demand {term.label}")
        return p

    def feasibility(self, gamma: float) -> SdpProblem:
        """Feasibility SDP for the objective level ``gamma``."""
        p = self._base()
        for a, obj in self.active_pairs():
            if isinstance(obj, RateTerm):
                coeffs, rhs = obj.constraint(obj.target(a * gamma))
                p.add(coeffs, ">=", rhs, f"objective {obj.label}")
            else:
                p.add(obj.expr.coeffs(), ">=", a * gamma - obj.expr.const, f"objective {obj.label}")
        return p

    def values(self, X: dict[str, np.ndarray]) -> np.ndarray:
        return np.array([o.value(X) for o in self.objectives])

    def chebyshev(self, X: dict[str, np.ndarray]) -> float:
        return float(min(o.value(X) / a for a, o in self.active_pairs()))

    def demand_violation(self, X: dict[str, np.ndarray]) -> float:
        v = 0.0
        for term, level in self.rate_demands:
            v = max(v, level - term.value(X))
        for term, level in self.energy_demands:
            v = max(v, (level - term.value(X)) / max(1.0, level))
        return v

    def gamma_hi(self) -> float:
        ub = [o.upper_bound(self.budgets, self.groups) / a for a, o in self.active_pairs()]
        return float(min(ub))

    def zero_blocks(self) -> dict[str, np.ndarray]:
        return {b: np.zeros((n, n), complex) for b, n in self.blocks.items()}


def _drop(expr: LinExpr, silent: set[str]) -> LinExpr:
    return LinExpr([t for t in expr.terms if t.block not in silent], expr.const)


def _without(obj, silent: set[str]):
    if isinstance(obj, RateTerm):
        return replace(obj, desired=_drop(obj.desired, silent), interference=_drop(obj.interference, silent),
                       floor=_drop(obj.floor, silent))
    return replace(obj, expr=_drop(obj.expr, silent))


def _silent_bs(instance: NetworkInstance, bs_silent: bool) -> tuple[str, ...]:
    return tuple(bs_block(k) for k in range(instance.config.K)) if bs_silent else ()


def _network_layout(instance: NetworkInstance) -> tuple[dict[str, int], dict[str, float], dict[str, str]]:
    cfg = instance.config
    blocks = {bs_block(k): cfg.N for k in range(cfg.K)}
    blocks.update({d2d_block(j): cfg.M for j in range(N_D2D)})
    budgets = {"BS": cfg.P_B, "D1": cfg.P_j[0], "D2": cfg.P_j[1]}
    groups = {bs_block(k): "BS" for k in range(cfg.K)}
    groups.update({d2d_block(j): d2d_block(j) for j in range(N_D2D)})
    return blocks, budgets, groups


def _normalise(alpha: Sequence[float]) -> np.ndarray:
    a = np.asarray(alpha, dtype=float)
    if np.any(a < 0) or a.sum() <= 0:
        raise ValueError("weights must be nonnegative with a positive sum")
    return a / a.sum()


def scenario_cellular(
    instance: NetworkInstance,
    alpha: Sequence[float],
    Psi: Sequence[float] | None = None,
    order: Sequence[int] | None = None,
) -> Scenario:
    """Cellular rate region under per-user energy demands ``Psi``."""
    cfg = instance.config
    blocks, budgets, groups = _network_layout(instance)
    Psi = cfg.Psi if Psi is None else Psi
    objs: list[Objective] = [cellular_rate_term(instance, k, order) for k in range(cfg.K)]
    energy = [(cellular_energy_term(instance, k), float(Psi[k])) for k in range(cfg.K) if Psi[k] > 0]
    return Scenario("cellular-region", objs, _normalise(alpha), blocks, budgets, groups, energy_demands=energy)


def _cellular_qos(instance: NetworkInstance, Sigma: Sequence[float] | None) -> list[tuple[RateTerm, float]]:
    Sigma = instance.config.Sigma if Sigma is None else Sigma
    return [(cellular_rate_term(instance, k), float(Sigma[k])) for k in range(instance.config.K) if Sigma[k] > 0]


def scenario_d2d(
    instance: NetworkInstance,
    alpha: Sequence[float],
    Sigma: Sequence[float] | None = None,
    bs_silent: bool = False,
) -> Scenario:
    """D2D rate region with cellular rate demands ``Sigma``; ``bs_silent`` switches the BS off."""
    blocks, budgets, groups = _network_layout(instance)
    objs: list[Objective] = [d2d_rate_term(instance, j) for j in range(N_D2D)]
    return Scenario("d2d-region", objs, _normalise(alpha), blocks, budgets, groups,
                    rate_demands=_cellular_qos(instance, Sigma), silent=_silent_bs(instance, bs_silent))


def scenario_ps(
    instance: NetworkInstance,
    j: int,
    alpha: Sequence[float],
    eta: float,
    Sigma: Sequence[float] | None = None,
    bs_silent: bool = False,
) -> Scenario:
    """Rate-energy trade-off of D2D node ``j`` with power splitting ``eta``."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    blocks, budgets, groups = _network_layout(instance)
    objs: list[Objective] = [d2d_rate_term(instance, j, eta), d2d_energy_term(instance, j, eta)]
    return Scenario("ps", objs, _normalise(alpha), blocks, budgets, groups,
                    rate_demands=_cellular_qos(instance, Sigma), silent=_silent_bs(instance, bs_silent))


def scenario_cross(
    instance: NetworkInstance,
    info: int,
    energy: int,
    alpha: Sequence[float],
    Sigma: Sequence[float] | None = None,
    bs_silent: bool = False,
) -> Scenario:
    """Node ``info`` decodes while node ``energy`` harvests."""
    if info == energy:
        raise ValueError("information and energy users must differ")
    blocks, budgets, groups = _network_layout(instance)
    objs: list[Objective] = [d2d_rate_term(instance, info), d2d_energy_term(instance, energy)]
    return Scenario("cross", objs, _normalise(alpha), blocks, budgets, groups,
                    rate_demands=_cellular_qos(instance, Sigma), silent=_silent_bs(instance, bs_silent))


def scenario_joint(instance: NetworkInstance, beta: Sequence[float]) -> Scenario:
    """Joint objective ``(R'_1, R'_2, R_1..R_K, E_1..E_K)``."""
    cfg = instance.config
    blocks, budgets, groups = _network_layout(instance)
    objs: list[Objective] = [d2d_rate_term(instance, j) for j in range(N_D2D)]
    objs += [cellular_rate_term(instance, k) for k in range(cfg.K)]
    objs += [cellular_energy_term(instance, k) for k in range(cfg.K)]
    beta = np.asarray(beta, dtype=float)
    if beta.size != 2 * cfg.K + 2:
        raise ValueError(f"joint weights need {2 * cfg.K + 2} entries")
    return Scenario("joint", objs, _normalise(beta), blocks, budgets, groups)


def build_feasibility_A(gamma: float, instance: NetworkInstance, alpha, Psi=None) -> SdpProblem:
    return scenario_cellular(instance, alpha, Psi).feasibility(gamma)


def build_feasibility_B(gamma: float, instance: NetworkInstance, alpha, Sigma=None) -> SdpProblem:
    return scenario_d2d(instance, alpha, Sigma).feasibility(gamma)


# ------------------------------------------------------------- bisection

@dataclass
class RandomizationReport:
    samples: int = 0
    feasible: int = 0
    best_value: float = float("nan")
    used: bool = False


@dataclass
class CovOptResult:
    gamma: float  # relaxed optimum
    value: float  # Chebyshev value of the returned design
    objectives: np.ndarray  # objective values of the returned design
    design: TxDesign
    relaxed: dict[str, np.ndarray]
    ranks: dict[str, int]
    relaxed_ranks: dict[str, int]
    randomization: RandomizationReport
    steps: int = 0
    runtime: float = 0.0
    rank_one: bool = True


def feasible_at(scenario: Scenario, gamma: float, tol: float = 1e-9) -> SdpSolution:
    sol = solve(scenario.feasibility(gamma), tol=tol)
    if sol.status == "numerical-failure":
        raise SolverFailure(f"SDP failed at gamma={gamma:.6g}: {sol.message}")
    return sol


def feasibility_profile(scenario: Scenario, grid: Sequence[float]) -> list[bool]:
    return [feasible_at(scenario, g).ok for g in grid]


def bisect(scenario: Scenario, tol: float = 1e-6, max_steps: int = 60) -> tuple[float, dict[str, np.ndarray], int]:
    """Largest feasible level within ``tol`` and a relaxed design attaining it."""
    sol0 = feasible_at(scenario, 0.0)
    if not sol0.ok:
        raise ScenarioInfeasible(f"{scenario.kind}: demands cannot be met")
    lo, X = 0.0, sol0.X
    lo = max(lo, min(scenario.chebyshev(X), scenario.gamma_hi()))
    hi = scenario.gamma_hi() * (1 + 1e-6) + tol
    steps = 0
    while hi - lo > tol and steps < max_steps:
        mid = 0.5 * (lo + hi)
        sol = feasible_at(scenario, mid)
        steps += 1
        if sol.ok:
            lo, X = mid, sol.X
            # the relaxed design may certify a higher level than asked for
            lo = max(lo, min(scenario.chebyshev(X), hi))
        else:
            hi = mid
    return lo, X, steps


def polish(scenario: Scenario, gamma: float, X: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Push linear (energy) objectives to the boundary at a fixed level."""
    # zero-weight energy objectives are included so that corner points are Pareto optimal
    energy = [(scenario.alpha[i] if i in scenario.active else 1.0, o)
              for i, o in enumerate(scenario.objectives) if isinstance(o, EnergyTerm)]
    if not energy:
        return X
    p = scenario.feasibility(gamma)
    expr = LinExpr()
    for a, o in energy:
        expr = expr + o.expr.scaled(1.0 / a)
    p.set_objective(expr.coeffs(), "max")
    sol = solve(p)
    if sol.status != "optimal" or sol.max_violation > 1e-6:
        return X
    return sol.X


def _factor_blocks(X: dict[str, np.ndarray], threshold: float = 1e-6) -> tuple[dict[str, int], dict[str, np.ndarray | None]]:
    ranks, factors = {}, {}
    for b, Xb in X.items():
        r, t = numerical_rank(Xb, threshold)
        ranks[b] = r
        factors[b] = np.zeros(Xb.shape[0], complex) if r == 0 else t
    return ranks, factors


def design_from_blocks(instance: NetworkInstance, X: dict[str, np.ndarray], factors=None) -> TxDesign:
    cfg = instance.config
    size = {bs_block(k): cfg.N for k in range(cfg.K)} | {d2d_block(j): cfg.M for j in range(N_D2D)}
    X = {b: X.get(b, np.zeros((n, n), complex)) for b, n in size.items()}  # silenced blocks are zero
    C_B = np.array([X[bs_block(k)] for k in range(cfg.K)])
    C_D = np.array([X[d2d_block(j)] for j in range(N_D2D)])
    if factors is not None:
        factors = {b: factors.get(b, np.zeros(n, complex)) for b, n in size.items()}
    if factors is not None and all(f is not None for f in factors.values()):
        t_B = np.array([factors[bs_block(k)] for k in range(cfg.K)])
        t_D = np.array([factors[d2d_block(j)] for j in range(N_D2D)])
        return TxDesign.from_beamformers(t_B, t_D)
    return TxDesign(C_B, C_D)


def blocks_from_design(instance: NetworkInstance, design: TxDesign) -> dict[str, np.ndarray]:
    X = {bs_block(k): design.C_B[k] for k in range(instance.config.K)}
    X.update({d2d_block(j): design.C_D[j] for j in range(N_D2D)})
    return X


def gaussian_randomization(
    scenario: Scenario,
    X: dict[str, np.ndarray],
    n_samples: int = 1000,
    seed: int = 0,
    threshold: float = 1e-6,
    accept: float = 1e-6,
) -> tuple[dict[str, np.ndarray], RandomizationReport]:
    """Best feasible rank-1 candidate drawn from the relaxed covariances.

    Returns beamformers per block.  Rank-1 blocks pass through unchanged.
    Each draw is tried twice: rescaled to the relaxed block powers and
    rescaled to the power budgets (BS blocks jointly).
    """
    rng = np.random.default_rng(seed)
    ranks, factors = _factor_blocks(X, threshold)
    report = RandomizationReport(samples=0)
    if all(r <= 1 for r in ranks.values()):
        report.best_value = scenario.chebyshev(X)
        return {b: f for b, f in factors.items()}, report
    report.used = True
    draws: dict[str, np.ndarray] = {}
    for b, Xb in X.items():
        if ranks[b] <= 1:
            draws[b] = np.broadcast_to(factors[b], (n_samples, Xb.shape[0]))
            continue
        lam, V = np.linalg.eigh(0.5 * (Xb + Xb.conj().T))
        keep = lam > threshold * lam[-1]
        F = V[:, keep] * np.sqrt(lam[keep])
        xi = (rng.standard_normal((n_samples, F.shape[1])) + 1j * rng.standard_normal((n_samples, F.shape[1]))) / np.sqrt(2)
        draws[b] = xi @ F.T

    def rescale(to_budget: bool) -> dict[str, np.ndarray]:
        out = {}
        for g in dict.fromkeys(scenario.groups.values()):
            members = [b for b, gg in scenario.groups.items() if gg == g]
            rand = [b for b in members if ranks[b] > 1]
            if not rand:
                for b in members:
                    out[b] = draws[b]
                continue
            fixed_p = sum(float(np.real(np.trace(X[b]))) for b in members if ranks[b] <= 1)
            if to_budget:
                target = max(scenario.budgets[g] - fixed_p, 0.0)
                have = sum(np.sum(np.abs(draws[b]) ** 2, axis=1) for b in rand)
                s = np.sqrt(target / np.maximum(have, 1e-300))
                for b in rand:
                    out[b] = draws[b] * s[:, None]
            else:
                for b in rand:
                    p = float(np.real(np.trace(X[b])))
                    have = np.sum(np.abs(draws[b]) ** 2, axis=1)
                    out[b] = draws[b] * np.sqrt(p / np.maximum(have, 1e-300))[:, None]
            for b in members:
                out.setdefault(b, draws[b])
        return out

    best_val, best = -np.inf, None
    feasible_count = 0
    for to_budget in (False, True):
        T = rescale(to_budget)
        vals = np.stack([o.value_rank1(T) / a for a, o in scenario.active_pairs()])
        cheb = vals.min(axis=0)
        ok = np.ones(n_samples, bool)
        for term, level in scenario.rate_demands:
            ok &= term.value_rank1(T) >= level - accept
        for term, level in scenario.energy_demands:
            ok &= term.value_rank1(T) >= level - accept * max(1.0, level)
        feasible_count += int(ok.sum())
        report.samples += n_samples
        if ok.any():
            idx = int(np.argmax(np.where(ok, cheb, -np.inf)))
            if cheb[idx] > best_val:
                best_val = float(cheb[idx])
                best = {b: np.array(T[b][idx]) for b in T}
    report.feasible = feasible_count
    report.best_value = best_val
    if best is None:
        raise RandomizationFailure(scenario.chebyshev(X))
    return best, report


def recover_rank_one(
    scenario: Scenario,
    gamma: float,
    X: dict[str, np.ndarray],
    n_samples: int = 1000,
    seed: int = 0,
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray] | None, RandomizationReport]:
    """Blocks and beamformers of a rank-1 design (``None`` beamformers on failure)."""
    ranks, factors = _factor_blocks(X)
    if any(r > 1 for r in ranks.values()):
        X = reduce_rank(scenario.feasibility(gamma), X)
        ranks, factors = _factor_blocks(X)
    report = RandomizationReport()
    if all(r <= 1 for r in ranks.values()):
        report.best_value = scenario.chebyshev(X)
        return X, factors, report
    try:
        T, report = gaussian_randomization(scenario, X, n_samples, seed)
    except RandomizationFailure as exc:
        log.warning("%s; keeping the relaxed design", exc)
        return X, None, RandomizationReport(n_samples * 2, 0, exc.relaxed_value, True)
    Xr = {b: np.outer(t, t.conj()) for b, t in T.items()}
    return Xr, T, report


def _clip_budgets(scenario: Scenario, X: dict[str, np.ndarray], factors):
    """Scale power groups back onto their budgets (solver slack is of order 1e-6)."""
    X = dict(X)
    factors = None if factors is None else dict(factors)
    for g in dict.fromkeys(scenario.groups.values()):
        members = [b for b, gg in scenario.groups.items() if gg == g]
        used = sum(float(np.real(np.trace(X[b]))) for b in members)
        if used > scenario.budgets[g]:
            c = scenario.budgets[g] / used
            for b in members:
                X[b] = c * X[b]
                if factors is not None and factors.get(b) is not None:
                    factors[b] = np.sqrt(c) * factors[b]
    return X, factors


def chebyshev_bisect(
    scenario: Scenario,
    instance: NetworkInstance,
    tol: float = 1e-6,
    n_samples: int = 1000,
    seed: int = 0,
    recover: bool = True,
) -> CovOptResult:
    """Solve a Chebyshev scenario: bisection, polishing and rank-1 recovery."""
    t0 = time.perf_counter()
    gamma, X, steps = bisect(scenario, tol)
    X = polish(scenario, gamma, X)
    relaxed = X
    relaxed_ranks, _ = _factor_blocks(X)
    report = RandomizationReport()
    factors = None
    if recover:
        X, factors, report = recover_rank_one(scenario, gamma, X, n_samples, seed)
    X, factors = _clip_budgets(scenario, X, factors)
    ranks, _ = _factor_blocks(X)
    design = design_from_blocks(instance, X, factors)
    Xd = blocks_from_design(instance, design)
    vals = scenario.values(Xd)
    return CovOptResult(
        gamma=gamma,
        value=scenario.chebyshev(Xd),
        objectives=vals,
        design=design,
        relaxed=relaxed,
        ranks=ranks,
        relaxed_ranks=relaxed_ranks,
        randomization=report,
        steps=steps,
        runtime=time.perf_counter() - t0,
        rank_one=factors is not None,
    )


# -------------------------------------------------------------------- DPC

def dpc_rates(instance: NetworkInstance, design: TxDesign, order: Sequence[int]) -> np.ndarray:
    """Cellular rates when streams are encoded successively in ``order``."""
    K = instance.config.K
    if sorted(order) != list(range(K)):
        raise ValueError(f"order {list(order)} is not a permutation of 0..{K - 1}")
    return rates_and_energies(instance, design, order=order).R


def dpc_bisect(
    instance: NetworkInstance,
    alpha: Sequence[float],
    Psi: Sequence[float] | None = None,
    tol: float = 1e-6,
    orders: Sequence[Sequence[int]] | None = None,
) -> tuple[CovOptResult, tuple[int, ...]]:
    """Best Chebyshev value over the encoding orders (relaxed covariances kept).

    Single-antenna receivers decode Gaussian streams of any covariance rank,
    so no rank-1 recovery is needed for the DPC baseline.
    """
    import itertools

    K = instance.config.K
    orders = orders or list(itertools.permutations(range(K)))
    best: tuple[CovOptResult, tuple[int, ...]] | None = None
    for order in orders:
        sc = scenario_cellular(instance, alpha, Psi, order=order)
        res = chebyshev_bisect(sc, instance, tol=tol, recover=False)
        if best is None or res.value > best[0].value + 1e-12:
            best = (res, tuple(order))
    assert best is not None
    return best


def single_user_capacity(instance: NetworkInstance, k: int) -> float:
    cfg = instance.config
    return math.log2(1.0 + cfg.P_B * float(np.sum(np.abs(instance.channels.h_B[k]) ** 2)) / cfg.sigma2_n)
