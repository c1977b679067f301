"""Pseudo-covariance optimisation for fixed transmit covariances.

With rank-1 covariances ``C_i = t_i t_i^H`` every admissible pseudo-covariance
is ``Chat_i = s_i t_hat_i t_hat_i^T`` with ``|s_i| <= ||t_i||^2``.  The
received pseudo-variances are then linear in ``s = [s_D1, s_D2, s_B1, ...]``
and the improper part of each rate is

    1/2 log2((1 - |a^H s|^2) / (1 - |b^H s|^2)),

where ``a`` and ``b`` collect the squared channel/beamformer products scaled
by the received and the interference-plus-noise variances.  Lifting
``S = s s^H`` and dropping the rank constraint gives an SDP for every target
level, so the Chebyshev problem is again solved by bisection.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .covopt import EnergyTerm, RateTerm, Scenario, bs_block, d2d_block
from .model import N_D2D, NetworkInstance
from .sdp import SdpProblem, numerical_rank, reduce_rank, solve
from .stats import TxDesign

log = logging.getLogger(__name__)


class PreconditionError(ValueError):
    pass


@dataclass
class ImproperRow:
    """One rate in the S-problem."""

    label: str
    a: np.ndarray
    b: np.ndarray
    Cy: float
    Cw: float
    noise: float
    rate_proper: float
    weight: float | None = None  # Chebyshev weight, or None for a demand
    level: float | None = None  # demand level

    @property
    def A(self) -> np.ndarray:
        return np.outer(self.a, self.a.conj())

    @property
    def B(self) -> np.ndarray:
        return np.outer(self.b, self.b.conj())

    def gain(self, S: np.ndarray) -> float:
        """Improper rate increment for a lifted ``S``."""
        ta = float(np.real(np.vdot(self.a, S @ self.a)))
        tb = float(np.real(np.vdot(self.b, S @ self.b)))
        return 0.5 * float(np.log2((1.0 - ta) / (1.0 - tb)))

    def gain_vec(self, s: np.ndarray) -> np.ndarray:
        """Improper increment for candidate vectors ``s`` of shape (n, L)."""
        ta = np.abs(s @ self.a.conj()) ** 2
        tb = np.abs(s @ self.b.conj()) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            return 0.5 * np.log2((1.0 - ta) / (1.0 - tb))

    def constraint(self, target: float) -> tuple[np.ndarray, float]:
        """``tr((c B - A) S) >= c - 1`` for a total-rate ``target``."""
        c = 2.0 ** (2.0 * (target - self.rate_proper))
        return c * self.B - self.A, c - 1.0


@dataclass
class ImproperSystem:
    streams: list[str]  # block names in s-order
    t: dict[str, np.ndarray]  # beamformers per stream
    rows: list[ImproperRow]
    caps: list[float] = field(default_factory=list)  # Chebyshev caps from energy objectives

    @property
    def size(self) -> int:
        return len(self.streams)

    @property
    def norms2(self) -> np.ndarray:
        return np.array([float(np.sum(np.abs(self.t[b]) ** 2)) for b in self.streams])

    def selectors(self) -> list[np.ndarray]:
        out = []
        for i in range(self.size):
            E = np.zeros((self.size, self.size), complex)
            E[i, i] = 1.0
            out.append(E)
        return out

    def objective_rows(self) -> list[ImproperRow]:
        return [r for r in self.rows if r.weight is not None]

    def demand_rows(self) -> list[ImproperRow]:
        return [r for r in self.rows if r.weight is None]

    def rate_value(self, S: np.ndarray | None = None) -> float:
        """Chebyshev value over the rate rows only (``S = 0`` when omitted)."""
        gains = [0.0 if S is None else r.gain(S) for r in self.objective_rows()]
        return float(min((r.rate_proper + g) / r.weight for r, g in zip(self.objective_rows(), gains)))

    def proper_value(self) -> float:
        return self.value(None)

    def value(self, S: np.ndarray | None) -> float:
        # energies do not depend on pseudo-covariances; they only cap the value
        vals = list(self.caps)
        if self.objective_rows():
            vals.append(self.rate_value(S))
        return float(min(vals))


def stream_order(K: int) -> list[str]:
    return [d2d_block(j) for j in range(N_D2D)] + [bs_block(k) for k in range(K)]


def _row(term: RateTerm, streams: Sequence[str], T: Mapping[str, np.ndarray]) -> ImproperRow:
    T1 = {b: np.asarray(t)[None, :] for b, t in T.items()}
    sig = float(term.signal().value_rank1(T1)[0])
    Cw = float(term.impairment().value_rank1(T1)[0])
    Cy = sig + Cw
    e_w = np.zeros(len(streams), complex)
    e_d = np.zeros(len(streams), complex)
    for idx, blk in enumerate(streams):
        t = T[blk]
        t_hat = t / np.linalg.norm(t)
        e_w[idx] = term.impairment().pseudo_gain(blk, t_hat)
        e_d[idx] = term.signal().pseudo_gain(blk, t_hat)
    return ImproperRow(
        label=term.label,
        a=np.conj(e_w + e_d) / Cy,
        b=np.conj(e_w) / Cw,
        Cy=Cy,
        Cw=Cw,
        noise=term.noise,
        rate_proper=float(np.log2(Cy / Cw)),
    )


def build_improper_system(scenario: Scenario, beamformers: Mapping[str, np.ndarray], K: int | None = None) -> ImproperSystem:
    """a/b vectors for every rate in a scenario at fixed beamformers.

    Silent streams (zero beamformer) carry no pseudo-covariance and are left
    out of ``s``.
    """
    if beamformers is None or any(t is None for t in beamformers.values()):
        raise PreconditionError("the improper stage needs rank-1 beamformers for every stream")
    K = K if K is not None else sum(1 for b in beamformers if b.startswith("B"))
    streams = [b for b in stream_order(K) if b in beamformers and np.linalg.norm(beamformers[b]) > 1e-9]
    T = {b: np.asarray(t, dtype=complex) for b, t in beamformers.items()}
    rows: list[ImproperRow] = []
    caps: list[float] = []
    T1 = {b: t[None, :] for b, t in T.items()}
    for a, obj in scenario.active_pairs():
        if isinstance(obj, RateTerm):
            r = _row(obj, streams, T)
            r.weight = float(a)
            rows.append(r)
        else:
            assert isinstance(obj, EnergyTerm)
            caps.append(float(obj.value_rank1(T1)[0]) / float(a))
    for term, level in scenario.rate_demands:
        r = _row(term, streams, T)
        r.level = float(level)
        rows.append(r)
    return ImproperSystem(streams, T, rows, caps)


def feasibility_problem(system: ImproperSystem, level: float) -> SdpProblem:
    p = SdpProblem()
    p.add_block("S", system.size)
    for E, n2 in zip(system.selectors(), system.norms2):
        p.add({"S": E}, "<=", n2**2, "pseudo_bound")
    for r in system.objective_rows():
        G, rhs = r.constraint(r.weight * level)
        p.add({"S": G}, ">=", rhs, f"objective {r.label}")
    for r in system.demand_rows():
        G, rhs = r.constraint(r.level)
        p.add({"S": G}, ">=", rhs, f"demand {r.label}")
    return p


@dataclass
class ImproperResult:
    Lambda: float  # relaxed optimum
    value: float  # Chebyshev value of the returned s
    s: np.ndarray
    S: np.ndarray
    system: ImproperSystem
    rank: int
    randomized: bool = False
    feasible_samples: int = 0
    steps: int = 0
    runtime: float = 0.0

    def pseudo_covariances(self) -> dict[str, np.ndarray]:
        return pseudo_cov_from_s(self.s, self.system)


def _lambda_hi(system: ImproperSystem) -> float:
    ub = [(r.rate_proper + np.log2(r.Cw / r.noise)) / r.weight for r in system.objective_rows()]
    return float(min(ub))


def _clamp(s: np.ndarray, bounds: np.ndarray) -> np.ndarray:
    mag = np.abs(s)
    scale = np.where(mag > bounds, bounds / np.maximum(mag, 1e-300), 1.0)
    return s * scale


def _randomize(system: ImproperSystem, S: np.ndarray, n: int, rng: np.random.Generator) -> tuple[np.ndarray, float, int]:
    bounds = system.norms2
    lam, V = np.linalg.eigh(0.5 * (S + S.conj().T))
    lam = np.clip(lam, 0.0, None)
    F = V * np.sqrt(lam)
    xi = (rng.standard_normal((n, S.shape[0])) + 1j * rng.standard_normal((n, S.shape[0]))) / np.sqrt(2)
    cand = _clamp(xi @ F.T, bounds)
    cand = np.vstack([np.zeros(S.shape[0]), cand])  # s = 0 is always admissible
    ok = np.ones(cand.shape[0], bool)
    for r in system.demand_rows():
        ok &= r.rate_proper + r.gain_vec(cand) >= r.level - 1e-9
    vals = [(r.rate_proper + r.gain_vec(cand)) / r.weight for r in system.objective_rows()]
    cheb = np.min(np.vstack(vals), axis=0)
    cheb = np.where(ok & np.isfinite(cheb), cheb, -np.inf)
    idx = int(np.argmax(cheb))
    return cand[idx], float(cheb[idx]), int(ok.sum()) - 1


def improper_bisect(
    system: ImproperSystem,
    tol: float = 1e-6,
    n_samples: int = 500,
    seed: int = 0,
    max_steps: int = 60,
) -> ImproperResult:
    """Chebyshev-optimal ``s`` for fixed beamformers.

    The rate rows are bisected on ``[Gamma, Lambda_hi]`` where ``Gamma`` is
    the proper value (``S = 0``) and ``Lambda_hi`` follows from the
    receiver-noise floor on the interference-plus-noise variance.  Energy
    objectives are unaffected by ``s``; they cap the reported value but do
    not stop the rates from growing, so the returned point is never
    dominated by the proper one.
    """
    t0 = time.perf_counter()
    L = system.size
    gamma = system.proper_value()
    zero = np.zeros((L, L), complex)
    if L == 0 or not system.objective_rows():
        return ImproperResult(gamma, gamma, np.zeros(L, complex), zero, system, 0)
    gamma_r = system.rate_value()
    lo, S = gamma_r, zero
    hi = max(_lambda_hi(system), lo)
    steps = 0
    while hi - lo > tol and steps < max_steps:
        mid = 0.5 * (lo + hi)
        sol = solve(feasibility_problem(system, mid))
        steps += 1
        if sol.status == "numerical-failure":
            log.warning("S-problem failed at level %.6g: %s", mid, sol.message)
            hi = mid
            continue
        if sol.ok:
            lo, S = mid, sol.X["S"]
            lo = max(lo, min(_relaxed_value(system, S), hi))
        else:
            hi = mid
    rank, factor = numerical_rank(S)
    if rank > 1:
        S = reduce_rank(feasibility_problem(system, lo), {"S": S})["S"]
        rank, factor = numerical_rank(S)
    randomized = False
    feasible = 0
    if rank == 0:
        s = np.zeros(L, complex)
    elif rank == 1:
        s = _clamp(factor, system.norms2)
    else:
        rng = np.random.default_rng(seed)
        s, _, feasible = _randomize(system, S, n_samples, rng)
        randomized = True
    if system.rate_value(np.outer(s, s.conj())) < gamma_r:  # never worse than proper signaling
        s = np.zeros(L, complex)
    value = system.value(np.outer(s, s.conj()))
    Lam = min([lo] + list(system.caps))
    return ImproperResult(Lam, value, s, S, system, rank, randomized, feasible, steps, time.perf_counter() - t0)


def _relaxed_value(system: ImproperSystem, S: np.ndarray) -> float:
    try:
        return system.rate_value(S)
    except (FloatingPointError, ValueError):
        return -np.inf


def validity_margins(system: ImproperSystem, S: np.ndarray, tol: float = 1e-12) -> tuple[bool, list[tuple[float, float]]]:
    """Margins ``1 - tr(A S) - noise^2/Cy^2`` and ``1 - tr(B S) - noise^2/Cw^2`` per row."""
    margins = []
    for r in system.rows:
        ta = float(np.real(np.vdot(r.a, S @ r.a)))
        tb = float(np.real(np.vdot(r.b, S @ r.b)))
        margins.append((1.0 - ta - r.noise**2 / r.Cy**2, 1.0 - tb - r.noise**2 / r.Cw**2))
    ok = all(m >= -tol for pair in margins for m in pair)
    return ok, margins


def pseudo_cov_from_s(s: np.ndarray, system: ImproperSystem, tol: float = 1e-9) -> dict[str, np.ndarray]:
    """``Chat_i = s_i t_hat_i t_hat_i^T`` per stream in ``system.streams``."""
    out = {}
    for si, blk, bound in zip(s, system.streams, system.norms2):
        if abs(si) > bound + tol:
            raise ValueError(f"|s| = {abs(si):.6g} exceeds ||t||^2 = {bound:.6g} for stream {blk}")
        t = system.t[blk]
        t_hat = t / np.linalg.norm(t)
        out[blk] = si * np.outer(t_hat, t_hat)
    return out


def improper_design(instance: NetworkInstance, design: TxDesign, result: ImproperResult) -> TxDesign:
    """Attach the optimised pseudo-covariances to a proper design."""
    cfg = instance.config
    Chat = result.pseudo_covariances()
    Chat_B = np.array([Chat.get(bs_block(k), np.zeros((cfg.N, cfg.N), complex)) for k in range(cfg.K)])
    Chat_D = np.array([Chat.get(d2d_block(j), np.zeros((cfg.M, cfg.M), complex)) for j in range(N_D2D)])
    return design.with_pseudo(Chat_B, Chat_D)


def beamformers_of(instance: NetworkInstance, design: TxDesign) -> dict[str, np.ndarray]:
    if design.t_B is None or design.t_D is None:
        raise PreconditionError("design carries no beamformers")
    T = {bs_block(k): design.t_B[k] for k in range(instance.config.K)}
    T.update({d2d_block(j): design.t_D[j] for j in range(N_D2D)})
    return T
