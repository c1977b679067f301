"""Small dense semidefinite programs over Hermitian PSD blocks.

Problems are stated over complex Hermitian blocks with linear trace
constraints.  They are mapped to real symmetric form and solved with an
infeasible primal-dual interior-point method (HKM search direction with
Mehrotra predictor-corrector).  Feasibility questions are answered by a
phase-1 program that minimises a common constraint relaxation ``t >= 0``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

log = logging.getLogger(__name__)

SENSES = ("<=", ">=", "==")


# ---------------------------------------------------------------- embedding

def hermitian_to_real(X: np.ndarray) -> np.ndarray:
    """``X -> [[Re X, -Im X], [Im X, Re X]]``."""
    X = np.asarray(X)
    re, im = X.real, X.imag
    return np.block([[re, -im], [im, re]])


def real_to_hermitian(Y: np.ndarray) -> np.ndarray:
    """Project a real symmetric ``2n x 2n`` matrix back to an ``n x n`` Hermitian one.

    The diagonal blocks are averaged and the off-diagonal blocks
    antisymmetrised, so the result is exactly Hermitian.
    """
    n = Y.shape[0] // 2
    a, b, c, d = Y[:n, :n], Y[:n, n:], Y[n:, :n], Y[n:, n:]
    X = 0.5 * (a + d) + 0.5j * (c - b)
    return 0.5 * (X + X.conj().T)


# ----------------------------------------------------------------- problems

@dataclass
class Constraint:
    coeffs: dict[str, np.ndarray]
    sense: str
    rhs: float
    label: str = ""

    def lhs(self, X: Mapping[str, np.ndarray]) -> float:
        return float(sum(np.real(np.trace(A @ X[b])) for b, A in self.coeffs.items()))

    def scale(self) -> float:
        norm = np.sqrt(sum(np.linalg.norm(A) ** 2 for A in self.coeffs.values()))
        return max(abs(self.rhs), norm, 1e-300)

    def violation(self, X: Mapping[str, np.ndarray]) -> float:
        v = self.lhs(X) - self.rhs
        if self.sense == "<=":
            return max(v, 0.0)
        if self.sense == ">=":
            return max(-v, 0.0)
        return abs(v)

    def slack(self, X: Mapping[str, np.ndarray]) -> float:
        """Signed distance to the boundary (positive inside)."""
        v = self.lhs(X) - self.rhs
        return {"<=": -v, ">=": v, "==": -abs(v)}[self.sense]


@dataclass
class SdpProblem:
    """``opt sum_b tr(F_b X_b)`` subject to ``sum_b tr(A_cb X_b) <op> r_c``, ``X_b >= 0``.

    ``sense`` is ``"max"``, ``"min"`` or ``"feasibility"``.
    """

    blocks: dict[str, int] = field(default_factory=dict)
    constraints: list[Constraint] = field(default_factory=list)
    objective: dict[str, np.ndarray] = field(default_factory=dict)
    sense: str = "feasibility"

    def add_block(self, name: str, dim: int) -> None:
        if name in self.blocks:
            raise ValueError(f"duplicate block {name}")
        self.blocks[name] = int(dim)

    def add(self, coeffs: Mapping[str, np.ndarray], sense: str, rhs: float, label: str = "") -> None:
        if sense not in SENSES:
            raise ValueError(f"unknown constraint sense {sense!r}")
        clean = {}
        for name, A in coeffs.items():
            if name not in self.blocks:
                raise ValueError(f"constraint {label!r} references unknown block {name}")
            A = np.asarray(A, dtype=complex)
            n = self.blocks[name]
            if A.shape != (n, n):
                raise ValueError(f"constraint {label!r}: block {name} expects {n}x{n}, got {A.shape}")
            clean[name] = A
        self.constraints.append(Constraint(clean, sense, float(rhs), label))

    def set_objective(self, coeffs: Mapping[str, np.ndarray], sense: str) -> None:
        if sense not in ("max", "min"):
            raise ValueError("objective sense must be 'max' or 'min'")
        self.objective = {b: np.asarray(F, dtype=complex) for b, F in coeffs.items()}
        self.sense = sense

    def validate(self) -> None:
        mats = [A for c in self.constraints for A in c.coeffs.values()] + list(self.objective.values())
        for A in mats:
            if np.max(np.abs(A - A.conj().T), initial=0.0) > 1e-12 * max(1.0, np.abs(A).max(initial=0.0)):
                raise ValueError("constraint/objective matrices must be Hermitian")

    def objective_value(self, X: Mapping[str, np.ndarray]) -> float:
        return float(sum(np.real(np.trace(F @ X[b])) for b, F in self.objective.items()))

    def dump(self) -> str:
        """Plain-text rendering for offline cross-checking."""
        lines = [f"sense {self.sense}"]
        for name, n in self.blocks.items():
            lines.append(f"block {name} {n}")
        if self.objective:
            for name, F in self.objective.items():
                lines.append(f"objective {name}")
                lines.extend(_fmt_matrix(F))
        for c in self.constraints:
            lines.append(f"constraint {c.label or '-'} {c.sense} {c.rhs!r}")
            for name, A in c.coeffs.items():
                lines.append(f"  coeff {name}")
                lines.extend("  " + row for row in _fmt_matrix(A))
        return "\n".join(lines) + "\n"


def _fmt_matrix(A: np.ndarray) -> list[str]:
    return [" ".join(f"{z.real!r}{z.imag:+.17g}j" for z in row) for row in A]


@dataclass
class SdpSolution:
    X: dict[str, np.ndarray]
    status: str  # optimal | feasible | infeasible | numerical-failure
    objective: float = float("nan")
    max_violation: float = float("nan")
    eigenvalues: dict[str, np.ndarray] = field(default_factory=dict)
    iterations: int = 0
    phase1_slack: float | None = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "feasible")


# --------------------------------------------------------------- real form

@dataclass
class RealSdp:
    """``min <C,Y> + c.x`` s.t. ``A(Y) + Ax x = b``, ``Y >= 0``, ``x >= 0``."""

    sizes: list[int]
    A: list[np.ndarray]  # per block (m, n, n)
    Ax: np.ndarray  # (m, nx)
    b: np.ndarray
    C: list[np.ndarray]
    c: np.ndarray


@dataclass
class _Layout:
    names: list[str]
    rows: list[int]  # original constraint index per equality row (-1 for none)
    n_slack: int
    t_index: int | None


def realify(problem: SdpProblem, phase1: bool = False) -> tuple[RealSdp, _Layout]:
    """Real symmetric standard form with one slack per inequality.

    With ``phase1`` every constraint is relaxed by a shared ``t >= 0`` (scaled
    per row) and the objective becomes ``min t``.
    """
    names = list(problem.blocks)
    sizes = [2 * problem.blocks[nm] for nm in names]
    rows_A: list[list[np.ndarray]] = []
    rows_x: list[dict[int, float]] = []
    rhs: list[float] = []
    origin: list[int] = []
    n_slack = 0
    t_index = None
    for ci, con in enumerate(problem.constraints):
        mats = [0.5 * hermitian_to_real(con.coeffs[nm]) if nm in con.coeffs else None for nm in names]
        w = 1.0 / con.scale() if phase1 else 1.0
        mats = [None if M is None else w * M for M in mats]
        r = w * con.rhs
        if con.sense == "==" and not phase1:
            rows_A.append(mats); rows_x.append({}); rhs.append(r); origin.append(ci)
            continue
        senses = ["<=", ">="] if con.sense == "==" else [con.sense]
        for s in senses:
            xs: dict[int, float] = {n_slack: 1.0 if s == "<=" else -1.0}
            n_slack += 1
            if phase1:
                xs[-1] = -1.0 if s == "<=" else 1.0
            rows_A.append(mats); rows_x.append(xs); rhs.append(r); origin.append(ci)
    nx = n_slack + (1 if phase1 else 0)
    if phase1:
        t_index = n_slack
    m = len(rhs)
    A = []
    for bi, n in enumerate(sizes):
        arr = np.zeros((m, n, n))
        for i in range(m):
            if rows_A[i][bi] is not None:
                arr[i] = rows_A[i][bi]
        A.append(arr)
    Ax = np.zeros((m, nx))
    for i, xs in enumerate(rows_x):
        for j, v in xs.items():
            Ax[i, t_index if j == -1 else j] = v
    C = [np.zeros((n, n)) for n in sizes]
    c = np.zeros(nx)
    if phase1:
        c[t_index] = 1.0
    elif problem.objective:
        sign = -1.0 if problem.sense == "max" else 1.0
        for bi, nm in enumerate(names):
            if nm in problem.objective:
                C[bi] = sign * 0.5 * hermitian_to_real(problem.objective[nm])
    return RealSdp(sizes, A, Ax, np.array(rhs, float), C, c), _Layout(names, origin, n_slack, t_index)


def derealify(Y: list[np.ndarray], layout: _Layout) -> dict[str, np.ndarray]:
    return {nm: real_to_hermitian(Yb) for nm, Yb in zip(layout.names, Y)}


# --------------------------------------------------------------------- IPM

@dataclass
class _IpmResult:
    status: str
    Y: list[np.ndarray]
    x: np.ndarray
    y: np.ndarray
    pobj: float
    dobj: float
    iterations: int
    relp: float
    reld: float
    relgap: float


def _max_step(X: np.ndarray, dX: np.ndarray) -> float:
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    Li = np.linalg.inv(L)
    W = Li @ dX @ Li.T
    lam = np.linalg.eigvalsh(0.5 * (W + W.T))[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _lp_step(x: np.ndarray, dx: np.ndarray) -> float:
    neg = dx < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-x[neg] / dx[neg]))


def ipm(
    P: RealSdp,
    tol: float = 1e-9,
    max_iter: int = 500,
    stop: Callable[[dict], str | None] | None = None,
) -> _IpmResult:
    """Infeasible primal-dual path following on a :class:`RealSdp`."""
    m = P.b.size
    nb = len(P.sizes)
    nx = P.c.size
    # row equilibration
    row_norm = np.sqrt(sum(np.einsum("ipq,ipq->i", A, A) for A in P.A) + np.einsum("ij,ij->i", P.Ax, P.Ax))
    row_norm[row_norm == 0] = 1.0
    A = [Ab / row_norm[:, None, None] for Ab in P.A]
    Ax = P.Ax / row_norm[:, None]
    b = P.b / row_norm
    cnorm = np.sqrt(sum(np.sum(Cb**2) for Cb in P.C) + np.sum(P.c**2))
    cscale = max(1.0, cnorm)
    C = [Cb / cscale for Cb in P.C]
    c = P.c / cscale
    normb = np.linalg.norm(b)
    normC = np.sqrt(sum(np.sum(Cb**2) for Cb in C) + np.sum(c**2))

    Y, Z = [], []
    for bi, n in enumerate(P.sizes):
        an = np.sqrt(np.einsum("ipq,ipq->i", A[bi], A[bi]))
        xi = max(10.0, np.sqrt(n), n * np.max((1 + np.abs(b)) / (1 + an), initial=1.0))
        eta = max(10.0, np.sqrt(n), np.max(an, initial=0.0), np.linalg.norm(C[bi]))
        Y.append(xi * np.eye(n))
        Z.append(eta * np.eye(n))
    xi_x = max(10.0, np.max(1 + np.abs(b), initial=1.0))
    x = xi_x * np.ones(nx)
    z = max(10.0, np.linalg.norm(c)) * np.ones(nx)
    y = np.zeros(m)
    ntot = sum(P.sizes) + nx

    status = "max_iter"
    relp = reld = relgap = np.inf
    mu_hist: list[float] = []
    pobj = dobj = np.nan
    it = 0
    for it in range(1, max_iter + 1):
        AY = sum(np.einsum("ipq,pq->i", A[bi], Y[bi]) for bi in range(nb)) + Ax @ x
        rp = b - AY
        Rd = [C[bi] - np.einsum("i,ipq->pq", y, A[bi]) - Z[bi] for bi in range(nb)]
        rdx = c - Ax.T @ y - z
        pobj = sum(np.sum(C[bi] * Y[bi]) for bi in range(nb)) + c @ x
        dobj = b @ y
        gap = sum(np.sum(Y[bi] * Z[bi]) for bi in range(nb)) + x @ z
        mu = gap / ntot
        relp = np.linalg.norm(rp) / (1 + normb)
        reld = np.sqrt(sum(np.sum(R**2) for R in Rd) + np.sum(rdx**2)) / (1 + normC)
        relgap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        if stop is not None:
            s = stop({"x": x, "relp": relp, "reld": reld, "dobj": dobj * cscale, "pobj": pobj * cscale})
            if s is not None:
                status = s
                break
        if not np.isfinite(mu):
            status = "numerical"
            break
        feas = max(relp, reld)
        mu_hist.append(mu)
        if len(mu_hist) > 30 and mu_hist[-1] > 0.5 * mu_hist[-16]:
            status = "stalled"
            break
        if feas < 10 * tol and (relgap < tol or gap / (1 + abs(pobj)) < tol):
            status = "optimal"
            break
        if feas < 1e-7 and mu < 1e-14 * (1 + abs(pobj)):
            # residuals stagnate at rounding level once the gap has closed
            status = "optimal"
            break
        big = max(max(np.abs(Yb).max(initial=0) for Yb in Y), np.abs(x).max(initial=0), np.abs(y).max(initial=0))
        if not np.isfinite(big) or big > 1e12:
            status = "diverged"
            break
        try:
            Zinv = [np.linalg.inv(Zb) for Zb in Z]
            M = np.zeros((m, m))
            for bi in range(nb):
                Pm = np.einsum("pq,jqr,rs->jps", Y[bi], A[bi], Zinv[bi])
                M += np.einsum("ipq,jqp->ij", A[bi], Pm)
            if nx:
                M += (Ax * (x / z)) @ Ax.T
            M = 0.5 * (M + M.T)
            try:
                Lm = np.linalg.cholesky(M + 1e-14 * np.trace(M) / max(m, 1) * np.eye(m))
                msolve = lambda r: np.linalg.solve(Lm.T, np.linalg.solve(Lm, r))  # noqa: E731
            except np.linalg.LinAlgError:
                msolve = lambda r: np.linalg.lstsq(M, r, rcond=None)[0]  # noqa: E731
        except np.linalg.LinAlgError:
            status = "numerical"
            break

        def direction(smu, corrY, corrx):
            G = [smu * Zinv[bi] - Y[bi] - corrY[bi] - Y[bi] @ Rd[bi] @ Zinv[bi] for bi in range(nb)]
            gx = (smu - x * z - corrx) / z - (x / z) * rdx
            rhs = rp - sum(np.einsum("ipq,pq->i", A[bi], G[bi]) for bi in range(nb)) - Ax @ gx
            dy = msolve(rhs)
            dZ = [Rd[bi] - np.einsum("i,ipq->pq", dy, A[bi]) for bi in range(nb)]
            dz = rdx - Ax.T @ dy
            dY = []
            for bi in range(nb):
                D = smu * Zinv[bi] - Y[bi] - corrY[bi] - Y[bi] @ dZ[bi] @ Zinv[bi]
                dY.append(0.5 * (D + D.T))
            dx = gx + (x / z) * (Ax.T @ dy)
            return dY, dx, dy, dZ, dz

        def steps(dY, dx, dZ, dz):
            ap = min([_max_step(Y[bi], dY[bi]) for bi in range(nb)] + [_lp_step(x, dx)])
            ad = min([_max_step(Z[bi], dZ[bi]) for bi in range(nb)] + [_lp_step(z, dz)])
            return ap, ad

        zeroY = [np.zeros_like(Yb) for Yb in Y]
        dYa, dxa, _, dZa, dza = direction(0.0, zeroY, np.zeros(nx))
        ap, ad = steps(dYa, dxa, dZa, dza)
        ap, ad = min(1.0, ap), min(1.0, ad)
        gap_aff = sum(np.sum((Y[bi] + ap * dYa[bi]) * (Z[bi] + ad * dZa[bi])) for bi in range(nb))
        gap_aff += (x + ap * dxa) @ (z + ad * dza)
        sigma = min(1.0, max(0.0, gap_aff / gap)) ** 3
        corrY = [dYa[bi] @ dZa[bi] @ Zinv[bi] for bi in range(nb)]
        dY, dx, dy, dZ, dz = direction(sigma * mu, corrY, dxa * dza)
        ap, ad = steps(dY, dx, dZ, dz)
        tau = 0.98
        ap, ad = min(1.0, tau * ap), min(1.0, tau * ad)
        if ap < 1e-12 and ad < 1e-12:
            status = "stalled"
            break
        Y = [Y[bi] + ap * dY[bi] for bi in range(nb)]
        Y = [0.5 * (Yb + Yb.T) for Yb in Y]
        x = x + ap * dx
        Z = [Z[bi] + ad * dZ[bi] for bi in range(nb)]
        Z = [0.5 * (Zb + Zb.T) for Zb in Z]
        z = z + ad * dz
        y = y + ad * dy
    return _IpmResult(status, Y, x, y, pobj * cscale, dobj * cscale, it, relp, reld, relgap)


# ------------------------------------------------------------------ driver

def _finish(problem: SdpProblem, X: dict[str, np.ndarray], status: str, **kw) -> SdpSolution:
    eig = {nm: np.linalg.eigvalsh(Xb) for nm, Xb in X.items()}
    viol = 0.0
    for con in problem.constraints:
        viol = max(viol, con.violation(X) / max(1.0, abs(con.rhs)))
    obj = problem.objective_value(X) if problem.objective else float("nan")
    return SdpSolution(X, status, obj, viol, eig, **kw)


def _trivial_rows(problem: SdpProblem) -> tuple[SdpProblem, bool]:
    """Drop constraints without coefficients; report if one of them is violated."""
    keep = []
    bad = False
    for con in problem.constraints:
        if con.coeffs and any(np.any(A) for A in con.coeffs.values()):
            keep.append(con)
        elif con.violation({b: np.zeros_like(A) for b, A in con.coeffs.items()}) > 1e-12 * max(1.0, abs(con.rhs)):
            bad = True
    return SdpProblem(dict(problem.blocks), keep, dict(problem.objective), problem.sense), bad


def _psd_project(X: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    out = {}
    for nm, Xb in X.items():
        lam, V = np.linalg.eigh(Xb)
        out[nm] = (V * np.clip(lam, 0, None)) @ V.conj().T
    return out


def phase1(problem: SdpProblem, infeas_tol: float = 1e-6, tol: float = 1e-9, max_iter: int = 500) -> SdpSolution:
    """Decide feasibility by minimising the shared relaxation ``t``."""
    P, layout = realify(problem, phase1=True)
    ti = layout.t_index

    def stop(st):
        # t is an upper bound on t* once primal feasible and b.y a lower
        # bound once dual feasible
        if st["relp"] < 1e-8 and st["x"][ti] <= infeas_tol:
            return "feasible"
        if st["reld"] < 1e-8 and st["dobj"] > infeas_tol:
            return "infeasible"
        return None

    res = ipm(P, tol=tol, max_iter=max_iter, stop=stop)
    X = _psd_project(derealify(res.Y, layout))
    t = float(res.x[ti]) if res.x.size else 0.0
    if res.status == "optimal":
        status = "feasible" if t <= infeas_tol else "infeasible"
    elif res.status in ("feasible", "infeasible"):
        status = res.status
    elif res.relp < 1e-6 and res.reld < 1e-6:
        # stalled near the threshold: decide on the bracket midpoint
        status = "feasible" if 0.5 * (t + res.dobj) <= infeas_tol else "infeasible"
    elif res.relp < 1e-6 and t <= infeas_tol:
        status = "feasible"
    else:
        status = "numerical-failure"
    return _finish(problem, X, status, iterations=res.iterations, phase1_slack=t,
                   message=f"phase1 {res.status} t={t:.3e}")


def solve(
    problem: SdpProblem,
    tol: float = 1e-9,
    max_iter: int = 500,
    infeas_tol: float = 1e-6,
) -> SdpSolution:
    """Solve a Hermitian-block SDP.

    Returns a solution whose ``status`` is ``optimal`` (optimisation sense),
    ``feasible`` (feasibility sense), ``infeasible`` or ``numerical-failure``.
    """
    problem.validate()
    if not problem.blocks:
        raise ValueError("problem has no blocks")
    reduced, bad = _trivial_rows(problem)
    if bad:
        zero = {nm: np.zeros((n, n), complex) for nm, n in problem.blocks.items()}
        return _finish(problem, zero, "infeasible", message="constraint without coefficients violated")
    if reduced.sense == "feasibility" or not reduced.objective:
        sol = phase1(reduced, infeas_tol, tol, max_iter)
        return _finish(problem, sol.X, sol.status, iterations=sol.iterations,
                       phase1_slack=sol.phase1_slack, message=sol.message)
    P, layout = realify(reduced)
    res = ipm(P, tol=tol, max_iter=max_iter)
    if res.status == "optimal":
        X = _psd_project(derealify(res.Y, layout))
        return _finish(problem, X, "optimal", iterations=res.iterations, message="ipm optimal")
    check = phase1(reduced, infeas_tol, tol, max_iter)
    if check.status == "infeasible":
        return _finish(problem, check.X, "infeasible", iterations=res.iterations + check.iterations,
                       phase1_slack=check.phase1_slack, message=f"ipm {res.status}; {check.message}")
    X = _psd_project(derealify(res.Y, layout))
    return _finish(problem, X, "numerical-failure", iterations=res.iterations,
                   message=f"ipm {res.status} relp={res.relp:.2e} reld={res.reld:.2e} gap={res.relgap:.2e}")


# ------------------------------------------------------------ rank tools

def numerical_rank(X: np.ndarray, threshold: float = 1e-6) -> tuple[int, np.ndarray | None]:
    """Rank relative to ``threshold * lambda_max``; rank-1 matrices also return ``t`` with ``X ~ t t^H``."""
    X = 0.5 * (X + X.conj().T)
    lam, V = np.linalg.eigh(X)
    lmax = lam[-1]
    if lmax <= 0:
        return 0, None
    rank = int(np.sum(lam > threshold * lmax))
    if rank == 1:
        return 1, np.sqrt(lmax) * V[:, -1]
    return rank, None


def _factor(X: np.ndarray, threshold: float) -> np.ndarray:
    lam, V = np.linalg.eigh(0.5 * (X + X.conj().T))
    if lam[-1] <= 0:
        return np.zeros((X.shape[0], 0), complex)
    keep = lam > threshold * lam[-1]
    return V[:, keep] * np.sqrt(lam[keep])


def _hermitian_basis(r: int) -> list[np.ndarray]:
    basis = []
    for p in range(r):
        E = np.zeros((r, r), complex)
        E[p, p] = 1.0
        basis.append(E)
    for p in range(r):
        for q in range(p + 1, r):
            E = np.zeros((r, r), complex)
            E[p, q] = E[q, p] = 1.0
            basis.append(E)
            E = np.zeros((r, r), complex)
            E[p, q], E[q, p] = 1j, -1j
            basis.append(E)
    return basis


def reduce_rank(
    problem: SdpProblem,
    X: Mapping[str, np.ndarray],
    active_tol: float = 1e-7,
    threshold: float = 1e-6,
    preserve: Iterable[int] | None = None,
    max_rounds: int = 64,
) -> dict[str, np.ndarray]:
    """Lower block ranks while keeping constraint values and the objective.

    Each round writes ``X_b = V_b V_b^H`` and finds Hermitian ``D_b`` with
    ``sum_b tr(V_b^H A_cb V_b D_b) = 0`` for every preserved constraint (the
    active ones plus the objective).  ``X_b <- V_b (I - D_b/lam) V_b^H`` with
    ``lam`` the largest eigenvalue over all ``D_b`` drops at least one rank.
    Inactive constraints that would break are added to the preserved set and
    the round is redone.
    """
    X = {nm: np.array(Xb, dtype=complex) for nm, Xb in X.items()}
    forced = set(preserve or ())
    for _ in range(max_rounds):
        V = {nm: _factor(Xb, threshold) for nm, Xb in X.items()}
        if all(v.shape[1] <= 1 for v in V.values()):
            break
        active = set(forced)
        for ci, con in enumerate(problem.constraints):
            if con.slack(X) <= active_tol * con.scale():
                active.add(ci)
        done = False
        while not done:
            step = _rank_step(problem, V, active)
            if step is None:
                return X
            trial = {}
            for nm, v in V.items():
                if v.shape[1] == 0:
                    trial[nm] = np.zeros_like(X[nm])
                    continue
                W = v @ (np.eye(v.shape[1]) - step[nm]) @ v.conj().T
                trial[nm] = 0.5 * (W + W.conj().T)
            broken = [ci for ci, con in enumerate(problem.constraints)
                      if ci not in active and con.slack(trial) < -active_tol * con.scale()]
            if broken:
                active.update(broken)
            else:
                X = trial
                done = True
    return X


def _rank_step(problem: SdpProblem, V: dict[str, np.ndarray], active: set[int]) -> dict[str, np.ndarray] | None:
    cols: list[tuple[str, np.ndarray]] = []
    for nm, v in V.items():
        for E in _hermitian_basis(v.shape[1]):
            cols.append((nm, E))
    if not cols:
        return None
    funcs: list[dict[str, np.ndarray]] = [problem.constraints[ci].coeffs for ci in sorted(active)]
    if problem.objective:
        funcs.append(problem.objective)
    rows = []
    for coeffs in funcs:
        row = []
        for nm, E in cols:
            A = coeffs.get(nm)
            if A is None:
                row.append(0.0)
            else:
                row.append(float(np.real(np.trace(V[nm].conj().T @ A @ V[nm] @ E))))
        rows.append(row)
    Amat = np.array(rows).reshape(len(funcs), len(cols))
    if Amat.shape[0] == 0:
        coef = np.zeros(len(cols))
        coef[0] = 1.0
    else:
        _, s, vt = np.linalg.svd(Amat)
        rank = int(np.sum(s > 1e-10 * max(s.max(initial=0.0), 1e-300)))
        if rank >= len(cols):
            return None
        coef = vt[rank]
    D = {nm: np.zeros((v.shape[1], v.shape[1]), complex) for nm, v in V.items()}
    for a, (nm, E) in zip(coef, cols):
        D[nm] += a * E
    lam_max = max((np.linalg.eigvalsh(Db)[-1] for Db in D.values() if Db.size), default=0.0)
    lam_min = min((np.linalg.eigvalsh(Db)[0] for Db in D.values() if Db.size), default=0.0)
    if max(lam_max, -lam_min) < 1e-14:
        return None
    if lam_max < -lam_min:
        D = {nm: -Db for nm, Db in D.items()}
        lam_max = -lam_min
    return {nm: Db / lam_max for nm, Db in D.items()}
