"""Second-order statistics, achievable rates and incident energies.

Every receiver sees a scalar signal, so its statistics reduce to a variance
``C`` and a pseudo-variance ``Chat``.  For the cellular users these are the
received signal ``y_k`` and its interference-plus-noise part ``w_k``; for the
D2D nodes the received ``z_j`` and the interference-plus-noise ``q_j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import N_D2D, NetworkInstance


class InvalidStatsError(ValueError):
    """Receive statistics that cannot describe a Gaussian signal."""


def quad(v: np.ndarray, C: np.ndarray) -> float:
    """``v^H C v`` for Hermitian ``C`` (real part)."""
    return float(np.real(np.vdot(v, C @ v)))


def pquad(v: np.ndarray, Chat: np.ndarray) -> complex:
    """``v^H Chat v^*``, the pseudo-variance seen through channel ``v``."""
    return complex(np.vdot(v, Chat @ np.conj(v)))


@dataclass(frozen=True)
class StreamCovariance:
    C: np.ndarray
    Chat: np.ndarray

    def augmented(self) -> np.ndarray:
        return np.block([[self.C, self.Chat], [np.conj(self.Chat), np.conj(self.C)]])

    def is_valid(self, tol: float = 1e-9) -> bool:
        """Hermitian PSD covariance with a PSD augmented matrix."""
        scale = max(float(np.real(np.trace(self.C))), 1.0)
        if not np.allclose(self.C, self.C.conj().T, atol=tol * scale):
            return False
        if not np.allclose(self.Chat, self.Chat.T, atol=tol * scale):
            return False
        aug = self.augmented()
        lam = np.linalg.eigvalsh(0.5 * (aug + aug.conj().T))
        return bool(lam.min() >= -tol * scale)


@dataclass
class TxDesign:
    """Transmit covariances and pseudo-covariances of all streams.

    ``C_B[k]`` is the covariance of the BS stream for cellular user ``k`` and
    ``C_D[j]`` that of D2D node ``j``.  Pseudo-covariances default to zero
    (proper signaling).  Beamformers are stored when every block is rank-1.
    """

    C_B: np.ndarray  # (K, N, N)
    C_D: np.ndarray  # (2, M, M)
    Chat_B: np.ndarray | None = None
    Chat_D: np.ndarray | None = None
    t_B: np.ndarray | None = None  # (K, N)
    t_D: np.ndarray | None = None  # (2, M)

    def __post_init__(self) -> None:
        self.C_B = np.asarray(self.C_B, dtype=complex)
        self.C_D = np.asarray(self.C_D, dtype=complex)
        if self.Chat_B is None:
            self.Chat_B = np.zeros_like(self.C_B)
        if self.Chat_D is None:
            self.Chat_D = np.zeros_like(self.C_D)

    @classmethod
    def zeros(cls, instance: NetworkInstance) -> "TxDesign":
        cfg = instance.config
        return cls(
            np.zeros((cfg.K, cfg.N, cfg.N), complex),
            np.zeros((N_D2D, cfg.M, cfg.M), complex),
            t_B=np.zeros((cfg.K, cfg.N), complex),
            t_D=np.zeros((N_D2D, cfg.M), complex),
        )

    @classmethod
    def from_beamformers(cls, t_B: np.ndarray, t_D: np.ndarray) -> "TxDesign":
        t_B = np.asarray(t_B, dtype=complex)
        t_D = np.asarray(t_D, dtype=complex)
        C_B = np.einsum("ki,kj->kij", t_B, t_B.conj())
        C_D = np.einsum("ki,kj->kij", t_D, t_D.conj())
        return cls(C_B, C_D, t_B=t_B, t_D=t_D)

    @property
    def is_proper(self) -> bool:
        return not (np.any(self.Chat_B) or np.any(self.Chat_D))

    @property
    def bs_streams(self) -> list[StreamCovariance]:
        return [StreamCovariance(c, p) for c, p in zip(self.C_B, self.Chat_B)]

    @property
    def d2d_streams(self) -> list[StreamCovariance]:
        return [StreamCovariance(c, p) for c, p in zip(self.C_D, self.Chat_D)]

    def bs_power(self) -> float:
        return float(np.real(np.trace(self.C_B, axis1=1, axis2=2)).sum())

    def d2d_power(self) -> np.ndarray:
        return np.real(np.trace(self.C_D, axis1=1, axis2=2))

    def proper_part(self) -> "TxDesign":
        return TxDesign(self.C_B.copy(), self.C_D.copy(), t_B=self.t_B, t_D=self.t_D)

    def with_pseudo(self, Chat_B: np.ndarray, Chat_D: np.ndarray) -> "TxDesign":
        return TxDesign(self.C_B, self.C_D, np.asarray(Chat_B, complex), np.asarray(Chat_D, complex),
                        self.t_B, self.t_D)

    def check(self, instance: NetworkInstance, tol: float = 1e-8) -> list[str]:
        """Power-budget and augmented-PSD violations."""
        cfg = instance.config
        out = []
        if self.bs_power() > cfg.P_B + tol:
            out.append(f"BS power {self.bs_power():.9g} exceeds P_B={cfg.P_B}")
        for j, p in enumerate(self.d2d_power()):
            if p > cfg.P_j[j] + tol:
                out.append(f"D2D {j + 1} power {p:.9g} exceeds P_j={cfg.P_j[j]}")
        for name, streams in (("B", self.bs_streams), ("D", self.d2d_streams)):
            for i, s in enumerate(streams):
                if not s.is_valid(max(tol, 1e-9)):
                    out.append(f"stream {name}{i + 1} augmented covariance not PSD")
        return out


@dataclass(frozen=True)
class LinkStats:
    """Scalar receive statistics of one receiver.

    For D2D receivers ``Cy``/``Cw`` hold ``Cz``/``Cq``.
    """

    Cy: float
    Cyhat: complex
    Cw: float
    Cwhat: complex
    sigma2_rsi: float = 0.0

    @property
    def rate_proper(self) -> float:
        return float(np.log2(self.Cy / self.Cw))

    @property
    def rate_improper(self) -> float:
        num = 1.0 - abs(self.Cyhat) ** 2 / self.Cy**2
        den = 1.0 - abs(self.Cwhat) ** 2 / self.Cw**2
        return float(0.5 * np.log2(num / den))

    def check(self, tol: float = 1e-12) -> None:
        if not self.Cw > 0:
            raise InvalidStatsError(f"interference-plus-noise variance {self.Cw} is not positive")
        if self.Cy < self.Cw - tol * max(1.0, self.Cy):
            raise InvalidStatsError("received variance below interference variance")
        for c, ch, name in ((self.Cy, self.Cyhat, "received"), (self.Cw, self.Cwhat, "interference")):
            if abs(ch) > c * (1 + 1e-12):
                raise InvalidStatsError(f"{name} augmented covariance not PSD: |Chat|={abs(ch)} > C={c}")


@dataclass
class RateEnergyReport:
    R_proper: np.ndarray
    R_improper: np.ndarray
    Rd_proper: np.ndarray
    Rd_improper: np.ndarray
    E: np.ndarray
    Ed: np.ndarray
    sigma2_rsi: np.ndarray
    cellular: list[LinkStats] = field(default_factory=list)
    d2d: list[LinkStats] = field(default_factory=list)

    @property
    def R(self) -> np.ndarray:
        return self.R_proper + self.R_improper

    @property
    def Rd(self) -> np.ndarray:
        return self.Rd_proper + self.Rd_improper


def _check_dims(instance: NetworkInstance, design: TxDesign) -> None:
    cfg = instance.config
    want = {
        "C_B": (cfg.K, cfg.N, cfg.N),
        "C_D": (N_D2D, cfg.M, cfg.M),
        "Chat_B": (cfg.K, cfg.N, cfg.N),
        "Chat_D": (N_D2D, cfg.M, cfg.M),
    }
    for name, shape in want.items():
        got = getattr(design, name).shape
        if got != shape:
            raise ValueError(f"design {name} has shape {got}, expected {shape}")


def link_stats_cellular(
    k: int,
    instance: NetworkInstance,
    design: TxDesign,
    order: Sequence[int] | None = None,
) -> LinkStats:
    """Receive statistics at cellular user ``k`` (0-based).

    With ``order`` (an encoding order of the cellular users) the BS streams
    encoded before ``k`` are pre-cancelled, as under dirty paper coding.
    """
    _check_dims(instance, design)
    ch, cfg = instance.channels, instance.config
    h = ch.h_B[k]
    if order is None:
        interferers = [m for m in range(cfg.K) if m != k]
    else:
        pos = list(order).index(k)
        interferers = list(order)[pos + 1:]
    desired = quad(h, design.C_B[k])
    desired_hat = pquad(h, design.Chat_B[k])
    interf = sum(quad(h, design.C_B[m]) for m in interferers)
    interf_hat = sum(pquad(h, design.Chat_B[m]) for m in interferers)
    for j in range(N_D2D):
        interf += quad(ch.h_D[k, j], design.C_D[j])
        interf_hat += pquad(ch.h_D[k, j], design.Chat_D[j])
    Cw = interf + cfg.sigma2_n
    return LinkStats(desired + Cw, complex(desired_hat + interf_hat), Cw, complex(interf_hat))


def rsi_variance(j: int, instance: NetworkInstance, design: TxDesign) -> tuple[float, complex]:
    """Residual self-interference variance and pseudo-variance at node ``j``."""
    cfg = instance.config
    if cfg.sigma2_rsi is None:
        dg = instance.channels.dg_self[j]
        return quad(dg, design.C_D[j]), pquad(dg, design.Chat_D[j])
    if cfg.rsi_gated and not np.real(np.trace(design.C_D[j])) > 0:
        return 0.0, 0j
    return float(cfg.sigma2_rsi), 0j


def link_stats_d2d(j: int, instance: NetworkInstance, design: TxDesign, eta: float = 1.0) -> LinkStats:
    """Receive statistics at D2D node ``j`` (0-based) after power splitting ``eta``.

    The splitter scales every incident signal term, but not the residual
    self-interference or the receiver noise.
    """
    _check_dims(instance, design)
    ch, cfg = instance.channels, instance.config
    i = 1 - j
    desired = quad(ch.g_peer[j], design.C_D[i])
    desired_hat = pquad(ch.g_peer[j], design.Chat_D[i])
    C_BS = design.C_B.sum(axis=0)
    Chat_BS = design.Chat_B.sum(axis=0)
    interf = quad(ch.g_B[j], C_BS)
    interf_hat = pquad(ch.g_B[j], Chat_BS)
    g = ch.g_self[j]
    # transmitter noise of node j leaks through the self-interference channel
    interf += cfg.kappa * quad(g, np.diag(np.diag(design.C_D[j])))
    interf_hat += cfg.kappa * pquad(g, design.Chat_D[j])
    rsi, rsi_hat = rsi_variance(j, instance, design)
    Cq = eta * interf + rsi + cfg.sigma2_n
    Cqhat = eta * interf_hat + rsi_hat
    return LinkStats(eta * desired + Cq, complex(eta * desired_hat + Cqhat), Cq, complex(Cqhat), rsi)


def cellular_energy(k: int, instance: NetworkInstance, design: TxDesign) -> float:
    return link_stats_cellular(k, instance, design).Cy - instance.config.sigma2_n


def d2d_energy(j: int, instance: NetworkInstance, design: TxDesign, eta: float = 0.0) -> float:
    """Energy incident on node ``j``'s harvester when a fraction ``eta`` goes to decoding."""
    ch, cfg = instance.channels, instance.config
    i = 1 - j
    e = quad(ch.g_peer[j], design.C_D[i]) + quad(ch.g_B[j], design.C_B.sum(axis=0))
    e += cfg.kappa * quad(ch.g_self[j], np.diag(np.diag(design.C_D[j])))
    return (1.0 - eta) * e


def _eta_pair(ps_eta: float | Sequence[float] | None) -> tuple[float, float]:
    if ps_eta is None:
        return (1.0, 1.0)
    if np.isscalar(ps_eta):
        return (float(ps_eta), float(ps_eta))  # type: ignore[arg-type]
    a, b = ps_eta  # type: ignore[misc]
    return (float(a), float(b))


def rates_and_energies(
    instance: NetworkInstance,
    design: TxDesign,
    ps_eta: float | Sequence[float] | None = None,
    order: Sequence[int] | None = None,
) -> RateEnergyReport:
    """Evaluate every rate and incident energy of a design.

    ``ps_eta`` is the power-splitting factor of the D2D receivers (scalar or
    one per node); ``None`` means pure information decoding for the rates and
    pure harvesting for the energies.
    """
    cfg = instance.config
    cell = [link_stats_cellular(k, instance, design, order) for k in range(cfg.K)]
    etas = _eta_pair(ps_eta)
    d2d = [link_stats_d2d(j, instance, design, etas[j]) for j in range(N_D2D)]
    for s in cell + d2d:
        s.check()
    e_eta = (0.0, 0.0) if ps_eta is None else etas
    return RateEnergyReport(
        R_proper=np.array([s.rate_proper for s in cell]),
        R_improper=np.array([s.rate_improper for s in cell]),
        Rd_proper=np.array([s.rate_proper for s in d2d]),
        Rd_improper=np.array([s.rate_improper for s in d2d]),
        E=np.array([s.Cy - cfg.sigma2_n for s in cell]),
        Ed=np.array([d2d_energy(j, instance, design, e_eta[j]) for j in range(N_D2D)]),
        sigma2_rsi=np.array([s.sigma2_rsi for s in d2d]),
        cellular=cell,
        d2d=d2d,
    )


def augmented_matrix(C: float, Chat: complex) -> np.ndarray:
    return np.array([[C, Chat], [np.conj(Chat), C]], dtype=complex)


def augmented_rate_check(stats: LinkStats, rate: float | None = None) -> float:
    """Residual between the augmented-determinant rate and the decomposed rate."""
    det_y = float(np.real(np.linalg.det(augmented_matrix(stats.Cy, stats.Cyhat))))
    det_w = float(np.real(np.linalg.det(augmented_matrix(stats.Cw, stats.Cwhat))))
    r_aug = 0.5 * np.log2(det_y / det_w)
    if rate is None:
        rate = stats.rate_proper + stats.rate_improper
    return abs(r_aug - rate)
