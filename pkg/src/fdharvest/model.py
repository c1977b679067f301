"""Network topology, channel data and configuration.

Channel naming follows the receiver-first convention ``<link>_<rx><tx>``:

=========  ======================================  ======
key        link                                    length
=========  ======================================  ======
``h_kB``   BS -> cellular user k                    N
``h_kj``   D2D node j -> cellular user k            M
``g_ji``   D2D node i -> D2D node j (i != j)        M
``g_jB``   BS -> D2D node j                         N
``g_jj``   self-interference estimate at node j     M
``dg_jj``  residual self-interference error at j    M
=========  ======================================  ======

Indices are 1-based in documents and 0-based in code.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

N_D2D = 2


class ConfigError(ValueError):
    """Raised when a channel/config document cannot be turned into an instance."""


@dataclass(frozen=True)
class ChannelSet:
    h_B: np.ndarray  # (K, N)
    h_D: np.ndarray  # (K, 2, M)
    g_peer: np.ndarray  # (2, M); row j is g_ji with i the peer of j
    g_B: np.ndarray  # (2, N)
    g_self: np.ndarray  # (2, M)
    dg_self: np.ndarray  # (2, M)

    @property
    def K(self) -> int:
        return self.h_B.shape[0]

    @property
    def N(self) -> int:
        return self.h_B.shape[1]

    @property
    def M(self) -> int:
        return self.g_peer.shape[1]

    def named(self) -> dict[str, np.ndarray]:
        """All vectors keyed by their document names."""
        out: dict[str, np.ndarray] = {}
        for k in range(self.K):
            out[f"h_{k + 1}B"] = self.h_B[k]
            for j in range(N_D2D):
                out[f"h_{k + 1}{j + 1}"] = self.h_D[k, j]
        for j in range(N_D2D):
            i = 1 - j
            out[f"g_{j + 1}{i + 1}"] = self.g_peer[j]
            out[f"g_{j + 1}B"] = self.g_B[j]
            out[f"g_{j + 1}{j + 1}"] = self.g_self[j]
            out[f"dg_{j + 1}{j + 1}"] = self.dg_self[j]
        return out


@dataclass(frozen=True)
class NetworkConfig:
    """Power budgets, impairments and per-user demands.

    ``sigma2_rsi=None`` selects the computed residual self-interference mode,
    where the RSI variance is ``dg^H C dg``; a float fixes the variance.
    With ``rsi_gated`` a silent D2D node contributes no fixed RSI.
    """

    K: int = 2
    N: int = 2
    M: int = 2
    P_B: float = 4.0
    P_j: tuple[float, float] = (2.0, 2.0)
    sigma2_n: float = 1.0
    kappa: float = 1e-3
    sigma2_rsi: float | None = 1.0
    Psi: tuple[float, ...] = (0.0, 0.0)
    Sigma: tuple[float, ...] = (0.0, 0.0)
    seed: int = 0
    rsi_gated: bool = False

    @property
    def rsi_mode(self) -> str:
        return "computed" if self.sigma2_rsi is None else "fixed"

    def with_(self, **changes: Any) -> "NetworkConfig":
        if "P_j" in changes:
            changes["P_j"] = _pair(changes["P_j"])
        for key in ("Psi", "Sigma"):
            if key in changes:
                changes[key] = _per_user(changes[key], changes.get("K", self.K))
        return replace(self, **changes)


@dataclass(frozen=True)
class NetworkInstance:
    channels: ChannelSet
    config: NetworkConfig = field(default_factory=NetworkConfig)

    def with_config(self, **changes: Any) -> "NetworkInstance":
        return NetworkInstance(self.channels, self.config.with_(**changes))


def _pair(value: Any) -> tuple[float, float]:
    if np.isscalar(value):
        return (float(value), float(value))
    vals = tuple(float(v) for v in value)
    if len(vals) != N_D2D:
        raise ConfigError(f"P_j needs {N_D2D} entries, got {len(vals)}")
    return vals  # type: ignore[return-value]


def _per_user(value: Any, K: int) -> tuple[float, ...]:
    if np.isscalar(value):
        return tuple(float(value) for _ in range(K))
    return tuple(float(v) for v in value)


# Table I realizations: magnitude/phase pairs.
TABLE1: dict[str, list[list[float]]] = {
    "h_1B": [[0.9854, 1.2458], [0.1702, 1.2338]],
    "h_2B": [[0.9698, 2.3462], [0.2440, -0.6828]],
    "g_12": [[0.9689, 1.9479], [0.2475, -1.2092]],
    "g_21": [[0.3285, -2.3296], [0.9445, -2.0290]],
    "g_11": [[0.7992, -1.3910], [0.6011, -1.1197]],
    "g_22": [[0.3704, 2.9091], [0.9289, 2.6368]],
    "h_11": [[0.9256, 0.2839], [0.3784, -2.7961]],
    "h_12": [[0.8418, -1.3029], [0.5399, -1.1500]],
    "h_21": [[0.8916, -0.9131], [0.4529, 0.6297]],
    "h_22": [[0.3197, -3.0983], [0.9475, 0.8234]],
    "g_1B": [[0.9616, 0.7495], [0.2745, 0.2609]],
    "g_2B": [[0.9326, 3.0490], [0.3609, 2.8022]],
}

# Defaults used for the rate/rate-energy figures.
TABLE1_CONFIG: dict[str, Any] = {
    "P_B": 4.0,
    "P_j": 2.0,
    "sigma2_n": 1.0,
    "kappa": 1e-3,
    "sigma2_rsi": 1.0,
    "Psi": 6.0,
    "Sigma": 0.7,
    "seed": 0,
}


def table1_document() -> dict[str, Any]:
    return {
        "encoding": "polar",
        "channels": {k: [list(p) for p in v] for k, v in TABLE1.items()},
        "config": dict(TABLE1_CONFIG),
    }


def table1_instance(**config_overrides: Any) -> NetworkInstance:
    """Table I channels with the figure defaults, optionally overridden."""
    inst = load_channels(table1_document())
    return inst.with_config(**config_overrides) if config_overrides else inst


def _parse_vector(key: str, raw: Any, encoding: str) -> np.ndarray:
    try:
        if isinstance(raw, dict):
            re = np.asarray(raw["re"], dtype=float)
            im = np.asarray(raw["im"], dtype=float)
            if re.shape != im.shape or re.ndim != 1:
                raise ConfigError(f"channel {key}: 're' and 'im' must be equal-length lists")
            vec = re + 1j * im
        else:
            pairs = np.asarray(raw, dtype=float)
            if pairs.ndim != 2 or pairs.shape[1] != 2:
                raise ConfigError(f"channel {key}: expected a list of 2-element pairs")
            if encoding == "polar":
                vec = pairs[:, 0] * np.exp(1j * pairs[:, 1])
            elif encoding == "cartesian":
                vec = pairs[:, 0] + 1j * pairs[:, 1]
            else:
                raise ConfigError(f"unknown encoding {encoding!r}")
    except (TypeError, ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"channel {key}: cannot parse entry ({exc})") from exc
    if not np.all(np.isfinite(vec)):
        raise ConfigError(f"channel {key}: non-finite entry")
    return vec


def _scalar(cfg: dict[str, Any], key: str, default: Any) -> Any:
    value = cfg.get(key, default)
    if isinstance(value, str):
        return value
    arr = np.asarray(value, dtype=float) if value is not None else None
    if arr is not None and not np.all(np.isfinite(arr)):
        raise ConfigError(f"config.{key}: non-finite value")
    return value


def _majority(sizes: list[int]) -> int:
    vals, counts = np.unique(sizes, return_counts=True)
    return int(vals[np.argmax(counts)])


def load_channels(source: dict[str, Any] | str | Path) -> NetworkInstance:
    """Build a :class:`NetworkInstance` from a config document.

    ``source`` is a parsed mapping, a JSON string or a path to a JSON file.
    Channel vectors are lists of ``[magnitude, phase]`` pairs (default
    ``"encoding": "polar"``), ``[re, im]`` pairs (``"cartesian"``) or a
    mapping ``{"re": [...], "im": [...]}``.  ``dg_jj`` vectors are optional and
    default to zero.
    """
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        try:
            doc = json.loads(Path(source).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {source}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {source} is not valid JSON: {exc}") from exc
    elif isinstance(source, str):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    else:
        doc = source
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")

    encoding = doc.get("encoding", "polar")
    chans = doc.get("channels") or {}
    cfg = doc.get("config") or {}

    def get(key: str, required: bool = True) -> np.ndarray | None:
        if key not in chans:
            if required:
                raise ConfigError(f"missing channel {key}")
            return None
        return _parse_vector(key, chans[key], encoding)

    h_B = [get("h_1B")]
    k = 2
    while f"h_{k}B" in chans:
        h_B.append(get(f"h_{k}B"))
        k += 1
    K = len(h_B)
    if "K" in cfg and int(cfg["K"]) != K:
        raise ConfigError(f"config.K={cfg['K']} but {K} cellular channels h_kB were given")

    h_D = [[get(f"h_{k + 1}{j + 1}") for j in range(N_D2D)] for k in range(K)]
    g_peer = [get("g_12"), get("g_21")]
    g_B = [get("g_1B"), get("g_2B")]
    g_self = [get("g_11"), get("g_22")]

    # undeclared dimensions follow the majority so that the odd vector is the one reported
    N = int(cfg.get("N", _majority([v.size for v in h_B + g_B])))
    M = int(cfg.get("M", _majority([v.size for v in g_peer + g_self] + [v.size for row in h_D for v in row])))
    for name, vec in _iter_named(h_B, h_D, g_peer, g_B, g_self):
        want = N if name.endswith("B") else M
        if vec.size != want:
            dim = "N" if name.endswith("B") else "M"
            raise ConfigError(f"channel {name}: length {vec.size} does not match {dim}={want}")

    dg = []
    for j in range(N_D2D):
        vec = get(f"dg_{j + 1}{j + 1}", required=False)
        if vec is None:
            vec = np.zeros(M, dtype=complex)
        elif vec.size != M:
            raise ConfigError(f"channel dg_{j + 1}{j + 1}: length {vec.size} does not match M={M}")
        dg.append(vec)

    channels = ChannelSet(
        h_B=np.array(h_B, dtype=complex),
        h_D=np.array(h_D, dtype=complex).reshape(K, N_D2D, M),
        g_peer=np.array(g_peer, dtype=complex),
        g_B=np.array(g_B, dtype=complex),
        g_self=np.array(g_self, dtype=complex),
        dg_self=np.array(dg, dtype=complex),
    )

    rsi = _scalar(cfg, "sigma2_rsi", 1.0)
    if isinstance(rsi, str):
        if rsi != "computed":
            raise ConfigError(f"config.sigma2_rsi: expected a number or 'computed', got {rsi!r}")
        rsi = None
    try:
        config = NetworkConfig(
            K=K,
            N=N,
            M=M,
            P_B=float(_scalar(cfg, "P_B", 4.0)),
            P_j=_pair(_scalar(cfg, "P_j", 2.0)),
            sigma2_n=float(_scalar(cfg, "sigma2_n", 1.0)),
            kappa=float(_scalar(cfg, "kappa", 1e-3)),
            sigma2_rsi=None if rsi is None else float(rsi),
            Psi=_per_user(_scalar(cfg, "Psi", 0.0), K),
            Sigma=_per_user(_scalar(cfg, "Sigma", 0.0), K),
            seed=int(cfg.get("seed", 0)),
            rsi_gated=bool(cfg.get("rsi_gated", False)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config scalar: {exc}") from exc
    return NetworkInstance(channels, config)


def _iter_named(h_B, h_D, g_peer, g_B, g_self):
    for k, vec in enumerate(h_B):
        yield f"h_{k + 1}B", vec
        for j in range(N_D2D):
            yield f"h_{k + 1}{j + 1}", h_D[k][j]
    for j in range(N_D2D):
        yield f"g_{j + 1}{2 - j}", g_peer[j]
        yield f"g_{j + 1}B", g_B[j]
        yield f"g_{j + 1}{j + 1}", g_self[j]


def serialize(instance: NetworkInstance) -> dict[str, Any]:
    """Inverse of :func:`load_channels`; floats are written exactly."""
    cfg = instance.config
    chans = {
        name: {"re": [float(v) for v in vec.real], "im": [float(v) for v in vec.imag]}
        for name, vec in instance.channels.named().items()
    }
    return {
        "encoding": "cartesian",
        "channels": chans,
        "config": {
            "K": cfg.K,
            "N": cfg.N,
            "M": cfg.M,
            "P_B": cfg.P_B,
            "P_j": list(cfg.P_j),
            "sigma2_n": cfg.sigma2_n,
            "kappa": cfg.kappa,
            "sigma2_rsi": "computed" if cfg.sigma2_rsi is None else cfg.sigma2_rsi,
            "Psi": list(cfg.Psi),
            "Sigma": list(cfg.Sigma),
            "seed": cfg.seed,
            "rsi_gated": cfg.rsi_gated,
        },
    }


def dumps(instance: NetworkInstance) -> str:
    return json.dumps(serialize(instance), indent=2)


def random_channels(
    seed: int,
    K: int = 2,
    N: int = 2,
    M: int = 2,
    eps: float = 0.0,
    config: NetworkConfig | None = None,
) -> NetworkInstance:
    """Unit-norm i.i.d. CN(0, I) channel draws; ``dg_jj`` has norm ``eps``."""
    if min(K, N, M) < 1:
        raise ValueError("K, N and M must be at least 1")
    rng = np.random.default_rng(seed)

    def unit(*shape: int) -> np.ndarray:
        v = rng.standard_normal((*shape, 2)) @ np.array([1.0, 1j])
        return v / np.linalg.norm(v, axis=-1, keepdims=True)

    channels = ChannelSet(
        h_B=unit(K, N),
        h_D=unit(K, N_D2D, M),
        g_peer=unit(N_D2D, M),
        g_B=unit(N_D2D, N),
        g_self=unit(N_D2D, M),
        dg_self=eps * unit(N_D2D, M),
    )
    base = config or NetworkConfig()
    cfg = replace(
        base,
        K=K,
        N=N,
        M=M,
        seed=seed,
        Psi=_per_user(base.Psi[0] if base.Psi else 0.0, K),
        Sigma=_per_user(base.Sigma[0] if base.Sigma else 0.0, K),
    )
    return NetworkInstance(channels, cfg)


def validate(instance: NetworkInstance) -> list[str]:
    """Every invariant violation as a message; an empty list means valid."""
    out: list[str] = []
    ch, cfg = instance.channels, instance.config
    if ch.K != cfg.K:
        out.append(f"K={cfg.K} but {ch.K} cellular channel sets")
    shapes = {
        "h_B": (ch.h_B, (cfg.K, cfg.N)),
        "h_D": (ch.h_D, (cfg.K, N_D2D, cfg.M)),
        "g_peer": (ch.g_peer, (N_D2D, cfg.M)),
        "g_B": (ch.g_B, (N_D2D, cfg.N)),
        "g_self": (ch.g_self, (N_D2D, cfg.M)),
        "dg_self": (ch.dg_self, (N_D2D, cfg.M)),
    }
    for group, (arr, want) in shapes.items():
        if arr.shape != want:
            # name the individual offending vectors where possible
            bad = [n for n, v in _group_vectors(ch, group) if v.size != want[-1]]
            what = ", ".join(bad) if bad else group
            out.append(f"{what}: shape {arr.shape} does not match expected {want}")
        elif not np.all(np.isfinite(arr)):
            out.append(f"{group}: non-finite entries")
    if not cfg.P_B > 0:
        out.append("P_B must be positive")
    if len(cfg.P_j) != N_D2D or not all(p > 0 for p in cfg.P_j):
        out.append("P_j must be positive")
    if not cfg.sigma2_n > 0:
        out.append("sigma2_n must be positive")
    if not 0 <= cfg.kappa < 1:
        out.append("kappa must lie in [0, 1)")
    if cfg.sigma2_rsi is not None and not cfg.sigma2_rsi >= 0:
        out.append("sigma2_rsi must be nonnegative")
    if len(cfg.Psi) != cfg.K or any(p < 0 or not math.isfinite(p) for p in cfg.Psi):
        out.append("Psi must have K nonnegative entries")
    if len(cfg.Sigma) != cfg.K or any(s < 0 or not math.isfinite(s) for s in cfg.Sigma):
        out.append("Sigma must have K nonnegative entries")
    return out


def _group_vectors(ch: ChannelSet, group: str):
    arr = getattr(ch, group)
    if group == "h_B":
        return [(f"h_{k + 1}B", v) for k, v in enumerate(arr)]
    if group == "h_D":
        return [(f"h_{k + 1}{j + 1}", arr[k][j]) for k in range(len(arr)) for j in range(len(arr[k]))]
    prefix = {"g_peer": "g_{j}{i}", "g_B": "g_{j}B", "g_self": "g_{j}{j}", "dg_self": "dg_{j}{j}"}[group]
    return [(prefix.format(j=j + 1, i=2 - j), v) for j, v in enumerate(arr)]
