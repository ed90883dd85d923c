"""Reproducible problem instances: geometry, system parameters, channels.

A scenario bundles node placement, per-terminal sensing targets and one
random channel realization.  Construction is pure in (config, seed); the
resulting object is treated as immutable and can be shared across threads.
"""

import io
import json
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import ConfigError

# Radar receive processing (range gating / waveform correlation) rejects the
# direct inter-terminal blast by roughly the coherent processing gain; -40 dB
# corresponds to a 10 MHz x 1 ms time-bandwidth product.  This factor
# multiplies the terminal-to-terminal interference channel POWER when
# synthesizing a scenario; 1.0 disables the suppression.
MTI_SUPPRESSION_DEFAULT = 1e-4

_KB = 1024 * 8  # bits per KB (binary convention)


def _as_float_array(value, n, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ConfigError(f"{name}: expected scalar or length-{n} array, got shape {arr.shape}")
    return arr


@dataclass
class SystemConfig:
    """Static parameters of a cloud-edge-terminal sensing/offloading network.

    Frequencies are cycles/s, powers W, rates bit/s, bandwidth Hz.  ``Gamma_r``
    is the linear echo-SINR threshold, ``rho0`` the linear path gain at 1 m.
    """

    L: int = 3
    K: int = 9
    M: int = 16
    N: int = 8
    B: float = 10e6
    beta: float = 400.0
    Z_ref: float = 100 * _KB           # task size in bits at B_ref
    B_ref: float = 10e6
    scale_task_with_bandwidth: bool = False
    rho0: float = 1e-6                 # -60 dB at 1 m
    f_local: np.ndarray = 0.5e9
    f_mec: np.ndarray = 3e9
    f_cloud: np.ndarray = 10e9
    G: np.ndarray = 9e9
    P_th: float = 1.0                  # 30 dBm
    N0: float = 10 ** (-204 / 10)      # -174 dBm/Hz
    eta: float = 1e-28
    r_f: float = 10e6
    Gamma_r: float = 10 ** (2 / 10)    # 2 dB
    alpha: float = 0.5
    seed: int = 0
    area: float = 1000.0               # terminal placement square side, m
    mti_suppression: float = MTI_SUPPRESSION_DEFAULT
    power_model: str = "norm2"         # transmit power ||w||^2; "norm4" = ||w w^H||_F^2

    def __post_init__(self):
        for name in ("L", "K", "M", "N"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"{name}: count must be an integer >= 1, got {v!r}")
        for name in ("B", "beta", "Z_ref", "B_ref", "rho0", "P_th", "N0",
                     "r_f", "Gamma_r", "area"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v <= 0:
                raise ConfigError(f"{name}: must be finite and > 0, got {v!r}")
        if self.eta < 0 or not np.isfinite(self.eta):
            raise ConfigError(f"eta: must be finite and >= 0, got {self.eta!r}")
        if not 0 < self.mti_suppression <= 1.0:
            raise ConfigError(f"mti_suppression: must be in (0, 1], got {self.mti_suppression!r}")
        if self.power_model not in ("norm2", "norm4"):
            raise ConfigError(f"power_model: expected 'norm2' or 'norm4', got {self.power_model!r}")
        self.f_local = _as_float_array(self.f_local, self.K, "f_local")
        self.f_mec = _as_float_array(self.f_mec, self.K, "f_mec")
        self.f_cloud = _as_float_array(self.f_cloud, self.K, "f_cloud")
        self.G = _as_float_array(self.G, self.L, "G")
        for name in ("f_local", "f_mec", "f_cloud", "G"):
            if np.any(getattr(self, name) <= 0):
                raise ConfigError(f"{name}: all entries must be > 0")

    def task_bits(self) -> float:
        """Sensing task size in bits; scales with bandwidth only when enabled."""
        if self.scale_task_with_bandwidth:
            return self.Z_ref * self.B / self.B_ref
        return self.Z_ref

    def sigma_b2(self) -> float:
        """Noise power at each BS receiver (N0 * B)."""
        return self.N0 * self.B

    def sigma_k2(self) -> float:
        """Noise power at each terminal radar receiver (same receiver class)."""
        return self.N0 * self.B

    def with_updates(self, **kwargs) -> "SystemConfig":
        return replace(self, **kwargs)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SystemConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
        return cls(**d)


@dataclass
class ChannelSet:
    """One realization of all propagation channels.

    ``H_up[l, k]`` is the N x M uplink channel (terminal k -> BS l);
    ``H_int[k, j]`` is the N x N interference channel (terminal j -> terminal
    k's radar receiver).  The diagonal ``H_int[k, k]`` is undefined and filled
    with NaN so accidental use is loud.
    """

    H_up: np.ndarray
    H_int: np.ndarray


@dataclass
class Scenario:
    """A full problem instance; immutable after construction."""

    config: SystemConfig
    bs_positions: np.ndarray      # (L, 2) meters
    terminal_positions: np.ndarray  # (K, 2) meters
    target_angle: np.ndarray      # (K,) radians
    target_distance: np.ndarray   # (K,) meters
    rcs: np.ndarray               # (K,) dimensionless
    echo_gain: np.ndarray         # (K,) zeta
    channels: ChannelSet

    def bs_distance(self, l: int, k: int) -> float:
        return float(np.linalg.norm(self.bs_positions[l] - self.terminal_positions[k]))

    def nearest_bs(self, k: int) -> int:
        d = np.linalg.norm(self.bs_positions - self.terminal_positions[k], axis=1)
        return int(np.argmin(d))


def steering_vector(theta: float, N: int, alpha: float = 0.5) -> np.ndarray:
    """Uniform-linear-array response a(theta), element n = exp(j 2 pi n alpha sin theta)."""
    if N < 1:
        raise ConfigError(f"N: must be >= 1, got {N}")
    n = np.arange(N)
    return np.exp(1j * 2 * np.pi * n * alpha * np.sin(theta))


def echo_gain(d_t: float, xi: float, rho0: float) -> float:
    """Two-way echo amplitude gain sqrt(rho0 * xi) / d_t^2."""
    if d_t <= 0 or xi <= 0 or rho0 <= 0:
        raise ValueError(f"echo_gain: inputs must be > 0, got d_t={d_t}, xi={xi}, rho0={rho0}")
    return float(np.sqrt(rho0 * xi) / d_t**2)


def rayleigh_channel(rng: np.random.Generator, shape, d: float, rho0: float) -> np.ndarray:
    """Distance-attenuated Rayleigh block: sqrt(rho0/d^2) * CN(0, 1) entries."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return np.sqrt(rho0 / d**2) * (re + 1j * im) / np.sqrt(2.0)


def default_bs_positions(L: int) -> np.ndarray:
    """BS layout: the canonical 3-site cluster, or a ring for larger L."""
    canonical = np.array([[0.0, 0.0], [400.0, 0.0], [200.0, 200.0 * np.sqrt(3.0)]])
    if L <= 3:
        return canonical[:L].copy()
    ang = 2 * np.pi * np.arange(L) / L
    return np.column_stack([500.0 + 300.0 * np.cos(ang), 500.0 + 300.0 * np.sin(ang)])


def synthesize_channels(config: SystemConfig, bs_positions: np.ndarray,
                        terminal_positions: np.ndarray,
                        rng: np.random.Generator) -> ChannelSet:
    """Draw all channel blocks for fixed geometry.

    Uplink entries have second moment rho0/d^2.  Interference channels carry
    the extra ``mti_suppression`` power factor (radar receive processing).
    """
    L, K, M, N = config.L, config.K, config.M, config.N
    H_up = np.empty((L, K, N, M), dtype=complex)
    for l in range(L):
        for k in range(K):
            d = np.linalg.norm(bs_positions[l] - terminal_positions[k])
            H_up[l, k] = rayleigh_channel(rng, (N, M), d, config.rho0)
    H_int = np.full((K, K, N, N), np.nan, dtype=complex)
    amp = np.sqrt(config.mti_suppression)
    for k in range(K):
        for j in range(K):
            if j == k:
                continue
            d = np.linalg.norm(terminal_positions[k] - terminal_positions[j])
            H_int[k, j] = amp * rayleigh_channel(rng, (N, N), d, config.rho0)
    return ChannelSet(H_up=H_up, H_int=H_int)


def build_scenario(config: SystemConfig, seed: int | None = None) -> Scenario:
    """Construct a scenario deterministically from (config, seed).

    Terminals are placed uniformly in the area square; target bearings are
    uniform over [0, pi], target ranges over [30, 70] m, RCS over [0.8, 1].
    """
    if seed is None:
        seed = config.seed
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))
    bs_pos = default_bs_positions(config.L)
    term_pos = rng.uniform(0.0, config.area, size=(config.K, 2))
    theta = rng.uniform(0.0, np.pi, size=config.K)
    d_t = rng.uniform(30.0, 70.0, size=config.K)
    xi = rng.uniform(0.8, 1.0, size=config.K)
    zeta = np.array([echo_gain(d_t[k], xi[k], config.rho0) for k in range(config.K)])
    channels = synthesize_channels(config, bs_pos, term_pos, rng)
    return Scenario(config=config, bs_positions=bs_pos, terminal_positions=term_pos,
                    target_angle=theta, target_distance=d_t, rcs=xi,
                    echo_gain=zeta, channels=channels)


# ---------------------------------------------------------------------------
# deterministic dump/load for regression tests

_DUMP_MAGIC = b"ISCCSIM-SCENARIO-1\n"
_ARRAY_FIELDS = ("bs_positions", "terminal_positions", "target_angle",
                 "target_distance", "rcs", "echo_gain")


def _write_array(buf: io.BytesIO, arr: np.ndarray):
    arr = np.ascontiguousarray(arr)
    buf.write(arr.tobytes())


def scenario_dump(scenario: Scenario) -> bytes:
    """Serialize to a deterministic byte string (same scenario -> same bytes)."""
    header = {
        "config": scenario.config.to_dict(),
        "arrays": {},
    }
    payload = io.BytesIO()
    items = [(name, getattr(scenario, name)) for name in _ARRAY_FIELDS]
    items.append(("H_up", scenario.channels.H_up))
    items.append(("H_int", scenario.channels.H_int))
    offset = 0
    for name, arr in items:
        arr = np.ascontiguousarray(arr)
        header["arrays"][name] = {
            "dtype": arr.dtype.str, "shape": list(arr.shape), "offset": offset,
        }
        offset += arr.nbytes
        _write_array(payload, arr)
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    return _DUMP_MAGIC + len(head).to_bytes(8, "little") + head + payload.getvalue()


def scenario_load(data: bytes) -> Scenario:
    """Inverse of :func:`scenario_dump`."""
    if not data.startswith(_DUMP_MAGIC):
        raise ConfigError("scenario dump: bad magic header")
    pos = len(_DUMP_MAGIC)
    hlen = int.from_bytes(data[pos:pos + 8], "little")
    pos += 8
    header = json.loads(data[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    blob = data[pos:]
    config = SystemConfig.from_dict(header["config"])
    arrays = {}
    for name, meta in header["arrays"].items():
        dt = np.dtype(meta["dtype"])
        shape = tuple(meta["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = meta["offset"]
        arrays[name] = np.frombuffer(
            blob, dtype=dt, count=count, offset=start).reshape(shape).copy()
    channels = ChannelSet(H_up=arrays["H_up"], H_int=arrays["H_int"])
    return Scenario(config=config,
                    bs_positions=arrays["bs_positions"],
                    terminal_positions=arrays["terminal_positions"],
                    target_angle=arrays["target_angle"],
                    target_distance=arrays["target_distance"],
                    rcs=arrays["rcs"],
                    echo_gain=arrays["echo_gain"],
                    channels=channels)
