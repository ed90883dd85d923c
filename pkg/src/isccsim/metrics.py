"""Physical-layer and cost metrics.

Pure functions of immutable inputs: interference covariance, uplink rate,
echo SINR, latency/power/energy breakdowns, and the from-scratch feasibility
audit.  Beamformers are passed as a complex (K, N) array ``W`` (one transmit
vector per terminal); rates use log base 2 so they are in bit/s.
"""

import enum
from dataclasses import dataclass

import numpy as np

from ._kernels import rate_quadforms
from .errors import InfeasibleModeError
from .scenario import Scenario, SystemConfig, ChannelSet, steering_vector


class Mode(enum.Enum):
    LOCAL = "local"
    MEC = "mec"
    CLOUD = "cloud"


@dataclass(frozen=True)
class ExecutionMode:
    """Where one terminal's task executes; serving_bs is None for local."""

    mode: Mode
    serving_bs: int | None = None

    def __post_init__(self):
        if self.mode in (Mode.MEC, Mode.CLOUD) and self.serving_bs is None:
            raise ValueError("offload mode requires a serving BS index")

    @property
    def offloads(self) -> bool:
        return self.mode is not Mode.LOCAL


@dataclass(frozen=True)
class LatencyBreakdown:
    t_up: float
    t_backhaul: float
    t_exec: float

    @property
    def total(self) -> float:
        return self.t_up + self.t_backhaul + self.t_exec


def tx_power(w: np.ndarray, power_model: str = "norm2") -> float:
    """Transmit power of one beamformer; ``norm4`` selects ||w w^H||_F^2."""
    p = float(np.real(np.vdot(w, w)))
    return p * p if power_model == "norm4" else p


def interference_plus_noise(l: int, k: int, W: np.ndarray, ch: ChannelSet,
                            sigma_b2: float) -> np.ndarray:
    """Covariance of multi-terminal interference plus noise at BS l for terminal k."""
    M = ch.H_up.shape[3]
    D = sigma_b2 * np.eye(M, dtype=complex)
    K = W.shape[0]
    for i in range(K):
        if i == k:
            continue
        g = ch.H_up[l, i].conj().T @ W[i]
        D += np.outer(g, g.conj())
    return D


def _rate_from_quadform(q: float, B: float) -> float:
    return B * np.log2(1.0 + max(q, 0.0))


def uplink_rate(l: int, k: int, W: np.ndarray, ch: ChannelSet, B: float,
                sigma_b2: float) -> float:
    """Uplink rate in bit/s via the rank-one quadratic form with a Hermitian solve."""
    D = interference_plus_noise(l, k, W, ch, sigma_b2)
    D = 0.5 * (D + D.conj().T)
    g = ch.H_up[l, k].conj().T @ W[k]
    c = np.linalg.cholesky(D)
    x = np.linalg.solve(c.conj().T, np.linalg.solve(c, g))
    q = float(np.real(np.vdot(g, x)))
    return _rate_from_quadform(q, B)


def uplink_rates_all(scenario: Scenario, W: np.ndarray) -> np.ndarray:
    """All (L, K) uplink rates, sharing one all-signal Cholesky per BS.

    The per-pair interference covariance is the all-signal covariance minus
    the own rank-one term, so q = x / (1 - x) with x the quadratic form
    against the all-signal factor (Woodbury on the rank-one downdate).
    """
    cfg = scenario.config
    ch = scenario.channels
    g = np.ascontiguousarray(np.einsum("lknm,kn->lkm", ch.H_up.conj(), W))
    q = rate_quadforms(g, float(cfg.sigma_b2()))
    return cfg.B * np.log2(1.0 + np.maximum(q, 0.0))


def sensing_leakage_into(k: int, W: np.ndarray, ch: ChannelSet) -> float:
    """Total interference power landing on terminal k's radar receiver."""
    K = W.shape[0]
    total = 0.0
    for j in range(K):
        if j == k:
            continue
        v = ch.H_int[k, j].conj().T @ W[j]
        total += float(np.real(np.vdot(v, v)))
    return total


def sensing_sinr(k: int, W: np.ndarray, ch: ChannelSet, zeta: float,
                 theta: float, sigma_k2: float, alpha: float = 0.5) -> float:
    """Echo SINR: zeta^2 N |a(theta)^H w|^2 over cross-terminal leakage plus noise."""
    N = W.shape[1]
    a = steering_vector(theta, N, alpha)
    num = zeta**2 * N * abs(np.vdot(a, W[k])) ** 2
    den = sensing_leakage_into(k, W, ch) + sigma_k2
    return float(num / den)


def sensing_sinr_all(scenario: Scenario, W: np.ndarray) -> np.ndarray:
    cfg = scenario.config
    return np.array([
        sensing_sinr(k, W, scenario.channels, scenario.echo_gain[k],
                     scenario.target_angle[k], cfg.sigma_k2(), cfg.alpha)
        for k in range(cfg.K)
    ])


def latency(k: int, mode: ExecutionMode, rate: float,
            cfg: SystemConfig) -> LatencyBreakdown:
    """Latency breakdown of terminal k's task under the given execution mode."""
    Z = cfg.task_bits()
    if mode.mode is Mode.LOCAL:
        return LatencyBreakdown(0.0, 0.0, cfg.beta * Z / cfg.f_local[k])
    if rate <= 0 or not np.isfinite(rate):
        raise InfeasibleModeError(
            f"terminal {k}: {mode.mode.value} mode needs a positive uplink rate, got {rate}")
    t_up = Z / rate
    if mode.mode is Mode.MEC:
        return LatencyBreakdown(t_up, 0.0, cfg.beta * Z / cfg.f_mec[k])
    return LatencyBreakdown(t_up, Z / cfg.r_f, cfg.beta * Z / cfg.f_cloud[k])


def power_total(k: int, mode: ExecutionMode, w_k: np.ndarray,
                cfg: SystemConfig) -> float:
    """Terminal power draw: CPU term only when executing locally, plus transmit."""
    p = tx_power(w_k, cfg.power_model)
    if mode.mode is Mode.LOCAL:
        p += cfg.eta * cfg.f_local[k] ** 3
    return float(p)


def energy(k: int, mode: ExecutionMode, w_k: np.ndarray, latency_total: float,
           cfg: SystemConfig) -> float:
    return power_total(k, mode, w_k, cfg) * latency_total


def objective_total_latency(modes: list[ExecutionMode], rates: np.ndarray,
                            cfg: SystemConfig) -> tuple[float, float]:
    """Sum and mean of per-terminal total latencies; rates are per-terminal."""
    totals = [latency(k, modes[k], float(rates[k]), cfg).total
              for k in range(len(modes))]
    s = float(np.sum(totals))
    return s, s / len(modes)


def serving_rates(scenario: Scenario, modes: list[ExecutionMode],
                  W: np.ndarray, rates_lk: np.ndarray | None = None) -> np.ndarray:
    """Per-terminal uplink rate toward the serving BS (nearest BS when local)."""
    if rates_lk is None:
        rates_lk = uplink_rates_all(scenario, W)
    out = np.empty(scenario.config.K)
    for k, m in enumerate(modes):
        l = m.serving_bs if m.serving_bs is not None else scenario.nearest_bs(k)
        out[k] = rates_lk[l, k]
    return out


# ---------------------------------------------------------------------------
# feasibility audit

@dataclass
class AuditReport:
    feasible: bool
    capacity_slack: np.ndarray    # (L,) G_l - sum of allocated MEC cycles
    power_slack: np.ndarray       # (K,) P_th - p_total
    sinr_margin_db: np.ndarray    # (K,) achieved - required, in dB
    violations: list[str]


SINR_AUDIT_TOL = 1e-3   # gamma >= Gamma_r * (1 - tol) counts as satisfied
POWER_AUDIT_TOL = 1e-9


def audit_solution(scenario: Scenario, modes: list[ExecutionMode],
                   W: np.ndarray) -> AuditReport:
    """Recompute all problem constraints from scratch for a candidate solution."""
    cfg = scenario.config
    violations = []

    load = np.zeros(cfg.L)
    for k, m in enumerate(modes):
        if m.mode is Mode.MEC:
            load[m.serving_bs] += cfg.f_mec[k]
    cap_slack = cfg.G - load
    for l in range(cfg.L):
        if cap_slack[l] < -1e-6:
            violations.append(f"capacity: BS {l} over by {-cap_slack[l]:.3e} cycles/s")

    p_slack = np.empty(cfg.K)
    for k, m in enumerate(modes):
        p = power_total(k, m, W[k], cfg)
        p_slack[k] = cfg.P_th - p
        if p_slack[k] < -POWER_AUDIT_TOL:
            violations.append(f"power: terminal {k} over budget by {-p_slack[k]:.3e} W")

    gam = sensing_sinr_all(scenario, W)
    margin_db = 10 * np.log10(np.maximum(gam, 1e-300)) - 10 * np.log10(cfg.Gamma_r)
    for k in range(cfg.K):
        if gam[k] < cfg.Gamma_r * (1 - SINR_AUDIT_TOL):
            violations.append(
                f"sensing: terminal {k} SINR short by {-margin_db[k]:.3f} dB")

    return AuditReport(feasible=not violations, capacity_slack=cap_slack,
                       power_slack=p_slack, sinr_margin_db=margin_db,
                       violations=violations)
