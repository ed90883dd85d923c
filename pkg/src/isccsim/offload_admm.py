"""Consensus-ADMM solver for the relaxed offloading subproblem, plus binary recovery.

Each BS holds local copies (omega, varpi) of its column of the relaxed
offloading variables (a, b); consensus with the global copy is enforced via
scaled dual variables.  The per-BS update is a separable box-QP with one
capacity coupling constraint (solved exactly by KKT + bisection on the
capacity multiplier); the global update is a per-terminal projection-like
problem whose multipliers (chi, psi) come from complementary slackness.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from . import metrics
from .metrics import ExecutionMode, Mode
from .scenario import Scenario, SystemConfig
from ._kernels import capacity_water_level

T_CAP = 1e9  # finite stand-in latency when an uplink rate is effectively zero


@dataclass
class CostTable:
    """Per-mode latencies (s) and powers (W) for the current beamformers."""

    T_L: np.ndarray            # (K,)
    T_E: np.ndarray            # (L, K)
    T_C: np.ndarray            # (L, K)
    p_L: np.ndarray            # (K,)
    p_E: np.ndarray            # (K,)
    p_C: np.ndarray            # (K,)

    def validate(self):
        for name in ("T_L", "T_E", "T_C", "p_L", "p_E", "p_C"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise InputError(f"cost table {name} must be finite and >= 0")

    @classmethod
    def from_scenario(cls, scenario: Scenario, W: np.ndarray,
                      rates_lk: np.ndarray | None = None) -> "CostTable":
        cfg = scenario.config
        if rates_lk is None:
            rates_lk = metrics.uplink_rates_all(scenario, W)
        Z = cfg.task_bits()
        t_up = np.minimum(Z / np.maximum(rates_lk, Z / T_CAP), T_CAP)
        T_L = cfg.beta * Z / cfg.f_local
        T_E = t_up + cfg.beta * Z / cfg.f_mec[None, :]
        T_C = t_up + Z / cfg.r_f + cfg.beta * Z / cfg.f_cloud[None, :]
        p_tx = np.array([metrics.tx_power(W[k], cfg.power_model) for k in range(cfg.K)])
        p_L = cfg.eta * cfg.f_local**3 + p_tx
        return cls(T_L=T_L, T_E=T_E, T_C=T_C, p_L=p_L, p_E=p_tx.copy(), p_C=p_tx.copy())


@dataclass
class AdmmOptions:
    rho: float = 1.0               # initial penalty (self-adapted unless disabled)
    upsilon: float = 1.0
    eps: float = 1e-4
    max_iter: int = 300
    multiplier_tol: float = 1e-8
    multiplier_cap: int = 200
    cloud_enabled: bool = True
    adapt_rho: bool = True         # residual balancing; rescales the scaled duals


@dataclass
class AdmmState:
    omega: np.ndarray          # (L, K) local copies of a
    varpi: np.ndarray          # (L, K) local copies of b
    a: np.ndarray              # (L, K) global relaxed variables
    b: np.ndarray              # (L, K)
    phi: np.ndarray            # (L, K) scaled duals for omega = a
    varphi: np.ndarray         # (L, K) scaled duals for varpi = b
    rho: float
    upsilon: float
    iter: int = 0


@dataclass
class AdmmResult:
    a: np.ndarray
    b: np.ndarray
    state: AdmmState
    residuals: list
    converged: bool
    diagnostics: list = field(default_factory=list)


def relaxed_objective(a: np.ndarray, b: np.ndarray, costs: CostTable) -> float:
    """Objective of the relaxed problem at a global point (a, b)."""
    return float(np.sum(costs.T_L)
                 + np.sum(a * (costs.T_E - costs.T_L[None, :]))
                 + np.sum(b * (costs.T_C - costs.T_L[None, :])))


def local_update(l: int, state: AdmmState, costs: CostTable,
                 cfg: SystemConfig, opts: AdmmOptions) -> tuple[np.ndarray, np.ndarray]:
    """Exact per-BS minimizer over the box plus MEC-capacity feasible set."""
    rho = state.rho
    c_om = np.ascontiguousarray(costs.T_E[l] - costs.T_L)
    t_om = np.ascontiguousarray(state.a[l] - state.phi[l])
    omega_l, _lam = capacity_water_level(t_om, c_om, np.ascontiguousarray(cfg.f_mec),
                                         rho, float(cfg.G[l]))
    if opts.cloud_enabled:
        c_vp = costs.T_C[l] - costs.T_L
        t_vp = state.b[l] - state.varphi[l]
        varpi_l = np.clip(t_vp - c_vp / rho, 0.0, 1.0)
    else:
        varpi_l = np.zeros(cfg.K)
    return omega_l, varpi_l


def _terminal_multiplier_search(alpha: np.ndarray, beta: np.ndarray,
                                dE: float, dC: float, p_L: float, P_th: float,
                                rho: float, L: int, cloud: bool,
                                tol: float, cap: int):
    """Find (chi, psi) >= 0 satisfying complementary slackness for one terminal.

    Alternating bisection: the sum constraint is monotone in chi (for fixed
    psi) and the power draw is monotone in psi (for fixed chi).  Both are
    affine in the multipliers, so each evaluation is scalar arithmetic on
    precomputed sums.
    """
    nb = L if cloud else 0
    alpha_sum = float(np.sum(alpha))
    beta_sum = float(np.sum(beta)) if cloud else 0.0

    def a_of(chi, psi):
        return alpha + (-chi - psi * dE) / rho

    def b_of(chi, psi):
        if not cloud:
            return np.zeros(0)
        return beta + (-chi - psi * dC) / rho

    def ssum(chi, psi):
        total = alpha_sum + L * (-chi - psi * dE) / rho
        if cloud:
            total += beta_sum + nb * (-chi - psi * dC) / rho
        return total

    def power(chi, psi):
        pa = alpha_sum + L * (-chi - psi * dE) / rho
        pb = (beta_sum + nb * (-chi - psi * dC) / rho) if cloud else 0.0
        return p_L + dE * pa + dC * pb

    def chi_step(psi):
        if ssum(0.0, psi) <= 1.0 + tol:
            return 0.0
        lo, hi = 0.0, 1.0
        for _ in range(cap):
            if ssum(hi, psi) <= 1.0:
                break
            hi *= 2.0
        for _ in range(cap):
            mid = 0.5 * (lo + hi)
            if ssum(mid, psi) > 1.0:
                lo = mid
            else:
                hi = mid
            if hi - lo <= tol * (1.0 + hi):
                break
        return hi

    def psi_step(chi):
        if power(chi, 0.0) <= P_th + tol:
            return 0.0
        slope = -(L * dE * dE + nb * dC * dC) / rho
        if slope >= -1e-300:
            return 0.0  # power insensitive to psi; leave for diagnostics
        lo, hi = 0.0, 1.0
        for _ in range(cap):
            if power(chi, hi) <= P_th:
                break
            hi *= 2.0
        for _ in range(cap):
            mid = 0.5 * (lo + hi)
            if power(chi, mid) > P_th:
                lo = mid
            else:
                hi = mid
            if hi - lo <= tol * (1.0 + hi):
                break
        return hi

    chi = psi = 0.0
    ok = False
    for _ in range(cap):
        chi_new = chi_step(psi)
        psi_new = psi_step(chi_new)
        s = ssum(chi_new, psi_new)
        p = power(chi_new, psi_new)
        r_sum = max(0.0, s - 1.0) + chi_new * abs(min(0.0, s - 1.0))
        r_pow = max(0.0, p - P_th) + psi_new * abs(min(0.0, P_th - p))
        converged = (s <= 1.0 + 10 * tol and
                     (p <= P_th + 10 * tol * max(1.0, P_th) or psi_new == 0.0) and
                     abs(chi_new - chi) <= tol * (1 + chi) and
                     abs(psi_new - psi) <= tol * (1 + psi))
        chi, psi = chi_new, psi_new
        if converged:
            ok = True
            break
    residual = (max(0.0, ssum(chi, psi) - 1.0),
                max(0.0, power(chi, psi) - P_th))
    return chi, psi, a_of(chi, psi), b_of(chi, psi), ok, residual


def global_update(state: AdmmState, costs: CostTable, cfg: SystemConfig,
                  opts: AdmmOptions):
    """Closed-form global variables with per-terminal multipliers.

    Returns (a, b, chi, psi, diagnostics).
    """
    L, K = state.omega.shape
    a = np.empty((L, K))
    b = np.zeros((L, K))
    chi = np.zeros(K)
    psi = np.zeros(K)
    diagnostics = []
    for k in range(K):
        alpha = state.omega[:, k] + state.phi[:, k]
        beta = state.varpi[:, k] + state.varphi[:, k]
        dE = float(costs.p_E[k] - costs.p_L[k])
        dC = float(costs.p_C[k] - costs.p_L[k])
        ck, pk, ak, bk, ok, res = _terminal_multiplier_search(
            alpha, beta, dE, dC, float(costs.p_L[k]), cfg.P_th, state.rho, L,
            opts.cloud_enabled, opts.multiplier_tol, opts.multiplier_cap)
        a[:, k] = ak
        if opts.cloud_enabled:
            b[:, k] = bk
        chi[k], psi[k] = ck, pk
        if not ok or max(res) > 1e-6:
            diagnostics.append({
                "event": "multiplier_search", "terminal": k,
                "chi": ck, "psi": pk, "residual_sum": res[0], "residual_power": res[1],
            })
    return a, b, chi, psi, diagnostics


def dual_update(state: AdmmState) -> AdmmState:
    state.phi = state.phi + state.upsilon * (state.omega - state.a)
    state.varphi = state.varphi + state.upsilon * (state.varpi - state.b)
    return state


def admm_solve(costs: CostTable, cfg: SystemConfig,
               opts: AdmmOptions | None = None) -> AdmmResult:
    """Run the consensus loop until the primal residuals drop below eps."""
    opts = opts or AdmmOptions()
    costs.validate()
    L, K = cfg.L, cfg.K

    # feasible start: offload just enough mass to satisfy the power budget
    dE = costs.p_E - costs.p_L
    m_min = np.zeros(K)
    neg = dE < 0
    m_min[neg] = np.clip((costs.p_L[neg] - cfg.P_th) / (-dE[neg]), 0.0, 1.0)
    width = 2 * L if opts.cloud_enabled else L
    a0 = np.tile(m_min / width, (L, 1))
    b0 = a0.copy() if opts.cloud_enabled else np.zeros((L, K))

    state = AdmmState(omega=a0.copy(), varpi=b0.copy(), a=a0, b=b0,
                      phi=np.zeros((L, K)), varphi=np.zeros((L, K)),
                      rho=opts.rho, upsilon=opts.upsilon)
    residuals = []
    diagnostics = []
    converged = False
    obj_prev = relaxed_objective(state.a, state.b, costs)
    for it in range(opts.max_iter):
        for l in range(L):
            state.omega[l], state.varpi[l] = local_update(l, state, costs, cfg, opts)
        a_prev, b_prev = state.a, state.b
        a, b, chi, psi, diag = global_update(state, costs, cfg, opts)
        state.a, state.b = a, b
        diagnostics.extend(diag)
        dual_update(state)
        state.iter = it + 1
        r_om = float(np.max(np.abs(state.omega - state.a)))
        r_vp = float(np.max(np.abs(state.varpi - state.b)))
        # iterate / objective stationarity guards against early stops while
        # the global step is still an exact passthrough of the local copies
        # (and against wandering along a degenerate optimal face)
        r_da = float(np.max(np.abs(state.a - a_prev)))
        r_db = float(np.max(np.abs(state.b - b_prev)))
        obj = relaxed_objective(state.a, state.b, costs)
        obj_stalled = abs(obj - obj_prev) <= opts.eps * max(1.0, abs(obj))
        obj_prev = obj
        residuals.append((r_om, r_vp, r_da, r_db))
        if max(r_om, r_vp) <= opts.eps and \
                (obj_stalled or max(r_da, r_db) <= opts.eps):
            converged = True
            break
        if opts.adapt_rho:
            prim = max(r_om, r_vp)
            dual = state.rho * max(r_da, r_db)
            if prim > 10.0 * dual and state.rho < 1e8:
                state.rho *= 2.0
                state.phi /= 2.0
                state.varphi /= 2.0
            elif dual > 10.0 * prim and state.rho > 1e-8:
                state.rho /= 2.0
                state.phi *= 2.0
                state.varphi *= 2.0
    return AdmmResult(a=state.a.copy(), b=state.b.copy(), state=state,
                      residuals=residuals, converged=converged,
                      diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# binary recovery

def _mode_cost(option, costs: CostTable, k: int) -> float:
    kind, l = option
    if kind == "local":
        return float(costs.T_L[k])
    if kind == "mec":
        return float(costs.T_E[l, k])
    return float(costs.T_C[l, k])


def _mode_power(option, costs: CostTable, k: int) -> float:
    kind, _ = option
    return float(costs.p_L[k] if kind == "local" else costs.p_E[k])


def _binary_passthrough(a, b, costs, cfg, tol=1e-9):
    """Return the implied modes when (a, b) is already binary and feasible."""
    if not (np.all((a <= tol) | (a >= 1 - tol)) and np.all((b <= tol) | (b >= 1 - tol))):
        return None
    L, K = a.shape
    modes = []
    load = np.zeros(L)
    for k in range(K):
        sel_a = np.flatnonzero(a[:, k] >= 1 - tol)
        sel_b = np.flatnonzero(b[:, k] >= 1 - tol)
        if len(sel_a) + len(sel_b) > 1:
            return None
        if len(sel_a):
            l = int(sel_a[0])
            load[l] += cfg.f_mec[k]
            if load[l] > cfg.G[l] + 1e-9 or costs.p_E[k] > cfg.P_th + metrics.POWER_AUDIT_TOL:
                return None
            modes.append(ExecutionMode(Mode.MEC, l))
        elif len(sel_b):
            if costs.p_C[k] > cfg.P_th + metrics.POWER_AUDIT_TOL:
                return None
            modes.append(ExecutionMode(Mode.CLOUD, int(sel_b[0])))
        else:
            if costs.p_L[k] > cfg.P_th + metrics.POWER_AUDIT_TOL:
                return None
            modes.append(ExecutionMode(Mode.LOCAL))
    return modes


def round_decisions(a: np.ndarray, b: np.ndarray, costs: CostTable,
                    cfg: SystemConfig, cloud_enabled: bool = True,
                    refine: bool = True):
    """Greedy confidence-ordered recovery of one execution mode per terminal.

    Terminals are processed in descending order of their largest relaxed
    variable; infeasible picks fall back to the next-best option and
    ultimately to local execution.  A bounded single-move improvement pass
    polishes the assignment.  Returns (modes, diagnostics).
    """
    L, K = a.shape
    a = np.clip(a, 0.0, 1.0)
    b = np.clip(b, 0.0, 1.0) if cloud_enabled else np.zeros_like(a)
    diagnostics = []

    binary_modes = _binary_passthrough(a, b, costs, cfg)
    if binary_modes is not None:
        return binary_modes, diagnostics

    conf = np.maximum(a.max(axis=0), b.max(axis=0) if cloud_enabled else 0.0)
    order = np.argsort(-conf)

    load = np.zeros(L)
    choice: dict[int, tuple[str, int | None]] = {}

    def feasible(option, k):
        kind, l = option
        if kind == "mec" and load[l] + cfg.f_mec[k] > cfg.G[l] + 1e-9:
            return False
        return _mode_power(option, costs, k) <= cfg.P_th + metrics.POWER_AUDIT_TOL

    for k in order:
        options = [("mec", l) for l in range(L)]
        values = [a[l, k] for l in range(L)]
        if cloud_enabled:
            options += [("cloud", l) for l in range(L)]
            values += [b[l, k] for l in range(L)]
        local_share = float(np.clip(1.0 - a[:, k].sum() - b[:, k].sum(), 0.0, 1.0))
        options.append(("local", None))
        values.append(local_share)
        ranked = sorted(range(len(options)),
                        key=lambda i: (-values[i], _mode_cost(options[i], costs, k)))
        picked = None
        for i in ranked:
            if feasible(options[i], k):
                picked = options[i]
                break
            diagnostics.append({"event": "rounding_fallback", "terminal": int(k),
                                "rejected": options[i]})
        if picked is None:
            picked = ("local", None)
            diagnostics.append({"event": "power_budget_violation", "terminal": int(k),
                                "power": _mode_power(picked, costs, k)})
        choice[k] = picked
        if picked[0] == "mec":
            load[picked[1]] += cfg.f_mec[k]

    if refine:
        for _ in range(2 * K):
            improved = False
            for k in range(K):
                cur = choice[k]
                cur_cost = _mode_cost(cur, costs, k)
                if cur[0] == "mec":
                    load[cur[1]] -= cfg.f_mec[k]
                best, best_cost = cur, cur_cost
                candidates = [("local", None)] + [("mec", l) for l in range(L)]
                if cloud_enabled:
                    candidates += [("cloud", l) for l in range(L)]
                for opt in candidates:
                    if _mode_cost(opt, costs, k) < best_cost - 1e-15 and feasible(opt, k):
                        best, best_cost = opt, _mode_cost(opt, costs, k)
                if best != cur:
                    improved = True
                choice[k] = best
                if best[0] == "mec":
                    load[best[1]] += cfg.f_mec[k]
            if not improved:
                break

    modes = []
    for k in range(K):
        kind, l = choice[k]
        if kind == "local":
            modes.append(ExecutionMode(Mode.LOCAL))
            if costs.p_L[k] > cfg.P_th + metrics.POWER_AUDIT_TOL:
                diagnostics.append({"event": "power_budget_violation",
                                    "terminal": k, "power": float(costs.p_L[k])})
        elif kind == "mec":
            modes.append(ExecutionMode(Mode.MEC, l))
        else:
            modes.append(ExecutionMode(Mode.CLOUD, l))
    return modes, diagnostics


def modes_total_latency(modes: list[ExecutionMode], costs: CostTable) -> float:
    total = 0.0
    for k, m in enumerate(modes):
        if m.mode is Mode.LOCAL:
            total += costs.T_L[k]
        elif m.mode is Mode.MEC:
            total += costs.T_E[m.serving_bs, k]
        else:
            total += costs.T_C[m.serving_bs, k]
    return float(total)
