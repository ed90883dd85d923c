"""Beamforming solver for fixed offloading decisions.

Alternates MMSE receive filters, rate weights, a ratio-transform auxiliary,
per-terminal convex beam subproblems (log-barrier Newton over the real
embedding), and closed-form leakage-bound updates.  The nonconvex echo-SINR
constraint is linearized at the current beams; leakage bounds are refreshed
to the realized values, which keeps every accepted iterate feasible.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from ._kernels import barrier_maximize
from .metrics import ExecutionMode, Mode
from .scenario import Scenario, steering_vector


@dataclass
class FpOptions:
    max_iter: int = 50
    tol: float = 1e-4              # relative objective change
    width: int = 1                 # parallel subproblem solves per iteration
    barrier_gap: float = 1e-9
    max_newton: int = 60
    on_infeasible: str = "error"   # or "best_effort": relax unattainable SINR targets
    init_margin: float = 1e-6      # strict-interior shrink applied to the start
    accel_theta_max: float = 64.0  # cap on the safeguarded extrapolation factor
    record_history: bool = False   # keep per-iteration (c, rates) snapshots
    slack_share_cycle: tuple = (0.8, 0.5, 0.95)  # per-iteration cap/slack split


@dataclass
class FpState:
    """Auxiliaries of the alternating loop (one entry per terminal)."""

    c: np.ndarray                  # (K,) ratio-transform auxiliary
    u: np.ndarray                  # (K, M) MMSE receive filter rows
    V: np.ndarray                  # (K,) rate weights >= 1
    Upsilon: np.ndarray            # (K, K) [receiver j, transmitter k] leakage bounds
    w_anchor: np.ndarray           # (K, N) linearization points
    delta: np.ndarray              # (K,) 1 when the terminal offloads
    serving: np.ndarray            # (K,) serving BS index


@dataclass
class BeamSubproblem:
    Q: np.ndarray                  # (N, N) Hermitian PSD
    bvec: np.ndarray               # (N,)
    power_budget: float            # cap on ||w||^2
    leak_S: np.ndarray             # (J, N, N) Hermitian PSD quadratic forms
    leak_caps: np.ndarray          # (J,)
    sens_vec: np.ndarray | None    # halfspace normal, Re(<sens_vec, w>) >= sens_tau
    sens_tau: float = 0.0


@dataclass
class BeamResult:
    W: np.ndarray
    objective_trace: list
    iterations: int
    converged: bool
    feasible: bool
    diagnostics: list = field(default_factory=list)
    history: list = field(default_factory=list)


class BeamformingInfeasible(RuntimeError):
    """No beamformer satisfies the echo-SINR targets for this scenario."""


# ---------------------------------------------------------------------------
# block updates

def serving_map(scenario: Scenario, modes: list[ExecutionMode]) -> np.ndarray:
    return np.array([m.serving_bs if m.serving_bs is not None else scenario.nearest_bs(k)
                     for k, m in enumerate(modes)], dtype=np.int64)


def offload_indicator(modes: list[ExecutionMode]) -> np.ndarray:
    return np.array([1.0 if m.offloads else 0.0 for m in modes])


def _signal_covariance(scenario, W, l):
    """sigma^2 I + sum_i g_i g_i^H at BS l, and the stacked g_i."""
    ch = scenario.channels
    g = np.einsum("knm,kn->km", ch.H_up[l].conj(), W)
    A = scenario.config.sigma_b2() * np.eye(ch.H_up.shape[3], dtype=complex)
    A += np.einsum("km,kp->mp", g, g.conj())
    return 0.5 * (A + A.conj().T), g


def update_receivers(scenario: Scenario, W: np.ndarray,
                     serving: np.ndarray) -> np.ndarray:
    """MMSE receive filter rows u_k = w_k^H H (sigma^2 I + F)^{-1} per serving BS."""
    K, M = scenario.config.K, scenario.config.M
    u = np.zeros((K, M), dtype=complex)
    for l in np.unique(serving):
        A, g = _signal_covariance(scenario, W, l)
        cf = np.linalg.cholesky(A)
        for k in np.flatnonzero(serving == l):
            x = np.linalg.solve(cf.conj().T, np.linalg.solve(cf, g[k]))
            u[k] = x.conj()
    return u


def update_weights(scenario: Scenario, W: np.ndarray,
                   serving: np.ndarray) -> np.ndarray:
    """Inverse-MSE weights V_k = (1 - w^H H (sigma^2 I + F)^{-1} H^H w)^{-1}.

    Evaluated as 1 + g^H D^{-1} g against the interference-only covariance,
    which is the same quantity without the 1 - x cancellation at high SNR.
    """
    cfg = scenario.config
    V = np.ones(cfg.K)
    for l in np.unique(serving):
        for k in np.flatnonzero(serving == l):
            D = metrics.interference_plus_noise(l, k, W, scenario.channels,
                                                cfg.sigma_b2())
            D = 0.5 * (D + D.conj().T)
            g = scenario.channels.H_up[l, k].conj().T @ W[k]
            cf = np.linalg.cholesky(D)
            x = np.linalg.solve(cf.conj().T, np.linalg.solve(cf, g))
            V[k] = 1.0 + max(float(np.real(np.vdot(g, x))), 0.0)
    return V


def update_ratio_aux(rates: np.ndarray, Z: float) -> np.ndarray:
    """Ratio-transform auxiliary c = sqrt(Z) / R (tight at the current rates)."""
    return np.sqrt(Z) / np.maximum(rates, 1e-300)


def transformed_ratio(c: float, Z: float, R: float) -> float:
    """Value of the transformed latency term 2 sqrt(Z) c - c^2 R."""
    return 2.0 * math.sqrt(Z) * c - c * c * R


def update_leakage(W: np.ndarray, ch) -> np.ndarray:
    """Realized leakage powers: Upsilon[j, k] = ||H_int[j, k]^H w_k||^2."""
    K = W.shape[0]
    U = np.zeros((K, K))
    for j in range(K):
        for k in range(K):
            if j == k:
                continue
            v = ch.H_int[j, k].conj().T @ W[k]
            U[j, k] = float(np.real(np.vdot(v, v)))
    return U


def slack_shared_caps(scenario: Scenario, W: np.ndarray, realized: np.ndarray,
                      gamma_targets: np.ndarray, share: float = 0.8) -> np.ndarray:
    """Leakage bounds: realized values plus a slice of each receiver's SINR slack.

    Any bounds that are at least the realized leakages and keep every sensing
    constraint satisfied are admissible; granting each transmitter an equal
    share of the receiver's slack (withholding the rest as margin) lets the
    per-terminal subproblems trade leakage for rate instead of being pinned
    to the start's leakage pattern.
    """
    cfg = scenario.config
    K = cfg.K
    if K == 1:
        return realized.copy()
    U = realized.copy()
    sigma2 = cfg.sigma_k2()
    for k in range(K):
        a = steering_vector(scenario.target_angle[k], cfg.N, cfg.alpha)
        num = scenario.echo_gain[k] ** 2 * cfg.N * abs(np.vdot(a, W[k])) ** 2
        d_max = num / gamma_targets[k]
        d_now = float(np.sum(U[k])) + sigma2
        slack = max(0.0, d_max - d_now)
        U[k, :] += share * slack / (K - 1)
        U[k, k] = 0.0
    return U


def power_budget_for_mode(cfg, k: int, mode: ExecutionMode) -> float:
    """Transmit-power ball radius^2 implied by the total power budget."""
    budget = cfg.P_th
    if mode.mode is Mode.LOCAL:
        budget = cfg.P_th - cfg.eta * cfg.f_local[k] ** 3
    if budget <= 0:
        raise BeamformingInfeasible(
            f"terminal {k}: static power alone exceeds the budget ({budget:.3e} W)")
    if cfg.power_model == "norm4":
        budget = math.sqrt(budget)
    return float(budget)


def assemble_subproblem(k: int, fp: FpState, scenario: Scenario,
                        mode: ExecutionMode,
                        gamma_target: float | None = None) -> BeamSubproblem:
    """Build terminal k's concave-QP data from a frozen snapshot of the loop state."""
    cfg = scenario.config
    ch = scenario.channels
    N = cfg.N
    K = cfg.K

    Q = np.zeros((N, N), dtype=complex)
    b = np.zeros(N, dtype=complex)
    for i in range(K):
        if fp.delta[i] == 0.0:
            continue
        li = fp.serving[i]
        g = ch.H_up[li, k] @ fp.u[i].conj()   # effective channel k -> BS l(i) filter i
        coef = fp.c[i] ** 2 * fp.V[i]
        Q += coef * np.outer(g, g.conj())
        if i == k:
            b = coef * g
    Q = 0.5 * (Q + Q.conj().T)

    budget = power_budget_for_mode(cfg, k, mode)

    others = [j for j in range(K) if j != k]
    leak_S = np.zeros((len(others), N, N), dtype=complex)
    leak_caps = np.zeros(len(others))
    for idx, j in enumerate(others):
        Hjk = ch.H_int[j, k]
        leak_S[idx] = Hjk @ Hjk.conj().T
        leak_caps[idx] = fp.Upsilon[j, k]

    if gamma_target is None:
        gamma_target = cfg.Gamma_r
    a = steering_vector(scenario.target_angle[k], N, cfg.alpha)
    s = np.vdot(a, fp.w_anchor[k])            # a^H w_anchor
    sens_vec = 2.0 * N * s * a
    leak_in = float(np.sum(fp.Upsilon[k, others]))
    zeta2 = scenario.echo_gain[k] ** 2
    sens_tau = (gamma_target / zeta2) * (leak_in + cfg.sigma_k2()) \
        + N * abs(s) ** 2
    return BeamSubproblem(Q=Q, bvec=b, power_budget=budget, leak_S=leak_S,
                          leak_caps=leak_caps, sens_vec=sens_vec, sens_tau=sens_tau)


# ---------------------------------------------------------------------------
# per-terminal QCQP solve

def _realify_quad(Q: np.ndarray) -> np.ndarray:
    n = Q.shape[0]
    out = np.empty((2 * n, 2 * n))
    out[:n, :n] = Q.real
    out[:n, n:] = -Q.imag
    out[n:, :n] = Q.imag
    out[n:, n:] = Q.real
    return 0.5 * (out + out.T)


def _subproblem_objective(sub: BeamSubproblem, w: np.ndarray) -> float:
    return float(-np.real(np.vdot(w, sub.Q @ w)) + 2.0 * np.real(np.vdot(sub.bvec, w)))


def _kkt_residual(sub: BeamSubproblem, w: np.ndarray) -> float:
    """Scaled KKT residual at ``w`` with least-squares multipliers.

    Stationarity is checked in the real embedding with nonnegative
    multipliers fit by NNLS; the complementarity part uses the fitted
    multipliers against the actual slacks.
    """
    from scipy.optimize import nnls

    n = sub.bvec.shape[0]
    v = np.concatenate([w.real, w.imag])
    grad_f = np.concatenate([(-sub.Q @ w + sub.bvec).real,
                             (-sub.Q @ w + sub.bvec).imag]) * 2.0
    cols = []
    slacks = []
    cols.append(np.concatenate([w.real, w.imag]) * 2.0)
    slacks.append(sub.power_budget - float(np.real(np.vdot(w, w))))
    for j in range(sub.leak_S.shape[0]):
        Sw = sub.leak_S[j] @ w
        cols.append(np.concatenate([Sw.real, Sw.imag]) * 2.0)
        slacks.append(sub.leak_caps[j] - float(np.real(np.vdot(w, Sw))))
    if sub.sens_vec is not None:
        cols.append(-np.concatenate([sub.sens_vec.real, sub.sens_vec.imag]))
        slacks.append(float(np.real(np.vdot(sub.sens_vec, w))) - sub.sens_tau)
    A = np.stack(cols, axis=1)
    lam, _ = nnls(A, grad_f)
    r_stat = np.linalg.norm(grad_f - A @ lam)
    r_comp = float(np.sum(lam * np.abs(slacks)))
    scale = 1.0 + np.linalg.norm(grad_f) + abs(float(np.real(np.vdot(w, sub.Q @ w))))
    return float((r_stat + r_comp) / scale)


def _strictly_feasible(sub, w, rel=1e-12):
    p = float(np.real(np.vdot(w, w)))
    if p >= sub.power_budget * (1 - rel):
        return False
    for j in range(sub.leak_S.shape[0]):
        if float(np.real(np.vdot(w, sub.leak_S[j] @ w))) >= sub.leak_caps[j] * (1 - rel) + 1e-300:
            return False
    if sub.sens_vec is not None:
        lhs = float(np.real(np.vdot(sub.sens_vec, w)))
        if lhs <= sub.sens_tau + rel * abs(sub.sens_tau):
            return False
    return True


def solve_beam_subproblem(sub: BeamSubproblem, warm_start: np.ndarray,
                          opts: FpOptions | None = None):
    """Maximize the concave beam objective over the intersection of the power
    ball, per-victim leakage ellipsoids and the linearized sensing halfspace.

    Returns (w, info).  When the solver cannot make progress from the warm
    start the warm start itself is returned with ``info['infeasible']`` set,
    which callers treat as an anchor-retention step.
    """
    opts = opts or FpOptions()
    N = sub.bvec.shape[0]
    warm = warm_start.astype(complex)

    # exact fast path: unconstrained optimum strictly inside every constraint
    cand = None
    if np.linalg.norm(sub.bvec) == 0.0:
        cand = np.zeros(N, dtype=complex)
    else:
        try:
            cond = np.linalg.cond(sub.Q)
            if np.isfinite(cond) and cond < 1e10:
                cand = np.linalg.solve(sub.Q, sub.bvec)
        except np.linalg.LinAlgError:
            cand = None
    if cand is not None and _strictly_feasible(sub, cand, rel=1e-9):
        return cand, {"status": 0, "kkt": 0.0, "newton": 0, "fast_path": True,
                      "objective": _subproblem_objective(sub, cand),
                      "infeasible": False}

    # real embedding and normalization
    sv = math.sqrt(sub.power_budget)
    Qr = _realify_quad(sub.Q) * sub.power_budget
    t = np.concatenate([sub.bvec.real, sub.bvec.imag]) * sv
    scale = max(np.abs(Qr).max(), np.linalg.norm(t), 1e-300)
    Qr /= scale
    t /= scale

    J = sub.leak_S.shape[0]
    S = np.zeros((J, 2 * N, 2 * N))
    caps = np.ones(J)
    for j in range(J):
        floor = 1e-12 * sub.power_budget * max(float(np.real(np.trace(sub.leak_S[j]))) / N, 1e-300)
        cap = sub.leak_caps[j] * (1 + 1e-9) + floor
        S[j] = _realify_quad(sub.leak_S[j]) * (sub.power_budget / cap)

    if sub.sens_vec is not None:
        c_r = np.concatenate([sub.sens_vec.real, sub.sens_vec.imag]) * sv
        ts = max(abs(sub.sens_tau), np.linalg.norm(c_r), 1e-300)
        c_r /= ts
        tau = sub.sens_tau / ts
        has_lin = True
    else:
        c_r = np.zeros(2 * N)
        tau = 0.0
        has_lin = False

    v0 = np.concatenate([warm.real, warm.imag]) / sv
    v0 = v0 * (1.0 - opts.init_margin)

    v, status, kkt, nnewton = barrier_maximize(
        Qr, t, S, caps, c_r, tau, has_lin, 1.0, v0,
        opts.barrier_gap, opts.max_newton)
    if status == 1:
        # one repair attempt: pull toward the halfspace normal, then retry
        v0r = v0 * (1.0 - 1e-6)
        if has_lin and c_r @ v0r <= tau:
            v0r = v0r + (tau - c_r @ v0r + 1e-9) * c_r / max(c_r @ c_r, 1e-300)
        v, status, kkt, nnewton = barrier_maximize(
            Qr, t, S, caps, c_r, tau, has_lin, 1.0, v0r,
            opts.barrier_gap, opts.max_newton)
        if status == 1:
            return warm.copy(), {"status": 1, "kkt": np.inf, "newton": 0,
                                 "fast_path": False, "infeasible": True,
                                 "objective": _subproblem_objective(sub, warm)}

    w = (v[:N] + 1j * v[N:]) * sv
    obj = _subproblem_objective(sub, w)
    obj_warm = _subproblem_objective(sub, warm)
    if obj < obj_warm - 1e-9 * max(1.0, abs(obj_warm)):
        # never hand back something worse than the anchor
        return warm.copy(), {"status": int(status), "kkt": float(kkt),
                             "newton": int(nnewton), "fast_path": False,
                             "infeasible": False, "objective": obj_warm,
                             "kept_warm_start": True}
    return w, {"status": int(status), "kkt": _kkt_residual(sub, w),
               "newton": int(nnewton), "fast_path": False, "infeasible": False,
               "objective": obj}


# ---------------------------------------------------------------------------
# initialization

def _mrs_directions(scenario) -> np.ndarray:
    cfg = scenario.config
    dirs = np.empty((cfg.K, cfg.N), dtype=complex)
    for k in range(cfg.K):
        a = steering_vector(scenario.target_angle[k], cfg.N, cfg.alpha)
        dirs[k] = a / np.linalg.norm(a)
    return dirs


def _rate_directions(scenario, serving) -> np.ndarray:
    """Dominant transmit singular direction of each terminal's serving channel."""
    cfg = scenario.config
    dirs = np.empty((cfg.K, cfg.N), dtype=complex)
    for k in range(cfg.K):
        U, _, _ = np.linalg.svd(scenario.channels.H_up[serving[k], k])
        dirs[k] = U[:, 0]
    return dirs


def _ball_constrained_argmax(Q, b, budget):
    """Maximize -w^H Q w + 2 Re(b^H w) over ||w||^2 <= budget (closed form)."""
    if np.linalg.norm(b) == 0.0:
        return np.zeros_like(b)
    lam, U = np.linalg.eigh(Q)
    lam = np.maximum(lam, 0.0)
    bt = U.conj().T @ b

    def power(mu):
        return float(np.sum(np.abs(bt) ** 2 / (lam + mu) ** 2))

    mu = 0.0
    if lam.min() > 0 and power(0.0) <= budget:
        return U @ (bt / lam)
    lo = 0.0
    hi = max(np.linalg.norm(b) / math.sqrt(budget) - lam.min(), 1e-30)
    while power(hi) > budget:
        hi *= 2.0
    for _ in range(200):
        mu = 0.5 * (lo + hi)
        if power(mu) > budget:
            lo = mu
        else:
            hi = mu
        if hi - lo <= 1e-15 * (1.0 + hi):
            break
    return U @ (bt / (lam + hi))


def _wmmse_warm_directions(scenario, modes, serving, delta, passes=150):
    """Power-only weighted-MMSE fixed point; returns unit beam directions.

    Ignores sensing and leakage caps entirely; used only to seed the
    initializer with interference-aware rate directions.  The fixed-point
    sweep carries the same safeguarded extrapolation as the outer loop.
    """
    cfg = scenario.config
    Z = cfg.task_bits()
    budgets = np.array([power_budget_for_mode(cfg, k, modes[k]) for k in range(cfg.K)])
    dirs0 = _rate_directions(scenario, serving)
    W = dirs0 * np.sqrt(budgets)[:, None]
    if not np.any(delta > 0):
        return dirs0
    ch = scenario.channels
    mask = delta > 0

    def project(Wc):
        for k in range(cfg.K):
            p = float(np.real(np.vdot(Wc[k], Wc[k])))
            if p > budgets[k]:
                Wc[k] *= math.sqrt(budgets[k] / p)
        return Wc

    def obj_of(Wc):
        r_lk = metrics.uplink_rates_all(scenario, Wc)
        r = np.array([r_lk[serving[k], k] for k in range(cfg.K)])
        return float(np.sum(Z / np.maximum(r[mask], 1e-300))), r

    obj, rates = obj_of(W)
    W_prev = None
    for _ in range(passes):
        u = update_receivers(scenario, W, serving)
        V = update_weights(scenario, W, serving)
        c = update_ratio_aux(rates, Z)
        W_new = W.copy()
        for k in range(cfg.K):
            if delta[k] == 0.0:
                W_new[k] = 0.0
                continue
            Q = np.zeros((cfg.N, cfg.N), dtype=complex)
            b = np.zeros(cfg.N, dtype=complex)
            for i in range(cfg.K):
                if delta[i] == 0.0:
                    continue
                g = ch.H_up[serving[i], k] @ u[i].conj()
                coef = c[i] ** 2 * V[i]
                Q += coef * np.outer(g, g.conj())
                if i == k:
                    b = coef * g
            W_new[k] = _ball_constrained_argmax(0.5 * (Q + Q.conj().T), b, budgets[k])
        obj_new, rates_new = obj_of(W_new)
        for base in (W, W_prev):
            if base is None:
                continue
            theta = 2.0
            while theta <= 64.0:
                W_acc = project(W_new + (theta - 1.0) * (W_new - base))
                obj_acc, rates_acc = obj_of(W_acc)
                if obj_acc > obj_new:
                    break
                W_new, rates_new, obj_new = W_acc, rates_acc, obj_acc
                theta *= 2.0
        W_prev = W
        step = np.max(np.abs(W_new - W))
        gain = obj - obj_new
        W, rates, obj = W_new, rates_new, obj_new
        if step <= 1e-9 * (1.0 + np.max(np.abs(W))) or \
                0 <= gain <= 1e-6 * max(obj, 1e-300):
            break
    dirs = dirs0.copy()
    for k in range(cfg.K):
        nrm = np.linalg.norm(W[k])
        if delta[k] > 0 and nrm > 0:
            dirs[k] = W[k] / nrm
    return dirs


def _sinr_at_powers(scenario, dirs, p) -> np.ndarray:
    W = dirs * np.sqrt(p)[:, None]
    return metrics.sensing_sinr_all(scenario, W)


def _link_gains(scenario, dirs):
    """Aligned echo numerators n_k and pairwise leakage gains l[k, j] per unit power."""
    cfg = scenario.config
    n = np.empty(cfg.K)
    for k in range(cfg.K):
        a = steering_vector(scenario.target_angle[k], cfg.N, cfg.alpha)
        n[k] = scenario.echo_gain[k] ** 2 * cfg.N * abs(np.vdot(a, dirs[k])) ** 2
    leak = np.zeros((cfg.K, cfg.K))
    for k in range(cfg.K):
        for j in range(cfg.K):
            if j == k:
                continue
            v = scenario.channels.H_int[k, j].conj().T @ dirs[j]
            leak[k, j] = float(np.real(np.vdot(v, v)))
    return n, leak


def _power_reallocation(numer, leak, sigma2, target, budgets):
    """Fixed-point iteration toward the minimal powers meeting the SINR target."""
    p = budgets.copy()
    for _ in range(500):
        need = target * (leak @ p + sigma2) / numer
        p_new = np.minimum(budgets, need)
        if np.allclose(p_new, p, rtol=1e-12, atol=0.0):
            return p_new
        p = p_new
    return p


def _raise_powers(numer, leak, sigma2, p, budgets, raise_mask, target, sweeps=3):
    """Push selected powers back toward their budgets while every terminal
    keeps an SINR margin at ``target``; larger powers mean larger leakage
    allowances for the alternating loop."""
    K = len(p)
    p = p.copy()
    for _ in range(sweeps):
        for k in np.flatnonzero(raise_mask):
            room = budgets[k] - p[k]
            if room <= 0:
                continue
            for j in range(K):
                if j == k or leak[j, k] <= 0:
                    continue
                slack = numer[j] * p[j] / target - (leak[j] @ p + sigma2)
                room = min(room, max(0.0, slack / leak[j, k]))
            p[k] = min(budgets[k], p[k] + room)
    return p


def feasible_initialization(scenario: Scenario, modes: list[ExecutionMode],
                            gamma_target: float | None = None):
    """Construct jointly sensing-feasible starting beams.

    Scans blends between each terminal's rate-optimal direction and its
    target-steering direction, from most rate-aligned down to pure steering;
    for each blend the powers come from a fixed-point reallocation, with
    offloader powers then raised back toward their budgets inside the margin.
    The leakage pattern of this start matters: the alternating loop can only
    shrink realized leakages, so the start fixes the reachable rate region.
    Returns (W, feasible_flag, diagnostics).
    """
    cfg = scenario.config
    gamma = cfg.Gamma_r if gamma_target is None else gamma_target
    serving = serving_map(scenario, modes)
    offload = offload_indicator(modes) > 0
    budgets = np.array([power_budget_for_mode(cfg, k, modes[k]) for k in range(cfg.K)])
    diagnostics = []

    mrs = _mrs_directions(scenario)
    delta = offload_indicator(modes)
    families = {
        "wmmse": _wmmse_warm_directions(scenario, modes, serving, delta),
        "svd": _rate_directions(scenario, serving),
    }
    # rotate the rate directions so they combine coherently with the steering ones
    for fam in families.values():
        for k in range(cfg.K):
            ip = np.vdot(mrs[k], fam[k])
            if abs(ip) > 0:
                fam[k] = fam[k] * np.conj(ip / abs(ip))
    target = gamma * 1.05
    Z = cfg.task_bits()

    def candidate(dirs):
        """Feasible powers for fixed directions, or None."""
        numer, leak = _link_gains(scenario, dirs)
        gam = _sinr_at_powers(scenario, dirs, budgets)
        if np.all(gam >= gamma * (1 + 1e-9)):
            return budgets
        p = _power_reallocation(numer, leak, cfg.sigma_k2(), target, budgets)
        if not np.all(_sinr_at_powers(scenario, dirs, p) >= gamma * (1 - 1e-12)):
            return None
        p = _raise_powers(numer, leak, cfg.sigma_k2(), p, budgets, offload,
                          gamma * 1.02)
        if not np.all(_sinr_at_powers(scenario, dirs, p) >= gamma * (1 - 1e-12)):
            return None
        return p

    def init_objective(W0):
        if not np.any(delta > 0):
            return 0.0
        rates_lk = metrics.uplink_rates_all(scenario, W0)
        r = np.array([rates_lk[serving[k], k] for k in range(cfg.K)])
        return float(np.sum(Z / np.maximum(r[delta > 0], 1e-300)))

    beta_grid = (1.0, 0.925, 0.85, 0.775, 0.7, 0.6, 0.5, 0.375, 0.25, 0.125, 0.0)

    def blend_dirs(rate, betas):
        dirs = mrs.copy()
        for k in range(cfg.K):
            if offload[k] and betas[k] > 0:
                d = betas[k] * rate[k] + (1 - betas[k]) * mrs[k]
                dirs[k] = d / np.linalg.norm(d)
        return dirs

    def per_terminal_betas(rate):
        """Align only the terminals whose echo SINR binds, worst first.

        A terminal whose own beam is already fully steered but still short is
        interference-limited; in that case its strongest interferer is pushed
        toward steering instead (lowering that interferer's power demand).
        """
        idx = np.zeros(cfg.K, dtype=int)
        end = len(beta_grid) - 1
        for _ in range(cfg.K * len(beta_grid)):
            betas = np.array([beta_grid[i] if offload[k] else 0.0
                              for k, i in enumerate(idx)])
            dirs = blend_dirs(rate, betas)
            numer, leak = _link_gains(scenario, dirs)
            p = _power_reallocation(numer, leak, cfg.sigma_k2(), target, budgets)
            gam = _sinr_at_powers(scenario, dirs, p)
            short = gam < gamma * (1 - 1e-12)
            if not np.any(short):
                return betas
            order = np.argsort(gam / gamma)
            bump = None
            for worst in order:
                if not short[worst]:
                    break
                if offload[worst] and idx[worst] < end:
                    bump = int(worst)
                    break
                into = leak[worst] * p
                for j in np.argsort(-into):
                    if j != worst and offload[j] and idx[j] < end and into[j] > 0:
                        bump = int(j)
                        break
                if bump is not None:
                    break
            if bump is None:
                return None
            idx[bump] += 1
        return None

    best = None
    for name, rate in families.items():
        betas_pt = per_terminal_betas(rate)
        beta_candidates = [np.full(cfg.K, b) for b in beta_grid]
        if betas_pt is not None:
            beta_candidates.insert(0, betas_pt)
        for betas in beta_candidates:
            dirs = blend_dirs(rate, betas)
            p = candidate(dirs)
            if p is None:
                continue
            W0 = dirs * np.sqrt(p)[:, None]
            obj = init_objective(W0)
            if best is None or obj < best[0]:
                best = (obj, W0, name, float(np.mean(betas)))
    if best is not None:
        diagnostics.append({"event": "init_blend", "family": best[2],
                            "beta": best[3], "objective": best[0]})
        return best[1], True, diagnostics

    # uniform back-off scan on pure steering (rarely helps; kept before failing)
    for tscale in (0.5, 0.25, 0.1, 0.01):
        gam = _sinr_at_powers(scenario, mrs, budgets * tscale)
        if np.all(gam >= gamma * (1 + 1e-9)):
            diagnostics.append({"event": "init_uniform_backoff", "scale": tscale})
            return mrs * np.sqrt(budgets * tscale)[:, None], True, diagnostics

    diagnostics.append({
        "event": "sensing_infeasible",
        "gamma_target_db": 10 * math.log10(gamma),
        "best_gamma_db": float(10 * np.log10(max(_sinr_at_powers(
            scenario, mrs, budgets).min(), 1e-300))),
    })
    return mrs * np.sqrt(budgets)[:, None], False, diagnostics


# ---------------------------------------------------------------------------
# outer loop

def beamforming_solve(scenario: Scenario, modes: list[ExecutionMode],
                      opts: FpOptions | None = None,
                      W0: np.ndarray | None = None) -> BeamResult:
    """Alternating optimization of all beamformers for fixed execution modes.

    ``W0`` optionally warm-starts the loop; it is budget-clamped for the new
    modes and used only if it still meets every echo-SINR target.
    """
    opts = opts or FpOptions()
    cfg = scenario.config
    Z = cfg.task_bits()

    serving = serving_map(scenario, modes)
    delta = offload_indicator(modes)

    W = None
    feasible = True
    diagnostics = []
    if W0 is not None:
        Wc = W0.astype(complex).copy()
        for k in range(cfg.K):
            budget = power_budget_for_mode(cfg, k, modes[k])
            p = float(np.real(np.vdot(Wc[k], Wc[k])))
            if p > budget:
                Wc[k] *= math.sqrt(budget / p) * (1 - 1e-12)
        gam = metrics.sensing_sinr_all(scenario, Wc)
        if np.all(gam >= cfg.Gamma_r * (1 + 1e-9)):
            W = Wc
            diagnostics.append({"event": "warm_start_accepted"})
    if W is None:
        W, feasible, init_diag = feasible_initialization(scenario, modes)
        diagnostics.extend(init_diag)
    gamma_targets = np.full(cfg.K, cfg.Gamma_r)
    if not feasible:
        if opts.on_infeasible == "error":
            raise BeamformingInfeasible(
                f"echo-SINR threshold {10 * math.log10(cfg.Gamma_r):.2f} dB is "
                f"unattainable for this scenario")
        # best effort: hold each terminal at slightly below what the aligned
        # full-power start achieves, so the loop still optimizes rates
        gam0 = metrics.sensing_sinr_all(scenario, W)
        gamma_targets = np.minimum(cfg.Gamma_r, gam0 * 0.99)
        diagnostics.append({"event": "best_effort_targets",
                            "targets_db": (10 * np.log10(np.maximum(
                                gamma_targets, 1e-300))).tolist()})

    W = W * (1.0 - 1e-9)  # strictly inside the power balls

    fp = FpState(c=np.zeros(cfg.K), u=np.zeros((cfg.K, cfg.M), dtype=complex),
                 V=np.ones(cfg.K),
                 Upsilon=slack_shared_caps(scenario, W,
                                           update_leakage(W, scenario.channels),
                                           gamma_targets),
                 w_anchor=W.copy(), delta=delta, serving=serving)

    rates_lk = metrics.uplink_rates_all(scenario, W)
    rates = np.array([rates_lk[serving[k], k] for k in range(cfg.K)])
    fp.c = update_ratio_aux(rates, Z)

    def objective(rates_vec):
        mask = delta > 0
        if not np.any(mask):
            return 0.0
        return float(np.sum(Z / np.maximum(rates_vec[mask], 1e-300)))

    def serving_rates_of(Wc):
        r_lk = metrics.uplink_rates_all(scenario, Wc)
        return np.array([r_lk[serving[k], k] for k in range(cfg.K)])

    budgets = np.array([power_budget_for_mode(cfg, k, modes[k])
                        for k in range(cfg.K)])

    def project_powers(Wc):
        for k in range(cfg.K):
            p = float(np.real(np.vdot(Wc[k], Wc[k])))
            if p > budgets[k]:
                Wc[k] *= math.sqrt(budgets[k] / p) * (1 - 1e-12)
        return Wc

    def sensing_ok(Wc):
        gam = metrics.sensing_sinr_all(scenario, Wc)
        return bool(np.all(gam >= gamma_targets * (1 - 1e-9)))

    trace = [objective(rates)]
    W_init = W.copy()
    history = []
    if opts.record_history:
        history.append({"c": fp.c.copy(), "rates": rates.copy()})
    converged = False
    W_prev = None
    it = 0
    for it in range(1, opts.max_iter + 1):
        fp.u = update_receivers(scenario, W, serving)
        fp.V = update_weights(scenario, W, serving)

        subproblems = [assemble_subproblem(k, fp, scenario, modes[k],
                                           gamma_target=float(gamma_targets[k]))
                       for k in range(cfg.K)]

        def solve_one(k):
            return solve_beam_subproblem(subproblems[k], W[k], opts)

        if opts.width > 1:
            with ThreadPoolExecutor(max_workers=opts.width) as pool:
                results = list(pool.map(solve_one, range(cfg.K)))
        else:
            results = [solve_one(k) for k in range(cfg.K)]

        W_new = W.copy()
        for k, (wk, info) in enumerate(results):
            if info.get("infeasible"):
                diagnostics.append({"event": "subproblem_infeasible",
                                    "iteration": it, "terminal": k})
                continue  # anchor retention
            W_new[k] = wk

        rates_new = serving_rates_of(W_new)
        obj_new = objective(rates_new)

        # line searches along the joint step, the inter-iterate (momentum)
        # direction, and the long chord from the start, all projected back to
        # the power balls; candidates must be verifiably feasible and better
        for base in (W, W_prev, W_init):
            if base is None:
                continue
            theta = 2.0
            while theta <= opts.accel_theta_max:
                W_acc = project_powers(W_new + (theta - 1.0) * (W_new - base))
                if not sensing_ok(W_acc):
                    break
                rates_acc = serving_rates_of(W_acc)
                obj_acc = objective(rates_acc)
                if obj_acc > obj_new:
                    break
                W_new, rates_new, obj_new = W_acc, rates_acc, obj_acc
                theta *= 2.0
        W_prev = W

        W = W_new
        rates = rates_new
        fp.w_anchor = W.copy()
        share = opts.slack_share_cycle[it % len(opts.slack_share_cycle)]
        fp.Upsilon = slack_shared_caps(scenario, W,
                                       update_leakage(W, scenario.channels),
                                       gamma_targets, share=share)
        fp.c = update_ratio_aux(rates, Z)
        trace.append(obj_new)
        if opts.record_history:
            history.append({"c": fp.c.copy(), "rates": rates.copy()})

        prev, cur = trace[-2], trace[-1]
        if abs(prev - cur) <= opts.tol * max(abs(prev), 1e-300):
            converged = True
            break

    return BeamResult(W=W, objective_trace=trace, iterations=it,
                      converged=converged, feasible=feasible,
                      diagnostics=diagnostics, history=history)
