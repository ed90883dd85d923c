"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest -s tests/test_acceptance.py`` to see the per-criterion
lines as they complete.  The Monte-Carlo criteria parallelize trials over a
small process pool.
"""

import itertools
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest
from scipy.optimize import linprog
from scipy.stats import spearmanr

from isccsim import metrics
from isccsim.beamform_fp import (BeamSubproblem, FpOptions, beamforming_solve,
                                 solve_beam_subproblem, transformed_ratio)
from isccsim.driver import DriverOptions, SchemeId, run_scheme
from isccsim.harness import trial_seed
from isccsim.metrics import ExecutionMode, Mode
from isccsim.offload_admm import (AdmmOptions, CostTable, admm_solve,
                                  local_update, modes_total_latency,
                                  relaxed_objective, round_decisions)
from isccsim.offload_admm import AdmmState
from isccsim.scenario import SystemConfig, build_scenario

WORKERS = 2


def report(name, ok, detail=""):
    line = f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  ({detail})"
    print(line, flush=True)
    assert ok, line


# ---------------------------------------------------------------------------
# shared 50-seed Algorithm-2 runs at Table-III scale

def _algo2_run(seed):
    cfg = SystemConfig()
    s = build_scenario(cfg, seed=trial_seed(42, seed))
    modes = [ExecutionMode(Mode.MEC, s.nearest_bs(k)) for k in range(cfg.K)]
    res = beamforming_solve(s, modes, FpOptions(record_history=True))
    return (res.objective_trace, res.iterations, res.converged,
            [(h["c"].tolist(), h["rates"].tolist()) for h in res.history])


@pytest.fixture(scope="module")
def algo2_runs():
    with ProcessPoolExecutor(max_workers=WORKERS) as pool:
        return list(pool.map(_algo2_run, range(50)))


def _scheme_job(args):
    scheme_value, gamma_db, g_cap, trial = args
    cfg = SystemConfig()
    if gamma_db is not None:
        cfg = cfg.with_updates(Gamma_r=10 ** (gamma_db / 10))
    if g_cap is not None:
        cfg = cfg.with_updates(G=np.full(cfg.L, g_cap))
    s = build_scenario(cfg, seed=trial_seed(0, trial))
    rec = run_scheme(SchemeId(scheme_value), s)
    sinr_db = 10 * np.log10(np.maximum(rec.sensing_sinr, 1e-300))
    return rec.mean_latency, rec.feasible, float(sinr_db.min())


def _run_grid(schemes, trials, gamma_db=None, g_cap=None):
    jobs = [(s.value, gamma_db, g_cap, t) for s in schemes for t in range(trials)]
    with ProcessPoolExecutor(max_workers=WORKERS) as pool:
        flat = list(pool.map(_scheme_job, jobs))
    out = {}
    i = 0
    for s in schemes:
        out[s] = flat[i:i + trials]
        i += trials
    return out


# ---------------------------------------------------------------------------

class TestLemma1Identity:
    def test_rate_identity_100_scenarios(self):
        rng = np.random.default_rng(0)
        t0 = time.perf_counter()
        worst = 0.0
        for trial in range(100):
            K = int(rng.integers(1, 5))
            N = int(rng.integers(1, 5))
            M = int(rng.integers(max(N, 1), 9))
            L = int(rng.integers(1, 3))
            cfg = SystemConfig(L=L, K=K, M=M, N=N, mti_suppression=1.0)
            s = build_scenario(cfg, seed=int(rng.integers(0, 2**31)))
            W = np.sqrt(cfg.P_th / N) * (
                rng.standard_normal((K, N)) + 1j * rng.standard_normal((K, N))
            ) / np.sqrt(2)
            serving = np.array([s.nearest_bs(k) for k in range(K)], dtype=np.int64)
            from isccsim.beamform_fp import update_weights
            V = update_weights(s, W, serving)
            for k in range(K):
                l = serving[k]
                # log-det oracle for the rate expression
                D = metrics.interference_plus_noise(l, k, W, s.channels,
                                                    cfg.sigma_b2())
                g = s.channels.H_up[l, k].conj().T @ W[k]
                inner = np.eye(M) + np.outer(g, g.conj()) @ np.linalg.inv(D)
                sign, logdet = np.linalg.slogdet(inner)
                rate_logdet = cfg.B * logdet / np.log(2)
                rate_v = cfg.B * np.log2(V[k])
                if rate_logdet > 0:
                    worst = max(worst, abs(rate_v - rate_logdet) / rate_logdet)
        elapsed = time.perf_counter() - t0
        report("lemma1-identity", worst <= 1e-9 and elapsed < 10.0,
               f"worst rel err {worst:.2e}, {elapsed:.1f}s")


class TestQuadraticTransformTightness:
    def test_tightness_throughout_runs(self, algo2_runs):
        cfg = SystemConfig()
        Z = cfg.task_bits()
        worst = 0.0
        for trace, iters, conv, history in algo2_runs:
            for c_list, rate_list in history:
                for c, R in zip(c_list, rate_list):
                    if R <= 0:
                        continue
                    worst = max(worst, abs(transformed_ratio(c, Z, R) - Z / R))
        report("quadratic-transform-tightness", worst <= 1e-12,
               f"worst abs err {worst:.2e} over 50 runs")


def lp_oracle(costs, cfg):
    L, K = costs.T_E.shape
    n = 2 * L * K

    def ia(l, k):
        return l * K + k

    def ib(l, k):
        return L * K + l * K + k

    c = np.zeros(n)
    for l in range(L):
        for k in range(K):
            c[ia(l, k)] = costs.T_E[l, k] - costs.T_L[k]
            c[ib(l, k)] = costs.T_C[l, k] - costs.T_L[k]
    A, ub = [], []
    for l in range(L):
        row = np.zeros(n)
        row[[ia(l, k) for k in range(K)]] = cfg.f_mec
        A.append(row)
        ub.append(cfg.G[l])
    for k in range(K):
        row = np.zeros(n)
        for l in range(L):
            row[ia(l, k)] = 1.0
            row[ib(l, k)] = 1.0
        A.append(row)
        ub.append(1.0)
    for k in range(K):
        row = np.zeros(n)
        for l in range(L):
            row[ia(l, k)] = costs.p_E[k] - costs.p_L[k]
            row[ib(l, k)] = costs.p_C[k] - costs.p_L[k]
        A.append(row)
        ub.append(cfg.P_th - costs.p_L[k])
    res = linprog(c, A_ub=np.array(A), b_ub=np.array(ub), bounds=[(0, 1)] * n,
                  method="highs")
    assert res.success
    return res.fun + float(np.sum(costs.T_L))


def random_cost_table(rng, L, K):
    t_up = rng.uniform(0.01, 0.25, size=(L, K))
    T_L = rng.uniform(0.3, 0.9, size=K)
    T_E = t_up + rng.uniform(0.05, 0.3, size=K)[None, :]
    T_C = t_up + rng.uniform(0.05, 0.15) + rng.uniform(0.02, 0.2, size=K)[None, :]
    p_tx = rng.uniform(0.1, 0.9, size=K)
    p_L = p_tx + rng.uniform(0.01, 0.2, size=K)
    return CostTable(T_L=T_L, T_E=T_E, T_C=T_C, p_L=p_L, p_E=p_tx.copy(),
                     p_C=p_tx.copy())


class TestAdmmOracle:
    def test_matches_lp_on_50_tables(self):
        rng = np.random.default_rng(1)
        worst_gap = 0.0
        worst_res = 0.0
        for trial in range(50):
            K = int(rng.integers(1, 4))
            cfg = SystemConfig(L=2, K=K, M=2, N=2,
                               G=rng.uniform(3e9, 7e9, size=2), f_mec=3e9)
            costs = random_cost_table(rng, 2, K)
            res = admm_solve(costs, cfg, AdmmOptions(eps=1e-6, max_iter=3000))
            gap = abs(relaxed_objective(res.a, res.b, costs) - lp_oracle(costs, cfg))
            worst_gap = max(worst_gap, gap)
            worst_res = max(worst_res, max(res.residuals[-1][:2]))
        report("admm-lp-oracle", worst_gap <= 1e-4 and worst_res <= 1e-4,
               f"worst gap {worst_gap:.2e}, worst residual {worst_res:.2e}")


class TestLocalUpdateExactness:
    def test_closed_form_beats_grid_50_instances(self):
        rng = np.random.default_rng(2)
        grid = np.linspace(0.0, 1.0, 100)
        worst = -np.inf
        for trial in range(50):
            cfg = SystemConfig(L=1, K=2, M=2, N=2,
                               G=rng.uniform(2.5e9, 6.5e9), f_mec=3e9)
            costs = random_cost_table(rng, 1, 2)
            state = AdmmState(
                omega=rng.uniform(0, 1, (1, 2)), varpi=rng.uniform(0, 1, (1, 2)),
                a=rng.uniform(0, 1, (1, 2)), b=rng.uniform(0, 1, (1, 2)),
                phi=rng.uniform(-0.3, 0.3, (1, 2)),
                varphi=rng.uniform(-0.3, 0.3, (1, 2)), rho=1.0, upsilon=1.0)
            om, _ = local_update(0, state, costs, cfg, AdmmOptions())
            c = costs.T_E[0] - costs.T_L
            t = state.a[0] - state.phi[0]
            obj_exact = float(c @ om + 0.5 * np.sum((om - t) ** 2))
            best = np.inf
            for w0 in grid:
                w1 = grid[cfg.f_mec[0] * w0 + cfg.f_mec[1] * grid <= cfg.G[0]]
                if w1.size:
                    vals = c[0] * w0 + 0.5 * (w0 - t[0]) ** 2 \
                        + c[1] * w1 + 0.5 * (w1 - t[1]) ** 2
                    best = min(best, float(vals.min()))
            assert cfg.f_mec @ om <= cfg.G[0] + 1e-9
            worst = max(worst, obj_exact - best)
        report("local-update-exactness", worst <= 1e-6,
               f"worst (exact - grid) {worst:.2e}; negative means exact wins")


def enumerate_best(costs, cfg):
    L, K = costs.T_E.shape
    options = [("local", None)] + [("mec", l) for l in range(L)] \
        + [("cloud", l) for l in range(L)]
    best = None
    for combo in itertools.product(range(len(options)), repeat=K):
        load = np.zeros(L)
        total = 0.0
        ok = True
        for k, oi in enumerate(combo):
            kind, l = options[oi]
            if kind == "local":
                if costs.p_L[k] > cfg.P_th + 1e-12:
                    ok = False
                    break
                total += costs.T_L[k]
            else:
                if costs.p_E[k] > cfg.P_th + 1e-12:
                    ok = False
                    break
                if kind == "mec":
                    load[l] += cfg.f_mec[k]
                    if load[l] > cfg.G[l] + 1e-9:
                        ok = False
                        break
                    total += costs.T_E[l, k]
                else:
                    total += costs.T_C[l, k]
        if ok and (best is None or total < best):
            best = total
    return best


class TestRoundingQuality:
    def test_within_ten_percent_of_enumeration(self):
        rng = np.random.default_rng(3)
        worst_ratio = 0.0
        for trial in range(30):
            cfg = SystemConfig(L=2, K=5, M=2, N=2,
                               G=rng.uniform(3e9, 7e9, size=2), f_mec=3e9)
            costs = random_cost_table(rng, 2, 5)
            res = admm_solve(costs, cfg, AdmmOptions(eps=1e-6, max_iter=3000))
            modes, _ = round_decisions(res.a, res.b, costs, cfg)
            total = modes_total_latency(modes, costs)
            # feasibility of the rounded assignment
            load = np.zeros(2)
            for k, m in enumerate(modes):
                if m.mode is Mode.MEC:
                    load[m.serving_bs] += cfg.f_mec[k]
            assert np.all(load <= cfg.G + 1e-9)
            best = enumerate_best(costs, cfg)
            worst_ratio = max(worst_ratio, total / best)
        report("rounding-quality", worst_ratio <= 1.10,
               f"worst total/enumeration ratio {worst_ratio:.4f}")


def _dense_grid_best(sub, step=0.02):
    r = np.sqrt(sub.power_budget)
    axis = np.arange(-r, r + step / 2, step)
    inner = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
    best = -np.inf
    for x0 in axis:
        for y0 in axis:
            if x0 * x0 + y0 * y0 > sub.power_budget:
                continue
            w = np.empty((inner.shape[0], 2), dtype=complex)
            w[:, 0] = x0 + 1j * y0
            w[:, 1] = inner[:, 0] + 1j * inner[:, 1]
            mask = (abs(w[:, 0]) ** 2 + abs(w[:, 1]) ** 2) <= sub.power_budget
            for j in range(sub.leak_S.shape[0]):
                quad = np.einsum("ki,ij,kj->k", w.conj(), sub.leak_S[j], w).real
                mask &= quad <= sub.leak_caps[j]
            if sub.sens_vec is not None:
                mask &= (w @ sub.sens_vec.conj()).real >= sub.sens_tau
            if not np.any(mask):
                continue
            wm = w[mask]
            f = -np.einsum("ki,ij,kj->k", wm.conj(), sub.Q, wm).real \
                + 2 * (wm @ sub.bvec.conj()).real
            best = max(best, float(f.max()))
    return best


def _grid_job(trial):
    rng = np.random.default_rng(1000 + trial)
    A = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    Q = A @ A.conj().T / 2
    b = 0.8 * (rng.standard_normal(2) + 1j * rng.standard_normal(2))
    B1 = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    S = (B1 @ B1.conj().T)[None, :, :] / 4
    caps = np.array([rng.uniform(0.3, 1.2)])
    c = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    tau = rng.uniform(0.05, 0.3) * np.linalg.norm(c)
    sub = BeamSubproblem(Q=Q, bvec=b, power_budget=1.0, leak_S=S,
                         leak_caps=caps, sens_vec=c, sens_tau=tau)
    warm = None
    for _ in range(20000):
        cand = 0.5 * (rng.standard_normal(2) + 1j * rng.standard_normal(2))
        if np.real(np.vdot(cand, cand)) < 0.95 and \
           np.real(np.vdot(cand, S[0] @ cand)) < caps[0] * 0.95 and \
           np.real(np.vdot(c, cand)) > tau * 1.05 + 1e-9:
            warm = cand
            break
    if warm is None:
        return None
    w, info = solve_beam_subproblem(sub, warm)
    f_solver = float(-np.real(np.vdot(w, sub.Q @ w))
                     + 2 * np.real(np.vdot(sub.bvec, w)))
    return f_solver - _dense_grid_best(sub)


class TestBeamSubproblemOracle:
    def test_grid_oracle_20_instances(self):
        with ProcessPoolExecutor(max_workers=WORKERS) as pool:
            margins = [m for m in pool.map(_grid_job, range(20)) if m is not None]
        assert len(margins) >= 18
        worst = min(margins)
        report("beam-subproblem-grid", worst >= -1e-3,
               f"worst (solver - grid) {worst:.2e} over {len(margins)} instances")

    def test_interior_optimum_exact(self):
        rng = np.random.default_rng(4)
        worst = 0.0
        for trial in range(20):
            D = np.diag(rng.uniform(1.0, 3.0, size=2)).astype(complex)
            U = np.linalg.qr(rng.standard_normal((2, 2))
                             + 1j * rng.standard_normal((2, 2)))[0]
            Q = U @ D @ U.conj().T
            w_star = 0.2 * (rng.standard_normal(2) + 1j * rng.standard_normal(2))
            b = Q @ w_star
            sub = BeamSubproblem(Q=Q, bvec=b, power_budget=1.0,
                                 leak_S=np.zeros((0, 2, 2), dtype=complex),
                                 leak_caps=np.zeros(0), sens_vec=None)
            w, info = solve_beam_subproblem(sub, np.zeros(2, dtype=complex))
            worst = max(worst, float(np.linalg.norm(w - w_star)))
        report("beam-subproblem-interior", worst <= 1e-7,
               f"worst |w - Q^-1 b| = {worst:.2e}")


class TestMonotoneConvergence:
    def test_algorithm2_trace(self, algo2_runs):
        ok = 0
        mono_all = 0
        for trace, iters, conv, history in algo2_runs:
            tr = np.array(trace)
            mono = bool(np.all(np.diff(tr) <= 1e-6 * np.maximum(tr[:-1], 1e-300)))
            mono_all += mono
            if mono and conv and iters <= 20:
                ok += 1
        report("monotone-convergence",
               ok >= 45, f"{ok}/50 monotone+converged<=20, {mono_all}/50 monotone")

    def test_full_bcd_under_60s(self):
        cfg = SystemConfig()
        s = build_scenario(cfg, seed=trial_seed(7, 0))
        t0 = time.perf_counter()
        rec = run_scheme(SchemeId.DCET_ISCC, s)
        elapsed = time.perf_counter() - t0
        report("bcd-runtime", elapsed < 60.0,
               f"K=9/L=3 run in {elapsed:.1f}s, mean latency {rec.mean_latency:.5f}")


class TestArithmeticAnchors:
    def test_table3_values(self):
        cfg = SystemConfig()
        s = build_scenario(cfg, seed=0)
        rec = run_scheme(SchemeId.LOCAL_ONLY, s)
        exact_local = rec.mean_latency == 0.65536
        lb = metrics.latency(0, ExecutionMode(Mode.CLOUD, 0), 1e12, cfg)
        backhaul = lb.t_backhaul == 0.08192
        lb2 = metrics.latency(0, ExecutionMode(Mode.MEC, 0), 1e12, cfg)
        mec = abs(lb2.t_exec - 0.10923) <= 1e-5
        report("arithmetic-anchors", exact_local and backhaul and mec,
               f"local {rec.mean_latency}, backhaul {lb.t_backhaul}, "
               f"mec {lb2.t_exec:.6f}")


class TestSchemeOrdering:
    def test_figs_6_7_ordering(self):
        res = _run_grid([SchemeId.LOCAL_ONLY, SchemeId.ET_ISCC,
                         SchemeId.DCET_ISCC], trials=50, g_cap=4.5e9)
        lat = {s: np.array([r[0] for r in rows]) for s, rows in res.items()}
        m_local = lat[SchemeId.LOCAL_ONLY].mean()
        m_et = lat[SchemeId.ET_ISCC].mean()
        m_dcet = lat[SchemeId.DCET_ISCC].mean()
        gap1 = m_local - m_et >= -1e-3 * m_local
        gap2 = m_et - m_dcet >= -1e-3 * m_et
        strict = np.mean(lat[SchemeId.DCET_ISCC] < lat[SchemeId.ET_ISCC] - 1e-12)
        report("scheme-ordering", gap1 and gap2 and strict >= 0.6,
               f"means local {m_local:.4f} >= et {m_et:.4f} >= dcet {m_dcet:.4f}; "
               f"dcet strictly better in {strict:.0%} of seeds")


class TestSensingTradeoff:
    def test_fig12_trend(self):
        gammas = [2, 4, 6, 8, 10]
        trials = 10
        means = []
        sinr_ok = True
        for gdb in gammas:
            res = _run_grid([SchemeId.DCET_ISCC], trials=trials, gamma_db=gdb)
            rows = res[SchemeId.DCET_ISCC]
            means.append(np.mean([r[0] for r in rows]))
            for lat, feasible, min_sinr_db in rows:
                if feasible and min_sinr_db < gdb - 0.01:
                    sinr_ok = False
        rho, _ = spearmanr(gammas, means)
        report("sensing-tradeoff",
               rho >= 0.9 and sinr_ok,
               f"spearman {rho:.3f}, means {[f'{m:.5f}' for m in means]}, "
               f"sinr_ok {sinr_ok}")


class TestBeamformingValue:
    def test_fig11_trend(self):
        res = _run_grid([SchemeId.DCET_ISCC, SchemeId.DCET_MRT,
                         SchemeId.DCET_MRS], trials=50)
        d = np.array([r[0] for r in res[SchemeId.DCET_ISCC]])
        m1 = np.array([r[0] for r in res[SchemeId.DCET_MRT]])
        m2 = np.array([r[0] for r in res[SchemeId.DCET_MRS]])
        wins = np.mean((d <= m1 + 1e-12) & (d <= m2 + 1e-12))
        report("beamforming-value", wins >= 0.9,
               f"dcet <= mrt and <= mrs on {wins:.0%} of 50 seeds")
