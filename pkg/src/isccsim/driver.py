"""Outer block-coordinate loop and the comparison schemes.

Alternates the offloading ADMM (frozen beams) with the beamforming solver
(frozen modes), keeps the best feasible iterate, and audits every returned
record from scratch.  Baseline schemes reuse the same machinery with parts
frozen or disabled.
"""

import enum
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .beamform_fp import (BeamformingInfeasible, FpOptions, beamforming_solve,
                          feasible_initialization, serving_map)
from .metrics import ExecutionMode, Mode
from .offload_admm import (AdmmOptions, CostTable, admm_solve,
                           modes_total_latency, round_decisions)
from .scenario import Scenario, steering_vector


class SchemeId(enum.Enum):
    DCET_ISCC = "dcet-iscc"
    ET_ISCC = "et-iscc"
    LOCAL_ONLY = "local-only"
    DCET_MRT = "dcet-mrt"
    DCET_MRS = "dcet-mrs"
    SEQUENTIAL_DCET = "sequential-dcet"


@dataclass
class DriverOptions:
    bcd_rounds: int = 10
    bcd_tol: float = 1e-3
    admm: AdmmOptions = field(default_factory=AdmmOptions)
    fp: FpOptions = field(default_factory=FpOptions)
    width: int | None = None        # None = one worker per core (capped)
    mrt_mode: str = "max_norm_column"   # or "dominant_singular"

    def effective_width(self) -> int:
        if self.width is not None:
            return max(1, self.width)
        return max(1, min(os.cpu_count() or 1, 4))


@dataclass
class SolutionRecord:
    scheme: str
    modes: list
    W: np.ndarray
    latencies: list                  # per-terminal LatencyBreakdown
    powers: np.ndarray               # (K,) W
    energies: np.ndarray             # (K,) J
    sensing_sinr: np.ndarray         # (K,) linear
    objective_trace: list            # total latency per BCD round
    total_latency: float
    mean_latency: float
    feasible: bool
    wall_clock: dict                 # phase -> seconds
    bcd_rounds: int = 0
    admm_iterations: int = 0
    beamform_iterations: int = 0
    diagnostics: list = field(default_factory=list)


def _evaluate(scenario, scheme, modes, W, trace, wall, feasible_hint=True,
              diagnostics=None, bcd_rounds=0, admm_iters=0, beam_iters=0):
    cfg = scenario.config
    rates = metrics.serving_rates(scenario, modes, W)
    lats, powers, energies = [], np.empty(cfg.K), np.empty(cfg.K)
    for k in range(cfg.K):
        lb = metrics.latency(k, modes[k], float(rates[k]), cfg)
        lats.append(lb)
        powers[k] = metrics.power_total(k, modes[k], W[k], cfg)
        energies[k] = metrics.energy(k, modes[k], W[k], lb.total, cfg)
    total = float(sum(lb.total for lb in lats))
    audit = metrics.audit_solution(scenario, modes, W)
    diags = list(diagnostics or [])
    if not audit.feasible:
        diags.append({"event": "audit_violations", "violations": audit.violations})
    return SolutionRecord(
        scheme=scheme.value, modes=modes, W=W, latencies=lats, powers=powers,
        energies=energies, sensing_sinr=metrics.sensing_sinr_all(scenario, W),
        objective_trace=trace, total_latency=total, mean_latency=total / cfg.K,
        feasible=bool(feasible_hint and audit.feasible), wall_clock=wall,
        bcd_rounds=bcd_rounds, admm_iterations=admm_iters,
        beamform_iterations=beam_iters, diagnostics=diags)


def _all_local(cfg) -> list[ExecutionMode]:
    return [ExecutionMode(Mode.LOCAL)] * cfg.K


def _local_fallback(scenario, scheme, wall, diagnostics):
    """All-local record with budget-scaled steering beams (sensing flagged)."""
    cfg = scenario.config
    modes = _all_local(cfg)
    W = np.empty((cfg.K, cfg.N), dtype=complex)
    for k in range(cfg.K):
        a = steering_vector(scenario.target_angle[k], cfg.N, cfg.alpha)
        budget = max(cfg.P_th - cfg.eta * cfg.f_local[k] ** 3, 0.0)
        W[k] = np.sqrt(budget) * a / np.linalg.norm(a)
    trace = [cfg.K * float(cfg.beta * cfg.task_bits() / cfg.f_local[0])]
    return _evaluate(scenario, scheme, modes, W, trace, wall,
                     feasible_hint=False, diagnostics=diagnostics)


def bcd_optimize(scenario: Scenario, opts: DriverOptions | None = None,
                 cloud_enabled: bool = True,
                 scheme: SchemeId = SchemeId.DCET_ISCC) -> SolutionRecord:
    """Alternate offloading and beamforming until the latency stalls."""
    opts = opts or DriverOptions()
    cfg = scenario.config
    admm_opts = AdmmOptions(**{**opts.admm.__dict__, "cloud_enabled": cloud_enabled})
    fp_opts = FpOptions(**{**opts.fp.__dict__, "width": opts.effective_width()})

    wall = {"offload": 0.0, "beamform": 0.0, "total": 0.0}
    t_start = time.perf_counter()
    diagnostics = []

    modes = _all_local(cfg)
    t0 = time.perf_counter()
    W, feasible, init_diag = feasible_initialization(scenario, modes)
    wall["beamform"] += time.perf_counter() - t0
    diagnostics.extend(init_diag)
    if not feasible:
        wall["total"] = time.perf_counter() - t_start
        return _local_fallback(scenario, scheme, wall, diagnostics)

    trace = []
    admm_iters = 0
    beam_iters = 0
    best = None
    prev_obj = None
    rounds = 0
    for rounds in range(1, opts.bcd_rounds + 1):
        t0 = time.perf_counter()
        costs = CostTable.from_scenario(scenario, W)
        admm_res = admm_solve(costs, cfg, admm_opts)
        admm_iters += admm_res.state.iter
        modes_new, round_diag = round_decisions(
            admm_res.a, admm_res.b, costs, cfg, cloud_enabled=cloud_enabled)
        diagnostics.extend(admm_res.diagnostics)
        diagnostics.extend(round_diag)
        # never switch to a strictly worse assignment under the current rates
        modes_changed = True
        if modes_total_latency(modes_new, costs) <= modes_total_latency(modes, costs):
            modes_changed = modes_new != modes
            modes = modes_new
        wall["offload"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        try:
            # a mode change shifts the offload set; re-initialize rather than
            # inherit a leakage pattern tuned for the old set
            beam_res = beamforming_solve(scenario, modes, fp_opts,
                                         W0=None if modes_changed else W)
        except BeamformingInfeasible as exc:
            diagnostics.append({"event": "beamforming_infeasible", "round": rounds,
                                "detail": str(exc)})
            wall["beamform"] += time.perf_counter() - t0
            break
        wall["beamform"] += time.perf_counter() - t0
        beam_iters += beam_res.iterations
        diagnostics.extend(beam_res.diagnostics)
        W = beam_res.W

        rates = metrics.serving_rates(scenario, modes, W)
        obj, _ = metrics.objective_total_latency(modes, rates, cfg)
        trace.append(obj)
        if best is None or obj <= best[0]:
            best = (obj, [m for m in modes], W.copy())
        if prev_obj is not None and abs(prev_obj - obj) <= opts.bcd_tol * prev_obj:
            break
        prev_obj = obj

    if best is None:
        wall["total"] = time.perf_counter() - t_start
        return _local_fallback(scenario, scheme, wall, diagnostics)
    _, modes, W = best
    wall["total"] = time.perf_counter() - t_start
    return _evaluate(scenario, scheme, modes, W, trace, wall,
                     diagnostics=diagnostics, bcd_rounds=rounds,
                     admm_iters=admm_iters, beam_iters=beam_iters)


def _fixed_beam_record(scenario, scheme, W, opts):
    """Optimize offloading only, for externally fixed beamformers."""
    cfg = scenario.config
    wall = {"offload": 0.0, "beamform": 0.0, "total": 0.0}
    t_start = time.perf_counter()
    t0 = time.perf_counter()
    costs = CostTable.from_scenario(scenario, W)
    admm_res = admm_solve(costs, cfg, AdmmOptions(**{**opts.admm.__dict__,
                                                     "cloud_enabled": True}))
    modes, round_diag = round_decisions(admm_res.a, admm_res.b, costs, cfg)
    wall["offload"] = time.perf_counter() - t0
    wall["total"] = time.perf_counter() - t_start
    rates = metrics.serving_rates(scenario, modes, W)
    obj, _ = metrics.objective_total_latency(modes, rates, cfg)
    return _evaluate(scenario, scheme, modes, W, [obj], wall,
                     diagnostics=admm_res.diagnostics + round_diag,
                     admm_iters=admm_res.state.iter)


def _mrt_beams(scenario, mode: str) -> np.ndarray:
    cfg = scenario.config
    W = np.empty((cfg.K, cfg.N), dtype=complex)
    for k in range(cfg.K):
        H = scenario.channels.H_up[scenario.nearest_bs(k), k]
        if mode == "dominant_singular":
            U, _, _ = np.linalg.svd(H)
            h = U[:, 0]
        else:
            h = H[:, int(np.argmax(np.linalg.norm(H, axis=0)))]
        W[k] = np.sqrt(cfg.P_th) * h / np.linalg.norm(h)
    return W


def _mrs_beams(scenario) -> np.ndarray:
    cfg = scenario.config
    W = np.empty((cfg.K, cfg.N), dtype=complex)
    for k in range(cfg.K):
        a = steering_vector(scenario.target_angle[k], cfg.N, cfg.alpha)
        W[k] = np.sqrt(cfg.P_th) * a / np.linalg.norm(a)
    return W


def run_scheme(scheme: SchemeId, scenario: Scenario,
               opts: DriverOptions | None = None) -> SolutionRecord:
    """Dispatch one comparison scheme on one scenario."""
    opts = opts or DriverOptions()
    cfg = scenario.config

    if scheme is SchemeId.LOCAL_ONLY:
        wall = {"offload": 0.0, "beamform": 0.0, "total": 0.0}
        t0 = time.perf_counter()
        modes = _all_local(cfg)
        W, feasible, diag = feasible_initialization(scenario, modes)
        wall["beamform"] = wall["total"] = time.perf_counter() - t0
        rec = _evaluate(scenario, scheme, modes, W, [], wall,
                        feasible_hint=feasible, diagnostics=diag)
        rec.objective_trace = [rec.total_latency]
        return rec

    if scheme is SchemeId.ET_ISCC:
        return bcd_optimize(scenario, opts, cloud_enabled=False, scheme=scheme)

    if scheme is SchemeId.DCET_ISCC:
        return bcd_optimize(scenario, opts, cloud_enabled=True, scheme=scheme)

    if scheme is SchemeId.SEQUENTIAL_DCET:
        seq_opts = DriverOptions(**{**opts.__dict__})
        seq_opts.width = 1
        return bcd_optimize(scenario, seq_opts, cloud_enabled=True, scheme=scheme)

    if scheme is SchemeId.DCET_MRT:
        return _fixed_beam_record(scenario, scheme, _mrt_beams(scenario, opts.mrt_mode), opts)

    if scheme is SchemeId.DCET_MRS:
        return _fixed_beam_record(scenario, scheme, _mrs_beams(scenario), opts)

    raise ValueError(f"unknown scheme {scheme!r}")
