"""Experiment orchestration: sweeps, Monte-Carlo trials, CSV persistence.

Trials are independent: each derives its own RNG sub-stream from the root
seed via ``SeedSequence([root_seed, trial])``, so a trial is reproducible in
isolation and identical scenarios are shared across schemes and (shape
preserving) sweep values.  Results go to a UTF-8, RFC-4180 CSV: ``#``-prefixed
provenance lines, one fixed header row, one data row per (scheme, sweep value,
trial), then a ``#``-prefixed summary block with means and 95% confidence
half-widths.
"""

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np
import yaml

from .driver import DriverOptions, SchemeId, run_scheme
from .errors import ConfigError, SchemaError
from .scenario import SystemConfig, build_scenario

CSV_COLUMNS = [
    "scheme", "sweep_variable", "sweep_value", "trial", "seed",
    "mean_latency_s", "mean_energy_J", "mean_sensing_sinr_dB",
    "wall_clock_offload_s", "wall_clock_beamform_s", "wall_clock_total_s",
    "bcd_rounds", "admm_iterations", "beamform_iterations", "feasible",
]
# columns that vary run-to-run and are excluded from determinism comparisons
CSV_TIMING_COLUMNS = ["wall_clock_offload_s", "wall_clock_beamform_s",
                      "wall_clock_total_s"]

SWEEPABLE = ("B", "beta", "G", "f_mec", "r_f", "P_th", "M", "N", "K",
             "Gamma_r", "f_local")

# sweep-value units: B Hz, beta cycles/bit, G and f_* cycles/s, r_f bit/s,
# P_th dBm, Gamma_r dB, M/N/K counts


@dataclass
class ExperimentSpec:
    name: str
    config: SystemConfig = field(default_factory=SystemConfig)
    sweep: str = "B"
    values: tuple = (10e6,)
    trials: int = 50
    schemes: tuple = (SchemeId.LOCAL_ONLY, SchemeId.ET_ISCC, SchemeId.DCET_ISCC)
    seed: int = 0
    output: str = "results.csv"

    def validate(self):
        if self.sweep not in SWEEPABLE:
            raise ConfigError(f"sweep: must be one of {SWEEPABLE}, got {self.sweep!r}")
        vals = np.asarray(self.values, dtype=float)
        if vals.size == 0 or not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise ConfigError("values: sweep values must be finite and positive")
        if self.trials < 1:
            raise ConfigError(f"trials: must be >= 1, got {self.trials}")
        for s in self.schemes:
            if not isinstance(s, SchemeId):
                raise ConfigError(f"schemes: unknown scheme {s!r}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "system": self.config.to_dict(),
            "experiment": {
                "sweep": self.sweep,
                "values": list(map(float, self.values)),
                "trials": self.trials,
                "schemes": [s.value for s in self.schemes],
                "seed": self.seed,
                "output": self.output,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        try:
            exp = d["experiment"]
            return cls(
                name=d.get("name", "experiment"),
                config=SystemConfig.from_dict(d.get("system", {})),
                sweep=exp["sweep"],
                values=tuple(float(v) for v in exp["values"]),
                trials=int(exp.get("trials", 50)),
                schemes=tuple(SchemeId(s) for s in exp.get(
                    "schemes", ["local-only", "et-iscc", "dcet-iscc"])),
                seed=int(exp.get("seed", 0)),
                output=exp.get("output", "results.csv"),
            )
        except KeyError as exc:
            raise SchemaError(f"experiment spec missing key: {exc}") from exc


def load_spec(path: str) -> ExperimentSpec:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: expected a mapping at the top level")
    spec = ExperimentSpec.from_dict(data)
    spec.validate()
    return spec


def save_spec(spec: ExperimentSpec, path: str):
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(spec.to_dict(), fh, sort_keys=True)


def apply_sweep(config: SystemConfig, sweep: str, value: float) -> SystemConfig:
    """Base config with one sweep variable replaced (units documented above)."""
    if sweep == "B":
        return config.with_updates(B=value, scale_task_with_bandwidth=True)
    if sweep == "beta":
        return config.with_updates(beta=value)
    if sweep == "G":
        return config.with_updates(G=np.full(config.L, value))
    if sweep == "f_mec":
        return config.with_updates(f_mec=np.full(config.K, value))
    if sweep == "r_f":
        return config.with_updates(r_f=value)
    if sweep == "P_th":
        return config.with_updates(P_th=10 ** ((value - 30) / 10))
    if sweep == "M":
        return config.with_updates(M=int(value))
    if sweep == "N":
        return config.with_updates(N=int(value))
    if sweep == "K":
        k = int(value)
        return config.with_updates(K=k, f_local=config.f_local[0],
                                   f_mec=config.f_mec[0], f_cloud=config.f_cloud[0])
    if sweep == "Gamma_r":
        return config.with_updates(Gamma_r=10 ** (value / 10))
    if sweep == "f_local":
        return config.with_updates(f_local=np.full(config.K, value))
    raise ConfigError(f"sweep: unknown variable {sweep!r}")


def trial_seed(root_seed: int, trial: int) -> int:
    """Documented sub-stream scheme: one child stream per trial index."""
    ss = np.random.SeedSequence([int(root_seed), int(trial)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _run_job(args):
    spec_dict, scheme_value, value, trial = args
    spec = ExperimentSpec.from_dict(spec_dict)
    scheme = SchemeId(scheme_value)
    cfg = apply_sweep(spec.config, spec.sweep, value)
    seed = trial_seed(spec.seed, trial)
    scenario = build_scenario(cfg, seed=seed)
    rec = run_scheme(scheme, scenario)
    sinr_db = 10 * np.log10(np.maximum(rec.sensing_sinr, 1e-300))
    return {
        "scheme": scheme.value,
        "sweep_variable": spec.sweep,
        "sweep_value": repr(float(value)),
        "trial": trial,
        "seed": seed,
        "mean_latency_s": repr(float(rec.mean_latency)),
        "mean_energy_J": repr(float(np.mean(rec.energies))),
        "mean_sensing_sinr_dB": repr(float(np.mean(sinr_db))),
        "wall_clock_offload_s": f"{rec.wall_clock['offload']:.6f}",
        "wall_clock_beamform_s": f"{rec.wall_clock['beamform']:.6f}",
        "wall_clock_total_s": f"{rec.wall_clock['total']:.6f}",
        "bcd_rounds": rec.bcd_rounds,
        "admm_iterations": rec.admm_iterations,
        "beamform_iterations": rec.beamform_iterations,
        "feasible": "true" if rec.feasible else "false",
    }


def run_experiment(spec: ExperimentSpec, workers: int = 1,
                   progress=None) -> str:
    """Execute every (scheme, sweep value, trial) cell and write the CSV."""
    spec.validate()
    out_dir = os.path.dirname(os.path.abspath(spec.output))
    if not os.path.isdir(out_dir) or not os.access(out_dir, os.W_OK):
        raise ConfigError(f"output: directory not writable: {out_dir}")

    jobs = [(spec.to_dict(), scheme.value, float(value), trial)
            for scheme in spec.schemes
            for value in spec.values
            for trial in range(spec.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_job, jobs, chunksize=1))
    else:
        rows = []
        for i, job in enumerate(jobs):
            rows.append(_run_job(job))
            if progress:
                progress(i + 1, len(jobs))
    rows.sort(key=lambda r: (r["scheme"], float(r["sweep_value"]), r["trial"]))

    buf = io.StringIO()
    buf.write("# isccsim-results v1\n")
    buf.write("# spec: " + json.dumps(spec.to_dict(), sort_keys=True) + "\n")
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n",
                            quoting=csv.QUOTE_MINIMAL)
    writer.writeheader()
    for row in rows:
        writer.writerow(row)

    buf.write("# --- summary: mean and 95% confidence half-width per cell ---\n")
    for scheme in spec.schemes:
        for value in spec.values:
            cell = [r for r in rows if r["scheme"] == scheme.value
                    and float(r["sweep_value"]) == float(value)]
            lat = np.array([float(r["mean_latency_s"]) for r in cell])
            en = np.array([float(r["mean_energy_J"]) for r in cell])
            n = len(cell)
            ci_lat = 1.96 * lat.std(ddof=1) / np.sqrt(n) if n > 1 else 0.0
            ci_en = 1.96 * en.std(ddof=1) / np.sqrt(n) if n > 1 else 0.0
            buf.write(
                f"# summary,scheme={scheme.value},sweep_value={float(value)!r},"
                f"n={n},mean_latency_s={float(lat.mean())!r},"
                f"ci95_latency_s={float(ci_lat)!r},"
                f"mean_energy_J={float(en.mean())!r},"
                f"ci95_energy_J={float(ci_en)!r}\n")

    with open(spec.output, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    return spec.output


def read_results(path: str):
    """Parse a results CSV into (spec_dict, rows); raises SchemaError on drift."""
    spec_dict = None
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        data_lines = []
        for line in fh:
            if line.startswith("# spec: "):
                spec_dict = json.loads(line[len("# spec: "):])
            elif line.startswith("#"):
                continue
            else:
                data_lines.append(line)
    reader = csv.DictReader(data_lines)
    if reader.fieldnames != CSV_COLUMNS:
        raise SchemaError(
            f"{path}: expected columns {CSV_COLUMNS}, found {reader.fieldnames}")
    for row in reader:
        rows.append(row)
    return spec_dict, rows


def audit_results(path: str, recompute: bool = True):
    """Re-verify feasibility flags; returns a list of violation messages.

    With ``recompute`` the flagged-feasible rows are re-solved from their
    recorded (scheme, sweep value, trial seed) and re-audited from scratch.
    """
    spec_dict, rows = read_results(path)
    if spec_dict is None:
        raise SchemaError(f"{path}: missing '# spec:' provenance line")
    spec = ExperimentSpec.from_dict(spec_dict)
    problems = []
    for row in rows:
        if row["feasible"] not in ("true", "false"):
            problems.append(f"row {row}: bad feasible flag")
            continue
        if not recompute:
            continue
        out = _run_job((spec.to_dict(), row["scheme"],
                        float(row["sweep_value"]), int(row["trial"])))
        if out["feasible"] != row["feasible"]:
            problems.append(
                f"scheme={row['scheme']} value={row['sweep_value']} "
                f"trial={row['trial']}: feasible flag {row['feasible']} "
                f"does not reproduce ({out['feasible']})")
        elif abs(float(out["mean_latency_s"]) - float(row["mean_latency_s"])) > \
                1e-9 * max(1.0, float(row["mean_latency_s"])):
            problems.append(
                f"scheme={row['scheme']} value={row['sweep_value']} "
                f"trial={row['trial']}: latency does not reproduce")
    return problems


# ---------------------------------------------------------------------------
# builtin presets mirroring the reported experiment sweeps

def builtin_sweeps(trials: int = 50, paper_scale: bool = False,
                   out_dir: str = ".") -> dict:
    """Named experiment presets; ``paper_scale`` switches to 500 trials."""
    n = 500 if paper_scale else trials
    base = SystemConfig()

    def spec(name, sweep, values, schemes, config=None, n_trials=None):
        return ExperimentSpec(
            name=name, config=config or base, sweep=sweep, values=tuple(values),
            trials=n_trials or n, schemes=tuple(schemes), seed=0,
            output=os.path.join(out_dir, f"{name}.csv"))

    all3 = (SchemeId.LOCAL_ONLY, SchemeId.ET_ISCC, SchemeId.DCET_ISCC)
    five = (SchemeId.LOCAL_ONLY, SchemeId.ET_ISCC, SchemeId.DCET_ISCC,
            SchemeId.SEQUENTIAL_DCET, SchemeId.DCET_MRS)
    return {
        "fig6_bandwidth": spec("fig6_bandwidth", "B", [10e6, 20e6, 30e6], five),
        "fig7_beta": spec("fig7_beta", "beta", [200, 400, 600, 800], all3,
                          config=base.with_updates(G=np.full(base.L, 4.5e9))),
        "fig8_fE_rf": spec("fig8_fE_rf", "f_mec", [1e9, 2e9, 3e9, 4e9, 5e9],
                           (SchemeId.ET_ISCC, SchemeId.DCET_ISCC)),
        "fig9_energy_fL": spec("fig9_energy_fL", "f_local",
                               [0.3e9, 0.4e9, 0.5e9, 0.6e9, 0.7e9], all3,
                               config=base.with_updates(G=np.full(base.L, 4.5e9))),
        "fig10_scale": spec("fig10_scale", "K", [30, 35, 40],
                            (SchemeId.ET_ISCC, SchemeId.DCET_ISCC),
                            config=base.with_updates(
                                L=5, G=np.full(5, 9e9)),
                            n_trials=min(n, 10)),
        "fig11_Pth_M": spec("fig11_Pth_M", "P_th", [24, 27, 30, 33, 36],
                            (SchemeId.DCET_ISCC, SchemeId.DCET_MRT,
                             SchemeId.DCET_MRS)),
        "fig12_gamma": spec("fig12_gamma", "Gamma_r", [2, 4, 6, 8, 10],
                            (SchemeId.DCET_ISCC,)),
    }
