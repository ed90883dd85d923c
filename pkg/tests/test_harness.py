import os

import numpy as np
import pytest

from isccsim.cli import main as cli_main
from isccsim.driver import SchemeId
from isccsim.errors import ConfigError, SchemaError
from isccsim.harness import (CSV_COLUMNS, CSV_TIMING_COLUMNS, ExperimentSpec,
                             apply_sweep, builtin_sweeps, load_spec,
                             read_results, run_experiment, save_spec,
                             trial_seed)
from isccsim.scenario import SystemConfig


def tiny_spec(tmp_path, **kw):
    base = dict(
        name="tiny", config=SystemConfig(L=2, K=2, M=4, N=2),
        sweep="B", values=(10e6,), trials=1,
        schemes=(SchemeId.LOCAL_ONLY,), seed=0,
        output=str(tmp_path / "tiny.csv"))
    base.update(kw)
    return ExperimentSpec(**base)


def strip_timing(rows):
    return [{k: v for k, v in r.items() if k not in CSV_TIMING_COLUMNS}
            for r in rows]


class TestSpecValidation:
    def test_bad_sweep_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="sweep"):
            tiny_spec(tmp_path, sweep="bogus").validate()

    def test_nonpositive_values_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="values"):
            tiny_spec(tmp_path, values=(0.0,)).validate()

    def test_zero_trials_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="trials"):
            tiny_spec(tmp_path, trials=0).validate()

    def test_unwritable_output_fails_before_compute(self, tmp_path):
        spec = tiny_spec(tmp_path, output="/nonexistent-dir-xyz/out.csv")
        with pytest.raises(ConfigError, match="output"):
            run_experiment(spec)


class TestApplySweep:
    base = SystemConfig(L=2, K=3, M=4, N=2)

    def test_bandwidth_enables_task_scaling(self):
        cfg = apply_sweep(self.base, "B", 20e6)
        assert cfg.B == 20e6 and cfg.scale_task_with_bandwidth
        assert cfg.task_bits() == pytest.approx(2 * 819200.0)

    def test_pth_in_dbm(self):
        cfg = apply_sweep(self.base, "P_th", 30.0)
        assert cfg.P_th == pytest.approx(1.0)
        cfg = apply_sweep(self.base, "P_th", 24.0)
        assert cfg.P_th == pytest.approx(10 ** (-6 / 10), rel=1e-12)

    def test_gamma_in_db(self):
        cfg = apply_sweep(self.base, "Gamma_r", 6.0)
        assert cfg.Gamma_r == pytest.approx(10 ** 0.6)

    def test_k_sweep_rebroadcasts_arrays(self):
        cfg = apply_sweep(self.base, "K", 5)
        assert cfg.K == 5 and cfg.f_mec.shape == (5,)


class TestRunExperiment:
    def test_single_cell_row_plus_summary(self, tmp_path):
        spec = tiny_spec(tmp_path)
        path = run_experiment(spec)
        _, rows = read_results(path)
        assert len(rows) == 1
        text = open(path).read()
        assert "# summary,scheme=local-only" in text
        assert text.startswith("# isccsim-results v1")

    def test_rerun_byte_identical_modulo_timing(self, tmp_path):
        spec = tiny_spec(tmp_path, trials=2,
                         schemes=(SchemeId.LOCAL_ONLY, SchemeId.DCET_MRS))
        p1 = run_experiment(spec)
        _, rows1 = read_results(p1)
        spec.output = str(tmp_path / "again.csv")
        p2 = run_experiment(spec)
        _, rows2 = read_results(p2)
        assert strip_timing(rows1) == strip_timing(rows2)

    def test_bandwidth_sweep_local_anchors(self, tmp_path):
        spec = tiny_spec(tmp_path, values=(10e6, 20e6, 30e6),
                         config=SystemConfig(L=2, K=2, M=4, N=2))
        path = run_experiment(spec)
        _, rows = read_results(path)
        by_value = {float(r["sweep_value"]): float(r["mean_latency_s"])
                    for r in rows}
        assert by_value[10e6] == 0.65536
        assert by_value[20e6] == 1.31072
        assert by_value[30e6] == 1.96608

    def test_rows_for_every_cell(self, tmp_path):
        spec = tiny_spec(tmp_path, values=(10e6, 20e6), trials=3,
                         schemes=(SchemeId.LOCAL_ONLY, SchemeId.DCET_MRS))
        path = run_experiment(spec)
        _, rows = read_results(path)
        assert len(rows) == 2 * 2 * 3
        cells = {(r["scheme"], r["sweep_value"], r["trial"]) for r in rows}
        assert len(cells) == 12

    def test_trial_seeds_documented_scheme(self):
        s1 = trial_seed(0, 0)
        s2 = trial_seed(0, 1)
        assert s1 != s2
        assert trial_seed(0, 1) == s2  # stable


class TestPresets:
    def test_fig12_gamma_axis(self):
        spec = builtin_sweeps()["fig12_gamma"]
        assert spec.sweep == "Gamma_r"
        assert tuple(spec.values) == (2, 4, 6, 8, 10)
        assert spec.schemes == (SchemeId.DCET_ISCC,)

    def test_fig10_scale_shape(self):
        spec = builtin_sweeps()["fig10_scale"]
        assert spec.config.L == 5
        assert tuple(spec.values) == (30, 35, 40)

    def test_desk_and_paper_scale(self):
        assert builtin_sweeps()["fig6_bandwidth"].trials == 50
        assert builtin_sweeps(paper_scale=True)["fig6_bandwidth"].trials == 500

    def test_all_presets_roundtrip_through_parser(self, tmp_path):
        for name, spec in builtin_sweeps().items():
            path = str(tmp_path / f"{name}.yaml")
            save_spec(spec, path)
            spec2 = load_spec(path)
            assert spec2.to_dict() == spec.to_dict(), name


class TestCsvSchema:
    def test_columns_fixed(self, tmp_path):
        spec = tiny_spec(tmp_path)
        path = run_experiment(spec)
        header = [l for l in open(path) if not l.startswith("#")][0].strip()
        assert header == ",".join(CSV_COLUMNS)

    def test_schema_error_on_foreign_csv(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(SchemaError):
            read_results(str(bad))


class TestCli:
    def test_info_runs(self, capsys):
        assert cli_main(["info"]) == 0
        out = capsys.readouterr().out
        assert "fig12_gamma" in out

    def test_run_and_audit_roundtrip(self, tmp_path, capsys):
        spec = tiny_spec(tmp_path)
        yaml_path = str(tmp_path / "spec.yaml")
        save_spec(spec, yaml_path)
        assert cli_main(["run", yaml_path, "--quiet"]) == 0
        csv_path = capsys.readouterr().out.strip()
        assert os.path.exists(csv_path)
        assert cli_main(["audit", csv_path]) == 0

    def test_audit_flags_tampered_rows(self, tmp_path, capsys):
        spec = tiny_spec(tmp_path, schemes=(SchemeId.DCET_MRS,))
        path = run_experiment(spec)
        text = open(path).read()
        assert ",false" in text or ",true" in text
        tampered = text.replace(",false", ",true") if ",false" in text \
            else text.replace(",true", ",false")
        bad = tmp_path / "tampered.csv"
        bad.write_text(tampered)
        assert cli_main(["audit", str(bad)]) == 1

    def test_unknown_preset_errors(self, capsys):
        assert cli_main(["preset", "no-such-preset"]) == 2

    def test_preset_dump_spec(self, tmp_path, capsys):
        out = str(tmp_path / "f12.yaml")
        assert cli_main(["preset", "fig12_gamma", "--dump-spec", out]) == 0
        spec = load_spec(out)
        assert spec.sweep == "Gamma_r"

    def test_bad_spec_file_exit_code(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("not: a spec\n")
        assert cli_main(["run", str(bad)]) == 2
