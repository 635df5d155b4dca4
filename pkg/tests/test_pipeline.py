from dataclasses import replace
import json
import os
from pathlib import Path

import numpy as np
import pytest

from stimcal.config import load_config
from stimcal.errors import DegenerateInputError, StageError, TraceFormatError, UsageError
from stimcal.photocurrent import CurrentTrace, write_trace
from stimcal.pipeline import (
    analysis_options,
    analyze_current_traces,
    analyze_traces,
    edge_trim,
    emit_plot_data,
    make_plan,
    run_calibration,
    theory_statistics,
)
from stimcal.report import read_key_value

BASELINE = Path(__file__).resolve().parents[1] / "configs" / "baseline.yaml"


def short_config(**outputs):
    cfg = load_config(BASELINE).with_overrides(duration_s=0.02, rng_seed=99)
    return replace(cfg, outputs=replace(cfg.outputs, **outputs)) if outputs else cfg


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = short_config(write_traces=True, write_events=True)
    report, cov, manifest = run_calibration(cfg, str(out))
    return cfg, out, report, cov, manifest


class TestRun:
    def test_report_fields(self, run):
        _, out, report, _, _ = run
        kv = read_key_value(out / "report.kv")
        for key in ("eta_ratio.value", "eta_ratio.uncertainty", "eta_q_integral.value", "diagnostics.fano_arm1"):
            assert key in kv
        assert kv["eta_ratio.value"] == report.eta_ratio.value
        assert (out / "report.txt").read_text().startswith("Calibration report")

    def test_estimates_are_plausible(self, run):
        _, _, report, _, _ = run
        # 0.02 s is short: loose sanity bounds only
        assert abs(report.eta_ratio.value - 0.6) < 6 * report.eta_ratio.uncertainty + 0.02
        assert abs(report.eta_q_integral.value - 0.6) < 6 * report.eta_q_integral.uncertainty + 0.02
        assert report.mean_currents[0] == pytest.approx(0.8 * 1e6, rel=0.02)

    def test_manifest_lists_every_file(self, run):
        cfg, out, _, _, manifest = run
        on_disk = sorted(os.listdir(out))
        assert sorted(manifest.artifacts + ["manifest.json"]) == on_disk
        data = json.loads((out / "manifest.json").read_text())
        assert data["config_sha256"] == cfg.digest()
        assert data["rng_seed"] == 99
        assert {"trace1.bin", "trace2.bin", "events.bin", "c11.csv", "c12.csv", "summary.csv", "config.yaml"} <= set(data["artifacts"])

    def test_saved_config_reloads(self, run):
        cfg, out, _, _, _ = run
        assert load_config(out / "config.yaml").digest() == cfg.digest()

    def test_analyze_path_matches_simulate_path(self, run, tmp_path):
        cfg, out, report, _, _ = run
        fs = cfg.plan.sample_rate_hz
        opts = analysis_options(cfg, edge_trim(cfg.detector1, cfg.detector2, fs))
        again, _ = analyze_traces(out / "trace1.bin", out / "trace2.bin", opts, str(tmp_path))
        assert again.eta_ratio == report.eta_ratio
        assert again.eta_q_integral == report.eta_q_integral
        assert again.mean_currents == report.mean_currents

    def test_truncated_trace(self, run, tmp_path):
        cfg, out, _, _, _ = run
        data = (out / "trace1.bin").read_bytes()
        bad = tmp_path / "t1.bin"
        bad.write_bytes(data[:1000])
        opts = analysis_options(cfg, 100)
        with pytest.raises(StageError) as info:
            analyze_traces(bad, out / "trace2.bin", opts)
        assert isinstance(info.value.cause, TraceFormatError)
        assert "byte offset" in str(info.value)

    def test_mismatched_sample_rates(self, run, tmp_path):
        cfg, out, _, _, _ = run
        n = 200000
        write_trace(tmp_path / "a.bin", CurrentTrace(2e8, np.zeros(n)))
        write_trace(tmp_path / "b.bin", CurrentTrace(4e8, np.zeros(n)))
        with pytest.raises(StageError, match="sample rates differ") as info:
            analyze_traces(tmp_path / "a.bin", tmp_path / "b.bin", analysis_options(cfg, 100))
        assert isinstance(info.value.cause, UsageError)

    def test_flat_arm1_is_degenerate(self, run):
        cfg, _, _, _, _ = run
        rng = np.random.default_rng(0)
        t1 = CurrentTrace(2e8, np.ones(400000))
        t2 = CurrentTrace(2e8, rng.normal(size=400000))
        with pytest.raises(StageError) as info:
            analyze_current_traces(t1, t2, analysis_options(cfg, 100))
        assert isinstance(info.value.cause, DegenerateInputError)


class TestDeterminism:
    def test_byte_identical(self, tmp_path):
        cfg = short_config(write_traces=True)
        run_calibration(cfg, str(tmp_path / "a"))
        run_calibration(cfg, str(tmp_path / "b"))
        for name in ("report.kv", "trace1.bin", "trace2.bin", "c12.csv", "summary.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name

    def test_seed_changes_result(self):
        a, _, _ = run_calibration(short_config())
        b, _, _ = run_calibration(short_config().with_overrides(rng_seed=100))
        assert a.eta_ratio.value != b.eta_ratio.value


class TestRefusals:
    def test_zero_gain(self):
        cfg = short_config()
        cfg = replace(cfg, gain=replace(cfg.gain, peak_gain=0.0))
        theory = theory_statistics(cfg)
        assert theory["pair_rate"] == 0.0
        with pytest.raises(StageError, match="pair rate") as info:
            make_plan(cfg, theory)
        assert isinstance(info.value.cause, DegenerateInputError)
        assert "hint" in str(info.value)

    def test_too_short_for_max_lag(self):
        with pytest.raises(StageError) as info:
            run_calibration(load_config(BASELINE).with_overrides(duration_s=2e-6))
        assert isinstance(info.value.cause, UsageError)


class TestPlotData:
    def test_three_files(self, run, tmp_path):
        _, _, report, cov, _ = run
        paths = emit_plot_data(report, cov, str(tmp_path))
        assert sorted(os.path.basename(p) for p in paths) == ["c11.csv", "c12.csv", "summary.csv"]
        c12 = np.loadtxt(tmp_path / "c12.csv", delimiter=",", skiprows=1)
        assert np.array_equal(c12[:, 0], cov["c12"].lags)
        rows = (tmp_path / "summary.csv").read_text().splitlines()
        assert rows[0] == "key,value" and len(rows) == len(report.items()) + 1

    def test_empty_input_gives_headers(self, tmp_path):
        emit_plot_data(None, {}, str(tmp_path))
        assert (tmp_path / "c11.csv").read_text() == "lag_s,covariance,standard_error\n"
        assert (tmp_path / "c12.csv").read_text() == "lag_s,covariance,standard_error\n"
        assert (tmp_path / "summary.csv").read_text() == "key,value\n"
