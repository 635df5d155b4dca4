"""End-to-end self-calibration: theory -> events -> currents -> estimates.

The simulation path never holds a whole run in memory.  Event windows
are synthesized into current samples as they are produced, the two
current streams are aligned, trimmed by one pulse support at each end,
and fed to a covariance accumulator.  The blocking of that accumulator
depends only on the trace length and pulse widths, so analysing the same
traces from files gives the identical report.
"""

from dataclasses import asdict, dataclass, field, replace
import datetime as _dt
import json
import math
import os

import numpy as np
import yaml

from . import __version__
from .correlation import (
    CovarianceAccumulator,
    WindowedCounter,
    _check_max_lag,
    _choose_blocking,
    correlate_traces,
    estimate_eta_integral,
    estimate_eta_ratio,
    integration_window,
    write_covariance_csv,
    BOOTSTRAP_BLOCK_PULSES,
)
from .errors import DegenerateInputError, StageError, StimcalError, UsageError
from .events import EventWriter, SimulationPlan, iter_event_windows
from .fieldstats import flux_statistics, per_mode_photon_number
from .photocurrent import (
    PulseTrainSynthesizer,
    TraceWriter,
    n_samples_for,
    pulse_kernel,
    read_trace,
)
from .report import CalibrationReport
from .rng import Stream, substream


# -- stage helpers ---------------------------------------------------------------


def _stage(name, hint):
    """Context manager that re-raises failures as :class:`StageError`."""

    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is None or isinstance(exc, StageError):
                return False
            if isinstance(exc, (StimcalError, ValueError, ArithmeticError, OSError)):
                raise StageError(name, exc, hint) from exc
            return False

    return _Ctx()


def edge_trim(det1, det2, sample_rate):
    """Samples dropped at each end: one full pulse support of the wider kernel."""
    return max(pulse_kernel(d, sample_rate).values.size for d in (det1, det2))


def default_trim(pulse_width, sample_rate):
    """Edge trim when only the pulse width is known: a 12-width support."""
    return int(math.ceil(12.0 * pulse_width * sample_rate)) + 1


@dataclass(frozen=True)
class AnalysisOptions:
    """Estimation settings shared by the simulate and analyze paths."""

    pulse_width1: float
    pulse_width2: float
    sample_rate: float
    max_lag: float = None
    trim: int = 0
    n_boot: int = 200
    bootstrap_seed: int = 0
    detrend: bool = False

    @property
    def lag(self):
        if self.max_lag is not None:
            return self.max_lag
        t1, t2 = self.pulse_width1, self.pulse_width2
        return max(10.0 * max(t1, t2), 6.0 * (t1 + t2))

    def blocking(self, n_used):
        lag_samples = int(round(self.lag * self.sample_rate))
        min_unit = math.ceil(BOOTSTRAP_BLOCK_PULSES * max(self.pulse_width1, self.pulse_width2) * self.sample_rate)
        return lag_samples, _choose_blocking(n_used, lag_samples, min_unit)


def _estimate(c11, c12, opts, theory=None, diagnostics=None):
    diagnostics = dict(diagnostics or {})
    try:
        ratio = estimate_eta_ratio(c12, c11, n_boot=opts.n_boot, rng_seed=opts.bootstrap_seed)
    except DegenerateInputError as exc:
        raise StageError("estimation", exc, "arm-1 current carries no fluctuation; check eta1 and the event rates") from exc
    window = integration_window(c12)
    integral = estimate_eta_integral(c12, c12.mean_a, window=window, n_boot=opts.n_boot, rng_seed=opts.bootstrap_seed)
    mask = np.abs(c12.lags) <= window * (1 + 1e-9)
    diagnostics["integral_c12_over_mean_i1_e"] = float(np.trapezoid(c12.values[mask], c12.lags[mask]) / c12.mean_a)
    diagnostics["bootstrap_units"] = int(c12.n_units)
    diagnostics["samples_used"] = int(c12.n_samples_used)
    return CalibrationReport(
        eta_ratio=ratio,
        eta_q_integral=integral,
        mean_currents=(float(c12.mean_a), float(c12.mean_b)),
        integration_window=float(window),
        detrended=opts.detrend,
        theory=theory,
        diagnostics=diagnostics,
    )


# -- analyze path ------------------------------------------------------------------


def analyze_current_traces(trace1, trace2, opts):
    """Estimate from two in-memory (or memory-mapped) traces.

    Returns ``(report, {"c11": ..., "c12": ...})``.
    """
    with _stage("estimation", "traces must share sample rate, length and start time"):
        t1 = _with_width(trace1, opts.pulse_width1)
        t2 = _with_width(trace2, opts.pulse_width2)
        n_used = len(t1) - 2 * opts.trim
        lag_samples, (block, per_unit) = opts.blocking(max(n_used, 1))
        cfs = correlate_traces(
            [t1, t2], lag_samples / t1.sample_rate, pairs=((0, 0), (0, 1)), trim=opts.trim,
            detrend=opts.detrend, block_samples=block, unit_samples=per_unit * block,
        )
        c11, c12 = cfs[(0, 0)], cfs[(0, 1)]
    with _stage("estimation", "increase the duration or check the pulse widths"):
        report = _estimate(c11, c12, opts)
    return report, {"c11": c11, "c12": c12}


def _with_width(trace, width):
    return replace(trace, pulse_width=width)


def analyze_traces(path1, path2, opts, out_dir=None):
    """Estimation-only pipeline on two binary trace files."""
    with _stage("trace-input", "re-export the traces; files must be complete and aligned"):
        t1 = read_trace(path1, opts.pulse_width1)
        t2 = read_trace(path2, opts.pulse_width2)
        if t1.sample_rate != t2.sample_rate:
            raise UsageError(f"sample rates differ: {t1.sample_rate} vs {t2.sample_rate} Hz")
        if len(t1) != len(t2) or t1.start_time != t2.start_time:
            raise UsageError("traces are not aligned (length or start time differ)")
    report, cov = analyze_current_traces(t1, t2, opts)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        report.write(out_dir)
        emit_plot_data(report, cov, out_dir)
    return report, cov


# -- simulate path -----------------------------------------------------------------


@dataclass
class RunManifest:
    config_sha256: str
    code_version: str
    rng_seed: int
    bootstrap_seed: int
    started_utc: str
    finished_utc: str = ""
    artifacts: list = field(default_factory=list)

    def write(self, directory):
        path = os.path.join(directory, "manifest.json")
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def theory_statistics(cfg):
    """FluxStatistics of the configured optics as a plain dict."""
    with _stage("theory", "enlarge the detection regions or relax the seed width"):
        r1, r2 = cfg.regions()
        return flux_statistics(cfg.gain, cfg.optics, cfg.seed_beam(), r1, r2).as_dict()


def make_plan(cfg, theory):
    if not theory["pair_rate"] > 0:
        raise StageError(
            "theory",
            DegenerateInputError("zero pair rate: without down-conversion there is nothing to calibrate against"),
            "set peak_gain > 0 and overlap the seed with the emission ring",
        )
    p = cfg.plan
    with _stage("plan", "check durations and rates"):
        return SimulationPlan(
            duration=p.duration_s,
            pair_rate=theory["pair_rate"],
            seed_rate=cfg.seed.total_flux_per_s,
            coherence_time=theory["coherence_time"],
            rng_seed=p.rng_seed,
            eta1=cfg.detector1.eta,
            eta2=cfg.detector2.eta,
            dark_rate1=p.dark_rate1_per_s,
            dark_rate2=p.dark_rate2_per_s,
            segment_duration=p.segment_duration_s,
        )


class _PairedFeed:
    """Aligns the two synthesized streams and routes them to the sinks."""

    def __init__(self, n_total, trim, acc, writers):
        self.n_total = n_total
        self.trim = trim
        self.acc = acc
        self.writers = writers
        self.pending = [np.empty(0), np.empty(0)]
        self.pos = 0

    def push(self, s1, s2):
        self.pending = [np.concatenate([self.pending[0], s1]), np.concatenate([self.pending[1], s2])]
        m = min(p.size for p in self.pending)
        if m == 0:
            return
        a, b = self.pending[0][:m], self.pending[1][:m]
        self.pending = [self.pending[0][m:], self.pending[1][m:]]
        for w, s in zip(self.writers, (a, b)):
            if w is not None:
                w.write(s)
        lo = max(self.trim - self.pos, 0)
        hi = min(self.n_total - self.trim - self.pos, m)
        if hi > lo:
            self.acc.update(a[lo:hi], b[lo:hi])
        self.pos += m


def simulate(cfg, plan, out_dir=None):
    """Stream the simulation; returns (c11, c12, count statistics, raw counts, paths)."""
    fs = cfg.plan.sample_rate_hz
    d1, d2 = cfg.detector1, cfg.detector2
    n_total = n_samples_for(plan.duration, fs)
    trim = edge_trim(d1, d2, fs)
    opts = analysis_options(cfg, trim)
    n_used = n_total - 2 * trim
    with _stage("estimation-setup", "lengthen the run or shorten max_lag_s"):
        if n_used <= 0:
            raise UsageError("run shorter than two pulse supports")
        _check_max_lag(opts.lag, n_used / fs, (d1.pulse_width, d2.pulse_width))
        lag_samples, (block, per_unit) = opts.blocking(n_used)
        acc = CovarianceAccumulator(fs, lag_samples, 2, ((0, 0), (0, 1)), block, per_unit)
        counter = WindowedCounter(cfg.analysis.count_window_s, plan.coherence_time)
    paths = []
    writers = [None, None]
    ev_writer = None
    if out_dir is not None and cfg.outputs.write_traces:
        paths += [os.path.join(out_dir, "trace1.bin"), os.path.join(out_dir, "trace2.bin")]
        writers = [TraceWriter(paths[-2], fs), TraceWriter(paths[-1], fs)]
    if out_dir is not None and cfg.outputs.write_events:
        paths.append(os.path.join(out_dir, "events.bin"))
        ev_writer = EventWriter(paths[-1])
    synth = [PulseTrainSynthesizer(pulse_kernel(d, fs), n_total) for d in (d1, d2)]
    feed = _PairedFeed(n_total, trim, acc, writers)
    raw = np.zeros(2, dtype=np.int64)
    detected = np.zeros(2, dtype=np.int64)
    try:
        with _stage("simulation", "check rates and segment duration"):
            for w in iter_event_windows(plan):
                out = []
                for arm, (det, t) in enumerate(((d1, w.times1), (d2, w.times2)), start=1):
                    q = det.draw_charges(t.size, substream(plan.rng_seed, Stream.CHARGE, arm, w.index))
                    out.append(synth[arm - 1].push(t, q, until=w.end))
                feed.push(*out)
                counter.update(w.times1, w.times2, w.start, w.end)
                raw += (w.raw_count1, w.raw_count2)
                detected += (w.times1.size, w.times2.size)
                if ev_writer is not None:
                    ev_writer.write(w)
            feed.push(synth[0].finish(), synth[1].finish())
    finally:
        for wr in writers:
            if wr is not None:
                wr.close()
        if ev_writer is not None:
            ev_writer.close()
    with _stage("estimation", "increase the duration"):
        cfs = acc.finalize((d1.pulse_width, d2.pulse_width), opts.detrend)
        counts = counter.result()
    return cfs[(0, 0)], cfs[(0, 1)], counts, raw, detected, paths


def analysis_options(cfg, trim):
    a = cfg.analysis
    return AnalysisOptions(
        pulse_width1=cfg.detector1.pulse_width,
        pulse_width2=cfg.detector2.pulse_width,
        sample_rate=cfg.plan.sample_rate_hz,
        max_lag=cfg.max_lag_s,
        trim=trim,
        n_boot=a.bootstrap_resamples,
        bootstrap_seed=a.bootstrap_seed,
        detrend=a.detrend,
    )


def _diagnostics(cfg, plan, counts, raw, detected, theory):
    d1, d2 = cfg.detector1, cfg.detector2
    R = plan.pair_rate
    T = plan.duration
    diag = {}
    f1, f1_se = counts.fano(1)
    diag["fano_arm1"], diag["fano_arm1_se"] = f1, f1_se
    ex, ex_se = counts.excess_rate(2)
    diag["excess_rate_arm2_per_s"], diag["excess_rate_arm2_se"] = ex, ex_se
    diag["excess_rate_arm2_expected_per_s"] = 2.0 * d2.eta**2 * R
    cr, cr_se = counts.cross_rate()
    diag["cross_rate_per_s"], diag["cross_rate_se"] = cr, cr_se
    diag["cross_rate_expected_per_s"] = 2.0 * d1.eta * d2.eta * R
    if d1.eta * d2.eta > 0:
        diag["factor_two_counts"] = cr / (d1.eta * d2.eta * R)
    diag["raw_rate_arm1_per_s"] = float(raw[0] / T)
    diag["raw_rate_arm2_per_s"] = float(raw[1] / T)
    diag["raw_count_arm1"] = int(raw[0])
    diag["raw_count_arm2"] = int(raw[1])
    diag["detected_count_arm1"] = int(detected[0])
    diag["detected_count_arm2"] = int(detected[1])
    diag["mean_current_1_expected_e_per_s"] = d1.eta * R * d1.charge_mean + plan.dark_rate1 * d1.charge_mean
    diag["eta_q_2_true_e"] = d2.eta * d2.charge_mean
    diag["seed_photons_per_resolution_time"] = per_mode_photon_number(
        cfg.seed_beam(), min(d1.pulse_width, d2.pulse_width)
    )
    diag["count_window_s"] = counts.window
    return diag


def run_calibration(cfg, out_dir=None):
    """Run the full self-calibration experiment.

    Returns ``(report, covariances, manifest)``.  With ``out_dir`` the
    report, plot data, optional traces/events, the resolved configuration
    and ``manifest.json`` are written there.
    """
    started = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    theory = theory_statistics(cfg)
    plan = make_plan(cfg, theory)
    if out_dir is not None:
        with _stage("output", "choose a writable output directory"):
            os.makedirs(out_dir, exist_ok=True)
    c11, c12, counts, raw, detected, paths = simulate(cfg, plan, out_dir)
    opts = analysis_options(cfg, edge_trim(cfg.detector1, cfg.detector2, cfg.plan.sample_rate_hz))
    with _stage("estimation", "increase the duration or check the pulse widths"):
        diag = _diagnostics(cfg, plan, counts, raw, detected, theory)
        report = _estimate(c11, c12, opts, theory=theory, diagnostics=diag)
        if cfg.detector2.charge_mean > 0 and cfg.detector2.eta > 0:
            report.diagnostics["factor_two_traces"] = report.diagnostics["integral_c12_over_mean_i1_e"] / (
                cfg.detector2.eta * cfg.detector2.charge_mean
            )
    cov = {"c11": c11, "c12": c12}
    manifest = RunManifest(cfg.digest(), __version__, int(cfg.plan.rng_seed), int(cfg.analysis.bootstrap_seed), started)
    if out_dir is not None:
        with _stage("output", "choose a writable output directory"):
            cfg_path = os.path.join(out_dir, "config.yaml")
            with open(cfg_path, "w") as fh:
                yaml.safe_dump(cfg.to_dict(), fh, sort_keys=True)
            paths = paths + report.write(out_dir) + [cfg_path]
            if cfg.outputs.plot_data:
                paths += emit_plot_data(report, cov, out_dir)
            manifest.artifacts = sorted(os.path.basename(p) for p in paths)
            manifest.finished_utc = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
            manifest.write(out_dir)
    return report, cov, manifest


def emit_plot_data(report, covariances, out_dir):
    """Write c11.csv, c12.csv (lag_s, covariance, standard_error) and summary.csv (key, value).

    Missing inputs (``report`` None, absent covariance keys) give header-only files.
    """
    paths = []
    with _stage("output", "check that the output directory is writable"):
        for name in ("c11", "c12"):
            path = os.path.join(out_dir, f"{name}.csv")
            write_covariance_csv(path, covariances.get(name))
            paths.append(path)
        path = os.path.join(out_dir, "summary.csv")
        with open(path, "w") as fh:
            fh.write("key,value\n")
            for k, v in report.items() if report is not None else ():
                fh.write(f"{k},{float(v)!r}\n" if isinstance(v, float) else f"{k},{v}\n")
        paths.append(path)
    return paths
