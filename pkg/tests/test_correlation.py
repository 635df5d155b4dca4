import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stimcal.correlation import (
    CovarianceAccumulator,
    WindowedCounter,
    correlate_traces,
    estimate_covariance,
    estimate_eta_integral,
    estimate_eta_ratio,
    integration_window,
    moving_block_weights,
    windowed_count_statistics,
    write_covariance_csv,
)
from stimcal.errors import DegenerateInputError, UsageError
from stimcal.events import PhotonEventStream, poisson_times
from stimcal.fieldstats import Arm
from stimcal.photocurrent import CurrentTrace, DetectorModel, synthesize_trace

from oracles import direct_covariance

FS = 2e8
TAU = 1e-7
MAX_LAG = 1.5e-6


def stream(times, duration, arm=Arm.ARM1):
    times = np.sort(np.asarray(times, dtype=float))
    return PhotonEventStream(arm, times, np.zeros(times.size, np.uint8), duration)


@pytest.fixture(scope="module")
def paired():
    """Arm 2 sees every arm-1 photon twice plus independent background."""
    rng = np.random.default_rng(21)
    duration, rate, bg = 0.01, 2e6, 4e6
    t1 = poisson_times(rng, rate, 0.0, duration)
    tb = poisson_times(rng, bg, 0.0, duration)
    model = DetectorModel(1.0, TAU)
    s1 = stream(t1, duration)
    times2 = np.concatenate([t1, tb])
    q2 = np.concatenate([np.full(t1.size, 2.0), np.ones(tb.size)])
    order = np.argsort(times2, kind="stable")
    s2 = stream(times2[order], duration, Arm.ARM2)
    tr1 = synthesize_trace(s1, model, FS)
    tr2 = synthesize_trace(s2, model, FS, charges=q2[order])
    cov = correlate_traces([tr1, tr2], MAX_LAG, trim=200)
    return dict(rate=rate, tr1=tr1, tr2=tr2, c11=cov[(0, 0)], c12=cov[(0, 1)])


def white_trace(n, seed, mean=0.0, pulse_width=None):
    return CurrentTrace(FS, mean + np.random.default_rng(seed).normal(size=n), 0.0, pulse_width)


class TestCovarianceKernel:
    @pytest.mark.parametrize("n, lag, block", [(3000, 7, 16), (5000, 40, 64), (4097, 0, 1)])
    def test_matches_direct_covariance(self, n, lag, block):
        a = white_trace(n, 1, 3.0)
        b = CurrentTrace(FS, np.convolve(a.samples, np.ones(5), "same") + np.random.default_rng(2).normal(size=n), 0.0)
        cov = correlate_traces([a, b], lag / FS, pairs=((0, 0), (0, 1), (1, 0)), block_samples=block, unit_samples=block)
        assert np.allclose(cov[(0, 1)].values, direct_covariance(a.samples, b.samples, lag), rtol=1e-10, atol=1e-12)
        assert np.allclose(cov[(0, 0)].values, direct_covariance(a.samples, a.samples, lag), rtol=1e-10, atol=1e-12)
        assert cov[(0, 1)].mean_a == pytest.approx(a.samples.mean(), rel=1e-13)
        assert cov[(0, 1)].mean_b == pytest.approx(b.samples.mean(), rel=1e-13)

    def test_symmetry(self):
        a, b = white_trace(4000, 3), white_trace(4000, 4)
        b = CurrentTrace(FS, b.samples + np.roll(a.samples, 3), 0.0)
        ab = estimate_covariance(a, b, 20 / FS)
        ba = estimate_covariance(b, a, 20 / FS)
        assert np.allclose(ab.values, ba.values[::-1], rtol=1e-12, atol=1e-14)
        assert ab.at_lag(3 / FS) == pytest.approx(1.0, abs=0.1)

    def test_constant_trace_gives_zero(self):
        a = CurrentTrace(FS, np.full(5000, 7.25), 0.0)
        c = estimate_covariance(a, a, 50 / FS)
        assert np.max(np.abs(c.values)) <= 1e-12
        assert c.mean_a == 7.25

    def test_independent_traces_are_within_errors(self):
        a, b = white_trace(200000, 5), white_trace(200000, 6)
        c = estimate_covariance(a, b, 30 / FS)
        z = c.values / c.standard_errors
        assert np.mean(np.abs(z) < 3) > 0.95
        assert np.all(np.abs(z) < 5)

    def test_time_shift_invariance(self):
        a, b = white_trace(20000, 7), white_trace(20000, 8)
        shifted = [CurrentTrace(FS, t.samples, 0.123) for t in (a, b)]
        x = estimate_covariance(a, b, 40 / FS)
        y = estimate_covariance(*shifted, 40 / FS)
        assert np.array_equal(x.values, y.values)

    def test_scaling(self):
        a, b = white_trace(20000, 9), white_trace(20000, 10)
        c = estimate_covariance(a, b, 40 / FS)
        cs = estimate_covariance(CurrentTrace(FS, 3.5 * a.samples, 0.0), b, 40 / FS)
        assert np.allclose(cs.values, 3.5 * c.values, rtol=1e-12, atol=1e-15)

    def test_detrend_removes_slow_offset(self):
        n = 1 << 17
        a = white_trace(n, 11)
        drift = np.repeat(np.random.default_rng(12).normal(0, 5, n // 4096), 4096)
        slow = CurrentTrace(FS, a.samples + drift, 0.0)
        plain = correlate_traces([slow], 10 / FS, pairs=((0, 0),), unit_samples=4096, block_samples=4096)[(0, 0)]
        detr = correlate_traces([slow], 10 / FS, pairs=((0, 0),), unit_samples=4096, block_samples=4096, detrend=True)[(0, 0)]
        assert plain.values[10] > 10
        assert detr.values[10] == pytest.approx(1.0, abs=0.05)

    @settings(max_examples=20, deadline=None)
    @given(cuts=st.lists(st.integers(1, 9999), max_size=5, unique=True), lag=st.integers(0, 30))
    def test_chunking_invariance(self, cuts, lag):
        a, b = white_trace(10000, 13), white_trace(10000, 14)
        acc = CovarianceAccumulator(FS, lag, block_samples=256, unit_blocks=2)
        edges = [0] + sorted(cuts) + [10000]
        for lo, hi in zip(edges[:-1], edges[1:]):
            acc.update(a.samples[lo:hi], b.samples[lo:hi])
        got = acc.finalize()[(0, 1)]
        ref = direct_covariance(a.samples, b.samples, lag)
        assert np.allclose(got.values, ref, rtol=1e-10, atol=1e-13)


class TestCovarianceValidation:
    def test_misaligned(self):
        a = white_trace(1000, 1)
        with pytest.raises(UsageError, match="aligned"):
            estimate_covariance(a, CurrentTrace(FS, a.samples, 1e-3), 1e-8)
        with pytest.raises(UsageError, match="sample rates"):
            estimate_covariance(a, CurrentTrace(1e8, a.samples, 0.0), 1e-8)
        with pytest.raises(UsageError, match="lengths"):
            estimate_covariance(a, white_trace(999, 2), 1e-8)

    def test_max_lag_too_short(self):
        a = white_trace(100000, 1, pulse_width=TAU)
        with pytest.raises(UsageError, match="10 pulse widths"):
            estimate_covariance(a, a, 5 * TAU)

    def test_max_lag_too_long(self):
        a = white_trace(1000, 1)
        with pytest.raises(UsageError, match="half"):
            estimate_covariance(a, a, 600 / FS)

    def test_finalize_twice(self):
        acc = CovarianceAccumulator(FS, 2, block_samples=8)
        acc.update(np.ones(100), np.ones(100))
        acc.finalize()
        with pytest.raises(UsageError):
            acc.update(np.ones(4), np.ones(4))


class TestPhysicalCovariance:
    def test_campbell_autocovariance(self, paired):
        c11 = paired["c11"]
        # Gaussian self-correlation: rms width sqrt(2) tau, area 1
        expected = paired["rate"] * np.exp(-(c11.lags**2) / (4 * TAU**2)) / (2 * np.sqrt(np.pi) * TAU)
        z = (c11.values - expected) / c11.standard_errors
        assert np.all(np.abs(z) < 5)
        assert np.mean(np.abs(z) < 3) > 0.95

    def test_ratio_recovers_unit_efficiency(self, paired):
        est = estimate_eta_ratio(paired["c12"], paired["c11"])
        assert abs(est.value - 1.0) <= 3 * est.uncertainty
        assert 0 < est.uncertainty < 0.05

    def test_integral_recovers_unit_efficiency(self, paired):
        c12 = paired["c12"]
        est = estimate_eta_integral(c12, c12.mean_a)
        assert abs(est.value - 1.0) <= 3 * est.uncertainty
        assert integration_window(c12) == pytest.approx(12 * TAU)

    def test_ratio_scales_with_arm2_gain(self, paired):
        tr2 = CurrentTrace(FS, 0.4 * paired["tr2"].samples, 0.0, TAU)
        cov = correlate_traces([paired["tr1"], tr2], MAX_LAG, trim=200)
        a = estimate_eta_ratio(paired["c12"], paired["c11"])
        b = estimate_eta_ratio(cov[(0, 1)], cov[(0, 0)])
        assert b.value == pytest.approx(0.4 * a.value, rel=1e-12)

    def test_bootstrap_is_seeded(self, paired):
        a = estimate_eta_ratio(paired["c12"], paired["c11"], rng_seed=3)
        b = estimate_eta_ratio(paired["c12"], paired["c11"], rng_seed=3)
        assert a == b

    def test_zero_cross_covariance(self, paired):
        tr2 = CurrentTrace(FS, np.full(len(paired["tr1"]), 4.0), 0.0, TAU)
        c12 = correlate_traces([paired["tr1"], tr2], MAX_LAG, trim=200)[(0, 1)]
        assert estimate_eta_integral(c12, paired["c12"].mean_a).value == pytest.approx(0.0, abs=1e-12)

    def test_window_clipped(self, paired):
        with pytest.raises(UsageError, match="clipped"):
            estimate_eta_integral(paired["c12"], 1.0, window=5 * TAU)

    @pytest.mark.parametrize("mean", [0.0, -1.0])
    def test_nonpositive_mean(self, paired, mean):
        with pytest.raises(UsageError, match="mean arm-1 current"):
            estimate_eta_integral(paired["c12"], mean)

    def test_degenerate_autocovariance(self, paired):
        flat = CurrentTrace(FS, np.full(len(paired["tr1"]), 1.0), 0.0, TAU)
        cov = correlate_traces([flat, paired["tr2"]], MAX_LAG, trim=200)
        with pytest.raises(DegenerateInputError):
            estimate_eta_ratio(cov[(0, 1)], cov[(0, 0)])

    def test_csv(self, paired, tmp_path):
        write_covariance_csv(tmp_path / "c.csv", paired["c12"])
        data = np.loadtxt(tmp_path / "c.csv", delimiter=",", skiprows=1)
        assert data.shape == (paired["c12"].lags.size, 3)
        assert np.array_equal(data[:, 1], paired["c12"].values)
        write_covariance_csv(tmp_path / "e.csv", None)
        assert (tmp_path / "e.csv").read_text() == "lag_s,covariance,standard_error\n"


class TestBootstrapWeights:
    @pytest.mark.parametrize("n, block", [(10, 3), (50, 1), (7, 7), (5, 20)])
    def test_each_resample_has_n_units(self, n, block):
        w = moving_block_weights(n, block, 40, np.random.default_rng(0))
        assert w.shape == (40, n)
        assert np.all(w.sum(axis=1) == n)

    def test_uniform_on_average(self):
        w = moving_block_weights(20, 1, 4000, np.random.default_rng(1))
        assert np.allclose(w.mean(axis=0), 1.0, atol=0.1)


class TestCounts:
    def test_poisson_fano(self):
        rng = np.random.default_rng(2)
        s = stream(poisson_times(rng, 1e6, 0.0, 0.1), 0.1)
        st_ = windowed_count_statistics(s, s, 1e-5)
        f, se = st_.fano(1)
        assert abs(f - 1.0) <= 3 * se
        r, rse = st_.rate(2)
        assert abs(r - 1e6) <= 5 * rse
        cr, cse = st_.cross_rate()
        assert cr == pytest.approx(st_.variance(1)[0] / 1e-5)

    def test_too_few_windows(self):
        s = stream([1e-4], 1e-3)
        with pytest.raises(UsageError, match="100"):
            windowed_count_statistics(s, s, 1e-4)
        with pytest.raises(UsageError, match="100"):
            WindowedCounter(1e-6).result()

    def test_window_not_much_longer_than_coherence(self):
        with pytest.raises(UsageError, match="coherence"):
            WindowedCounter(1e-11, coherence_time=1e-12)

    def test_partial_span_rejected(self):
        with pytest.raises(UsageError, match="whole number"):
            WindowedCounter(1e-6).update([], [], 0.0, 2.5e-6)

    def test_streaming_counter_matches_batch(self):
        rng = np.random.default_rng(3)
        t1 = poisson_times(rng, 1e6, 0.0, 0.01)
        t2 = poisson_times(rng, 1e6, 0.0, 0.01)
        c = WindowedCounter(1e-6)
        for k in range(10):
            lo, hi = k * 1e-3, (k + 1) * 1e-3
            c.update(t1[(t1 >= lo) & (t1 < hi)], t2[(t2 >= lo) & (t2 < hi)], lo, hi)
        a = c.result()
        n1 = np.bincount(np.minimum((t1 / 1e-6).astype(int), 9999), minlength=10000)
        assert a.n_windows == 10000
        assert a.variance(1)[0] == pytest.approx(np.var(n1, ddof=1), rel=1e-12)
