"""Current covariance functions and the two quantum-efficiency estimators.

Covariances are accumulated block by block with zero-padded FFT
correlation, so there is no circular wrap and arbitrarily long traces
can be streamed through a fixed amount of memory.  Each bootstrap unit
keeps its raw lag sums together with the partial sums needed to centre
them, which lets both the point estimate (global-mean centring, unbiased
per-lag normalization) and every bootstrap replicate be rebuilt exactly
from the unit tables.
"""

from dataclasses import dataclass, field
import math

import numpy as np
import scipy.fft as sfft

from .errors import DegenerateInputError, UsageError
from .rng import Stream, substream

DEFAULT_BOOTSTRAP = 200
BOOTSTRAP_BLOCK_PULSES = 100
TARGET_UNITS = 512
MIN_WINDOWS = 100


# -- covariance accumulation -------------------------------------------------------


class _UnitTable:
    """Per-unit raw sums for one channel pair."""

    def __init__(self, n_lags):
        self.n_lags = n_lags
        self.rows_s, self.rows_a, self.rows_b, self.rows_n = [], [], [], []
        self._reset()

    def _reset(self):
        z = lambda: np.zeros(self.n_lags)  # noqa: E731
        self.s, self.a, self.b, self.n = z(), z(), z(), z()

    def add(self, s, a, b, n):
        self.s += s
        self.a += a
        self.b += b
        self.n += n

    def close_unit(self):
        self.rows_s.append(self.s)
        self.rows_a.append(self.a)
        self.rows_b.append(self.b)
        self.rows_n.append(self.n)
        self._reset()


class CovarianceAccumulator:
    """Streaming lag-domain covariance of several equally sampled channels.

    Parameters
    ----------
    sample_rate : float
    max_lag : int
        Largest lag in samples; lags -max_lag..max_lag are estimated.
    n_channels : int
    pairs : sequence of (int, int)
        Channel pairs (a, b) for which C_ab(k) = cov(a[t], b[t + k]) is kept.
    block_samples : int
        FFT block length.  Results do not depend on how input is chunked.
    unit_blocks : int
        Blocks per bootstrap unit.
    """

    def __init__(self, sample_rate, max_lag, n_channels=2, pairs=((0, 0), (0, 1)), block_samples=2**16, unit_blocks=1):
        self.sample_rate = float(sample_rate)
        self.L = int(max_lag)
        self.n_channels = int(n_channels)
        self.pairs = tuple((int(a), int(b)) for a, b in pairs)
        self.N = int(block_samples)
        if self.N < 1 or self.L < 0:
            raise UsageError("block_samples must be >= 1 and max_lag >= 0")
        self.unit_blocks = int(unit_blocks)
        self._buf = [np.zeros(0) for _ in range(self.n_channels)]
        self._buf0 = 0
        self._seen = 0
        self._next = 0
        self._ref = None
        self._tables = {p: _UnitTable(2 * self.L + 1) for p in self.pairs}
        self._tot = np.zeros(self.n_channels)
        self._unit_tot, self._unit_n = [], []
        self._cur_n = 0
        self._blocks_in_unit = 0
        self._finalized = False

    @property
    def samples_seen(self):
        return self._seen

    def update(self, *chunks):
        if self._finalized:
            raise UsageError("accumulator already finalized")
        if len(chunks) != self.n_channels:
            raise UsageError(f"expected {self.n_channels} chunks, got {len(chunks)}")
        sizes = {np.shape(c)[0] for c in chunks}
        if len(sizes) != 1:
            raise UsageError("chunks of one update must have equal length")
        for i, c in enumerate(chunks):
            self._buf[i] = np.concatenate([self._buf[i], np.asarray(c, dtype=float)])
        self._seen += sizes.pop()
        while self._seen >= self._next + self.N + self.L:
            self._process(self._next, self.N, end=None)
            self._next += self.N
            self._trim()

    def _trim(self):
        drop = self._next - self.L - self._buf0
        if drop > 0:
            self._buf = [b[drop:] for b in self._buf]
            self._buf0 += drop

    def _window(self, ch, lo, hi):
        """Samples [lo, hi) of channel ``ch``, zero outside the data, minus its reference."""
        out = np.zeros(hi - lo)
        a, b = max(lo, self._buf0), min(hi, self._seen)
        if b > a:
            out[a - lo : b - lo] = self._buf[ch][a - self._buf0 : b - self._buf0] - self._ref[ch]
        return out

    def _process(self, s0, n, end):
        L = self.L
        if self._ref is None:
            self._ref = np.array([float(np.mean(b[: self.N])) if b.size else 0.0 for b in self._buf])
        m = sfft.next_fast_len(n + 2 * L, real=True)
        a_ch = sorted({p[0] for p in self.pairs})
        b_ch = sorted({p[1] for p in self.pairs})
        seg = {c: self._window(c, s0, s0 + n) for c in set(a_ch) | set(range(self.n_channels))}
        ext = {c: self._window(c, s0 - L, s0 + n + L) for c in b_ch}
        fa = {c: sfft.rfft(seg[c], m) for c in a_ch}
        fb = {c: sfft.rfft(ext[c], m) for c in b_ch}

        k = np.arange(-L, L + 1)
        n_end = np.inf if end is None else end
        lo = np.clip(-k - s0, 0, n).astype(np.int64)
        hi = np.clip(np.minimum(n, n_end - k - s0), 0, n).astype(np.int64)
        hi = np.maximum(hi, lo)
        counts = (hi - lo).astype(float)
        prefix_a = {c: np.concatenate([[0.0], np.cumsum(seg[c])]) for c in a_ch}
        prefix_b = {c: np.concatenate([[0.0], np.cumsum(ext[c])]) for c in b_ch}
        for (ca, cb) in self.pairs:
            raw = sfft.irfft(np.conj(fa[ca]) * fb[cb], m)[: 2 * L + 1]
            pa, pb = prefix_a[ca], prefix_b[cb]
            a_k = pa[hi] - pa[lo]
            b_k = pb[hi + k + L] - pb[lo + k + L]
            self._tables[(ca, cb)].add(raw, a_k, b_k, counts)
        self._tot += np.array([seg[c].sum() for c in range(self.n_channels)])
        self._cur_n += n
        self._blocks_in_unit += 1
        if self._blocks_in_unit == self.unit_blocks:
            self._close_unit()

    def _close_unit(self):
        if self._blocks_in_unit == 0:
            return
        for t in self._tables.values():
            t.close_unit()
        self._unit_tot.append(self._tot)
        self._unit_n.append(self._cur_n)
        self._tot = np.zeros(self.n_channels)
        self._cur_n = 0
        self._blocks_in_unit = 0

    def finalize(self, pulse_widths=(None, None), detrend=False):
        """Close the stream and return ``{(a, b): CorrelationFunction}``."""
        if not self._finalized:
            if self._seen <= 2 * self.L:
                raise UsageError(f"need more than {2 * self.L} samples, got {self._seen}")
            while self._next < self._seen:
                n = min(self.N, self._seen - self._next)
                self._process(self._next, n, end=self._seen)
                self._next += n
            self._close_unit()
            self._finalized = True
        unit_tot = np.array(self._unit_tot)
        unit_n = np.array(self._unit_n, dtype=float)
        lags = np.arange(-self.L, self.L + 1) / self.sample_rate
        out = {}
        for (ca, cb), t in self._tables.items():
            widths = (pulse_widths[ca], pulse_widths[cb]) if len(pulse_widths) > max(ca, cb) else (None, None)
            out[(ca, cb)] = CorrelationFunction.from_tables(
                lags=lags,
                sample_rate=self.sample_rate,
                unit_s=np.array(t.rows_s),
                unit_a=np.array(t.rows_a),
                unit_b=np.array(t.rows_b),
                unit_n=np.array(t.rows_n),
                unit_tot_a=unit_tot[:, ca],
                unit_tot_b=unit_tot[:, cb],
                unit_samples=unit_n,
                ref_a=float(self._ref[ca]),
                ref_b=float(self._ref[cb]),
                pulse_widths=widths,
                detrend=detrend,
            )
        return out


@dataclass(frozen=True, eq=False)
class CorrelationFunction:
    """Lag-indexed covariance estimate <da(t) db(t + lag)>.

    ``values`` are centred on the global trace means (or per-unit means
    with ``detrended``) and normalized per lag by the number of
    contributing sample pairs.  ``standard_errors`` come from batch means
    over the bootstrap units.
    """

    lags: np.ndarray
    values: np.ndarray
    standard_errors: np.ndarray
    n_samples_used: int
    sample_rate: float
    mean_a: float
    mean_b: float
    pulse_widths: tuple = (None, None)
    estimator_bias_mode: str = "unbiased"
    detrended: bool = False
    tables: dict = field(default=None, repr=False)

    @classmethod
    def from_tables(cls, *, lags, sample_rate, pulse_widths=(None, None), detrend=False, **tables):
        w = np.ones(tables["unit_s"].shape[0])
        values, mean_a, mean_b = _centered(tables, w, detrend)
        se = _batch_standard_errors(tables, values, detrend)
        return cls(
            lags=lags,
            values=values,
            standard_errors=se,
            n_samples_used=int(tables["unit_samples"].sum()),
            sample_rate=sample_rate,
            mean_a=mean_a,
            mean_b=mean_b,
            pulse_widths=tuple(pulse_widths),
            detrended=detrend,
            tables=tables,
        )

    @property
    def n_units(self):
        return self.tables["unit_s"].shape[0]

    @property
    def unit_duration(self):
        return float(np.median(self.tables["unit_samples"])) / self.sample_rate

    @property
    def max_lag(self):
        return float(self.lags[-1])

    def resampled(self, weights):
        """Covariance values and means rebuilt with bootstrap unit weights."""
        return _centered(self.tables, np.asarray(weights, dtype=float), self.detrended)

    def at_lag(self, lag):
        i = int(np.argmin(np.abs(self.lags - lag)))
        return self.values[i]

    def to_csv(self, path):
        write_covariance_csv(path, self)


def _centered(t, w, detrend):
    """Centred covariance from unit tables weighted by ``w`` (one weight per unit)."""
    if detrend:
        # per-unit means remove drift slower than a unit
        ma_u = t["unit_tot_a"] / t["unit_samples"]
        mb_u = t["unit_tot_b"] / t["unit_samples"]
        num = (
            w @ t["unit_s"]
            - w @ (mb_u[:, None] * t["unit_a"])
            - w @ (ma_u[:, None] * t["unit_b"])
            + w @ ((ma_u * mb_u)[:, None] * t["unit_n"])
        )
        n = w @ t["unit_n"]
        ma = (w @ t["unit_tot_a"]) / (w @ t["unit_samples"])
        mb = (w @ t["unit_tot_b"]) / (w @ t["unit_samples"])
        return num / n, t["ref_a"] + ma, t["ref_b"] + mb
    nsamp = w @ t["unit_samples"]
    ma = (w @ t["unit_tot_a"]) / nsamp
    mb = (w @ t["unit_tot_b"]) / nsamp
    s = w @ t["unit_s"]
    a = w @ t["unit_a"]
    b = w @ t["unit_b"]
    n = w @ t["unit_n"]
    return (s - mb * a - ma * b + n * ma * mb) / n, t["ref_a"] + ma, t["ref_b"] + mb


def _batch_standard_errors(t, values, detrend):
    u = t["unit_s"].shape[0]
    if u < 2:
        return np.full(values.shape, np.nan)
    if detrend:
        ma = (t["unit_tot_a"] / t["unit_samples"])[:, None]
        mb = (t["unit_tot_b"] / t["unit_samples"])[:, None]
    else:
        ma = t["unit_tot_a"].sum() / t["unit_samples"].sum()
        mb = t["unit_tot_b"].sum() / t["unit_samples"].sum()
    n_u = t["unit_n"]
    with np.errstate(invalid="ignore", divide="ignore"):
        c_u = (t["unit_s"] - mb * t["unit_a"] - ma * t["unit_b"] + n_u * ma * mb) / n_u
        c_u = np.where(n_u > 0, c_u, values)
    dev = n_u * (c_u - values)
    return np.sqrt(u / (u - 1) * np.sum(dev**2, axis=0)) / n_u.sum(axis=0)


def write_covariance_csv(path, cf):
    """Columns: lag_s, covariance, standard_error."""
    with open(path, "w") as fh:
        fh.write("lag_s,covariance,standard_error\n")
        if cf is None:
            return
        for lag, v, e in zip(cf.lags, cf.values, cf.standard_errors):
            fh.write(f"{float(lag)!r},{float(v)!r},{float(e)!r}\n")


def _choose_blocking(n_samples, max_lag, min_unit_samples):
    block = 2**16
    while block > 4 * max(max_lag, 1) and block > n_samples // 8:
        block //= 2
    block = max(block, 2 * max_lag + 1)
    per_unit = max(math.ceil(min_unit_samples / block), math.ceil(n_samples / (TARGET_UNITS * block)), 1)
    return block, per_unit


def _check_aligned(a, b):
    if a.sample_rate != b.sample_rate:
        raise UsageError(f"traces have different sample rates: {a.sample_rate} vs {b.sample_rate}")
    if len(a) != len(b):
        raise UsageError(f"traces have different lengths: {len(a)} vs {len(b)}")
    if abs(a.start_time - b.start_time) > 0.5 / a.sample_rate:
        raise UsageError(f"traces are not aligned: start times {a.start_time} vs {b.start_time}")


def _check_max_lag(max_lag, duration, widths):
    known = [w for w in widths if w]
    if known and max_lag < 10 * max(known) * (1 - 1e-9):
        raise UsageError(f"max_lag {max_lag:g} s must be >= 10 pulse widths ({10 * max(known):g} s)")
    if max_lag >= duration / 2:
        raise UsageError(f"max_lag {max_lag:g} s must be < half the trace duration ({duration / 2:g} s)")


def correlate_traces(traces, max_lag, pairs=((0, 0), (0, 1)), trim=0, detrend=False, block_samples=None, unit_samples=None):
    """Covariance functions for several aligned traces in one pass.

    ``trim`` samples are dropped from both ends before estimation.
    """
    first = traces[0]
    for t in traces[1:]:
        _check_aligned(first, t)
    widths = tuple(t.pulse_width for t in traces)
    n = len(first) - 2 * int(trim)
    if n <= 0:
        raise UsageError("trace shorter than the edge trim")
    _check_max_lag(max_lag, n / first.sample_rate, widths)
    lag_samples = int(round(max_lag * first.sample_rate))
    min_unit = unit_samples
    if min_unit is None:
        known = [w for w in widths if w]
        min_unit = math.ceil(BOOTSTRAP_BLOCK_PULSES * max(known) * first.sample_rate) if known else 1
    block, per_unit = _choose_blocking(n, lag_samples, min_unit)
    if block_samples is not None:
        block = int(block_samples)
        per_unit = max(1, math.ceil(min_unit / block))
    acc = CovarianceAccumulator(first.sample_rate, lag_samples, len(traces), pairs, block, per_unit)
    step = 1 << 22
    lo = int(trim)
    for s in range(lo, lo + n, step):
        e = min(s + step, lo + n)
        acc.update(*(np.asarray(t.samples[s:e], dtype=float) for t in traces))
    return acc.finalize(widths, detrend)


def estimate_covariance(a, b, max_lag, trim=0, detrend=False):
    """Covariance C_ab(lag) = <da(t) db(t + lag)> of two aligned traces.

    Parameters
    ----------
    a, b : CurrentTrace
    max_lag : float
        Largest lag [s]; at least ten pulse widths and below half the
        trace duration.
    """
    _check_aligned(a, b)
    if a is b:
        return correlate_traces([a], max_lag, pairs=((0, 0),), trim=trim, detrend=detrend)[(0, 0)]
    return correlate_traces([a, b], max_lag, pairs=((0, 1),), trim=trim, detrend=detrend)[(0, 1)]


# -- estimators ---------------------------------------------------------------------


@dataclass(frozen=True)
class Estimate:
    value: float
    uncertainty: float
    n_effective: int

    def __str__(self):
        return f"{self.value:.6g} +/- {self.uncertainty:.2g}"


def moving_block_weights(n_units, block_len, n_boot, rng):
    """Unit multiplicities for ``n_boot`` moving-block bootstrap resamples."""
    block_len = max(1, min(int(block_len), n_units))
    n_blocks = math.ceil(n_units / block_len)
    starts = rng.integers(0, n_units - block_len + 1, size=(n_boot, n_blocks))
    idx = (starts[:, :, None] + np.arange(block_len)).reshape(n_boot, -1)[:, :n_units]
    w = np.zeros((n_boot, n_units))
    rows = np.repeat(np.arange(n_boot), n_units)
    np.add.at(w, (rows, idx.ravel()), 1.0)
    return w


def _bootstrap_block_len(cf, pulse_width):
    return max(1, math.ceil(BOOTSTRAP_BLOCK_PULSES * pulse_width / cf.unit_duration))


def _same_layout(c1, c2):
    if c1.n_units != c2.n_units or not np.array_equal(c1.tables["unit_samples"], c2.tables["unit_samples"]):
        raise UsageError("correlation functions must come from the same trace pair and unit layout")
    if not np.array_equal(c1.lags, c2.lags):
        raise UsageError("correlation functions must share the lag grid")


def _widest(cf, override):
    if override is not None:
        return float(override)
    known = [w for w in cf.pulse_widths if w]
    if not known:
        raise UsageError("pulse width unknown: pass pulse_width explicitly")
    return max(known)


def estimate_eta_ratio(c12, c11, pulse_width=None, n_boot=DEFAULT_BOOTSTRAP, rng_seed=0):
    """Quantum efficiency of detector 2 from the cross/auto covariance ratio.

    Half the ratio of the lag-plateau averages (|lag| <= pulse_width / 2)
    of C12 and C11.  Valid for detectors without internal gain and equal
    pulse shapes.
    """
    _same_layout(c12, c11)
    tau = _widest(c11, pulse_width)
    mask = np.abs(c12.lags) <= 0.5 * tau * (1 + 1e-9)
    num = c12.values[mask].mean()
    den = c11.values[mask].mean()
    den_se = float(np.sqrt(np.mean(c11.standard_errors[mask] ** 2)))
    if not den > 3 * den_se:
        raise DegenerateInputError(
            f"arm-1 autocovariance plateau {den:.3g} is consistent with zero (s.e. {den_se:.3g})"
        )
    value = 0.5 * num / den
    w = moving_block_weights(c12.n_units, _bootstrap_block_len(c12, tau), n_boot, substream(rng_seed, Stream.BOOTSTRAP, 1))
    reps = np.array([0.5 * c12.resampled(wi)[0][mask].mean() / c11.resampled(wi)[0][mask].mean() for wi in w])
    return Estimate(float(value), float(np.std(reps, ddof=1)), c12.n_units)


def integration_window(c12):
    known = [w for w in c12.pulse_widths if w]
    if len(known) != 2:
        raise UsageError("both pulse widths are needed to size the integration window")
    return 6.0 * sum(known)


def estimate_eta_integral(c12, mean_i1, window=None, n_boot=DEFAULT_BOOTSTRAP, rng_seed=0):
    """eta_2 <q_2> from the lag integral of C12 over twice the arm-1 mean current.

    The integral runs over |lag| <= ``window`` (default 6 (tau_p1 + tau_p2))
    with the trapezoid rule.  Neither the avalanche statistics nor the
    pulse shapes enter.
    """
    need = integration_window(c12) if all(c12.pulse_widths) else None
    if window is None:
        if need is None:
            raise UsageError("pass window explicitly when pulse widths are unknown")
        window = need
    if need is not None and window < need * (1 - 1e-9):
        raise UsageError(f"integration window clipped: {window:g} s < required {need:g} s")
    if c12.max_lag < window * (1 - 1e-9):
        raise UsageError(f"covariance lags reach {c12.max_lag:g} s but the window needs {window:g} s")
    if not mean_i1 > 0:
        raise UsageError(f"mean arm-1 current must be > 0, got {mean_i1}")
    mask = np.abs(c12.lags) <= window * (1 + 1e-9)
    lags = c12.lags[mask]
    value = np.trapezoid(c12.values[mask], lags) / (2.0 * mean_i1)
    tau = max(w for w in c12.pulse_widths if w) if any(c12.pulse_widths) else window / 12.0
    w = moving_block_weights(c12.n_units, _bootstrap_block_len(c12, tau), n_boot, substream(rng_seed, Stream.BOOTSTRAP, 2))
    reps = []
    for wi in w:
        vals, ma, _ = c12.resampled(wi)
        reps.append(np.trapezoid(vals[mask], lags) / (2.0 * mean_i1 * ma / c12.mean_a))
    return Estimate(float(value), float(np.std(reps, ddof=1)), c12.n_units)


# -- windowed photon counts --------------------------------------------------------


_ROW = ("n", "s1", "s2", "s11", "s22", "s12")


def _moments(rows):
    """(mean1, mean2, var1, var2, cov12) from summed rows; unbiased variances."""
    n, s1, s2, s11, s22, s12 = (rows[..., i] for i in range(6))
    m1, m2 = s1 / n, s2 / n
    c = n / (n - 1)
    return m1, m2, c * (s11 / n - m1**2), c * (s22 / n - m2**2), c * (s12 / n - m1 * m2)


@dataclass(frozen=True, eq=False)
class CountStatistics:
    """Moments of photon counts in consecutive windows of length ``window``.

    Standard errors use the delete-one-block jackknife over contiguous
    blocks of windows.
    """

    window: float
    rows: np.ndarray

    @property
    def n_windows(self):
        return int(self.rows[:, 0].sum())

    def _stat(self, fn):
        total = self.rows.sum(axis=0)
        value = float(fn(_moments(total)))
        b = self.rows.shape[0]
        if b < 2:
            return value, float("nan")
        reps = fn(_moments(total[None, :] - self.rows))
        se = float(np.sqrt((b - 1) / b * np.sum((reps - reps.mean()) ** 2)))
        return value, se

    def mean(self, arm):
        i = 0 if int(arm) == 1 else 1
        return self._stat(lambda m: m[i])

    def variance(self, arm):
        i = 2 if int(arm) == 1 else 3
        return self._stat(lambda m: m[i])

    def covariance(self):
        return self._stat(lambda m: m[4])

    def fano(self, arm):
        i = 0 if int(arm) == 1 else 1
        return self._stat(lambda m: m[2 + i] / m[i])

    def excess_rate(self, arm):
        """(Var(N) - <N>) / T, the normally-ordered (excess) noise rate."""
        i = 0 if int(arm) == 1 else 1
        return self._stat(lambda m: (m[2 + i] - m[i]) / self.window)

    def cross_rate(self):
        return self._stat(lambda m: m[4] / self.window)

    def rate(self, arm):
        i = 0 if int(arm) == 1 else 1
        return self._stat(lambda m: m[i] / self.window)


def _arm_index(arm):
    return 1 if str(getattr(arm, "value", arm)) in ("1", "arm1") else 2


class WindowedCounter:
    """Streaming windowed counts; each :meth:`update` span forms one jackknife block."""

    def __init__(self, window, coherence_time=None):
        if not window > 0:
            raise UsageError("count window must be > 0")
        if coherence_time is not None and window < 100 * coherence_time:
            raise UsageError(f"count window {window:g} s must be >> coherence time {coherence_time:g} s")
        self.window = float(window)
        self._rows = []

    def update(self, times1, times2, start, end):
        span = (end - start) / self.window
        n_w = int(round(span))
        if n_w < 1 or abs(span - n_w) > 1e-6 * max(1.0, span):
            raise UsageError(f"span [{start}, {end}) is not a whole number of {self.window:g} s windows")
        c = []
        for t in (times1, times2):
            idx = np.minimum(((np.asarray(t) - start) / self.window).astype(np.int64), n_w - 1)
            c.append(np.bincount(idx, minlength=n_w).astype(float))
        c1, c2 = c
        self._rows.append([n_w, c1.sum(), c2.sum(), c1 @ c1, c2 @ c2, c1 @ c2])

    def result(self):
        rows = np.array(self._rows, dtype=float)
        if rows.size == 0 or rows[:, 0].sum() < MIN_WINDOWS:
            raise UsageError(f"need at least {MIN_WINDOWS} count windows")
        return CountStatistics(self.window, rows)


def windowed_count_statistics(stream1, stream2, window, coherence_time=None, n_blocks=100):
    """Count moments of two event streams in windows of ``window`` seconds.

    Windows tile [0, duration); a trailing partial window is dropped.
    """
    duration = min(stream1.duration, stream2.duration)
    n_w = int(np.floor(duration / window + 1e-9))
    if n_w < MIN_WINDOWS:
        raise UsageError(f"only {n_w} windows of {window:g} s fit; need at least {MIN_WINDOWS}")
    counter = WindowedCounter(window, coherence_time)
    edges = np.linspace(0, n_w, min(n_blocks, n_w) + 1).round().astype(np.int64)
    for lo, hi in zip(edges[:-1], edges[1:]):
        t0, t1 = lo * window, hi * window
        sel = []
        for s in (stream1, stream2):
            i0, i1 = np.searchsorted(s.times, [t0, t1])
            sel.append(s.times[i0:i1])
        counter.update(sel[0], sel[1], t0, t1)
    return counter.result()
