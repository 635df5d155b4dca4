"""Analog photocurrent as a random pulse train i(t) = sum_n q_n f(t - t_n).

Currents are in elementary charges per second (multiply by
``ELEMENTARY_CHARGE`` for amperes), charges q_n in units of e.

Each event is deposited with sub-sample timing: its charge is split
linearly between the two neighbouring grid points and the resulting
impulse train is convolved with the sampled pulse.  This is the same
trace as adding a copy of the pulse linearly interpolated at the event's
fractional offset, computed by overlap-add FFT convolution.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.signal import oaconvolve

from .errors import TraceFormatError, UsageError
from .rng import Stream, substream

ELEMENTARY_CHARGE = 1.602176634e-19  # C
MIN_SAMPLES_PER_PULSE = 20
GAUSSIAN_TRUNCATION = 6.0
EXPONENTIAL_TRUNCATION = 12.0


class PulseShape(str, Enum):
    GAUSSIAN = "gaussian"
    RECTANGULAR = "rectangular"
    ONE_SIDED_EXPONENTIAL = "one_sided_exponential"


class ChargeModel(str, Enum):
    DETERMINISTIC = "deterministic"
    EXPONENTIAL_GAIN = "exponential_gain"


@dataclass(frozen=True)
class DetectorModel:
    """Quantum efficiency, pulse response and per-event charge statistics.

    ``pulse_width`` is the rms width for the Gaussian pulse, the full width
    of the rectangular pulse and the decay time of the one-sided
    exponential.
    """

    eta: float
    pulse_width: float
    pulse_shape: PulseShape = PulseShape.GAUSSIAN
    charge_mean: float = 1.0
    charge_model: ChargeModel = ChargeModel.DETERMINISTIC

    def __post_init__(self):
        object.__setattr__(self, "pulse_shape", PulseShape(self.pulse_shape))
        object.__setattr__(self, "charge_model", ChargeModel(self.charge_model))
        if not 0.0 <= self.eta <= 1.0:
            raise UsageError(f"eta must lie in [0, 1], got {self.eta}")
        if not np.isfinite(self.pulse_width) or self.pulse_width <= 0:
            raise UsageError(f"pulse_width must be > 0, got {self.pulse_width}")
        if not np.isfinite(self.charge_mean) or self.charge_mean <= 0:
            raise UsageError(f"charge_mean must be > 0, got {self.charge_mean}")

    @property
    def charge_second_moment(self):
        if self.charge_model is ChargeModel.DETERMINISTIC:
            return self.charge_mean**2
        return 2.0 * self.charge_mean**2

    @property
    def support_duration(self):
        """Time span outside which the pulse is zero (after truncation)."""
        if self.pulse_shape is PulseShape.GAUSSIAN:
            return 2 * GAUSSIAN_TRUNCATION * self.pulse_width
        if self.pulse_shape is PulseShape.RECTANGULAR:
            return self.pulse_width
        return EXPONENTIAL_TRUNCATION * self.pulse_width

    def draw_charges(self, n, rng):
        if self.charge_model is ChargeModel.DETERMINISTIC:
            return np.full(n, self.charge_mean)
        return rng.exponential(self.charge_mean, size=n)


@dataclass(frozen=True, eq=False)
class PulseKernel:
    """Sampled unit-area pulse; ``values[j]`` is f((start + j) / sample_rate)."""

    values: np.ndarray
    start: int
    sample_rate: float

    @property
    def dt(self):
        return 1.0 / self.sample_rate

    @property
    def stop(self):
        return self.start + self.values.size

    def area(self):
        return float(self.values.sum() * self.dt)


def pulse_kernel(model, sample_rate):
    """Sample the detector pulse and renormalize it to unit area."""
    spp = model.pulse_width * sample_rate
    if spp < MIN_SAMPLES_PER_PULSE * (1 - 1e-9):
        raise UsageError(
            f"pulse undersampled: sample_rate * pulse_width = {spp:.3g}, "
            f"need >= {MIN_SAMPLES_PER_PULSE} samples per pulse width"
        )
    dt = 1.0 / sample_rate
    if model.pulse_shape is PulseShape.RECTANGULAR:
        n = int(round(spp))
        values = np.ones(n)
        start = 0
    elif model.pulse_shape is PulseShape.GAUSSIAN:
        half = int(np.ceil(GAUSSIAN_TRUNCATION * spp))
        j = np.arange(-half, half + 1)
        values = np.exp(-0.5 * (j / spp) ** 2)
        start = -half
    else:
        n = int(np.ceil(EXPONENTIAL_TRUNCATION * spp)) + 1
        values = np.exp(-np.arange(n) / spp)
        start = 0
    values = values / (values.sum() * dt)
    values.flags.writeable = False
    return PulseKernel(values, start, float(sample_rate))


def kernel_autocorrelation(k1, k2=None):
    """Discrete F12(m dt) = dt sum_j f1(j dt) f2((j + m) dt) on the lag grid.

    Returns ``(lags_in_samples, values)`` covering the full support.
    """
    k2 = k1 if k2 is None else k2
    if k1.sample_rate != k2.sample_rate:
        raise UsageError("kernels sampled at different rates")
    full = np.correlate(k2.values, k1.values, mode="full") * k1.dt
    # full[i] pairs k1[j] with k2[j + i - (n1 - 1)]
    m0 = -(k1.values.size - 1) + (k2.start - k1.start)
    lags = m0 + np.arange(full.size)
    return lags, full


def effective_kernel_correlation(k1, k2=None):
    """Expected pulse correlation seen by the sampled trace.

    Linear sub-sample deposition with a uniformly distributed fractional
    offset phi turns the kernel into (1 - phi) k[j] + phi k[j - 1].  When
    both traces share phi (simultaneous events) the expected correlation is
    2/3 F(m) + 1/6 (F(m - 1) + F(m + 1)).
    """
    lags, f = kernel_autocorrelation(k1, k2)
    pad = np.concatenate([[0.0], f, [0.0]])
    eff = (2.0 / 3.0) * pad[1:-1] + (1.0 / 6.0) * (pad[:-2] + pad[2:])
    lags = np.concatenate([[lags[0] - 1], lags, [lags[-1] + 1]])
    eff = np.concatenate([[f[0] / 6.0], eff, [f[-1] / 6.0]])
    return lags, eff


def effective_kernel_energy(kernel):
    """E_phi sum_j k_phi[j]^2 dt, the sampled counterpart of int f^2."""
    lags, eff = effective_kernel_correlation(kernel)
    return float(eff[lags == 0][0])


@dataclass(frozen=True, eq=False)
class CurrentTrace:
    """Uniformly sampled current [e/s]; sample i is at start_time + i / sample_rate."""

    sample_rate: float
    samples: np.ndarray
    start_time: float = 0.0
    pulse_width: float = None

    def __post_init__(self):
        if not np.isfinite(self.sample_rate) or self.sample_rate <= 0:
            raise UsageError(f"sample_rate must be > 0, got {self.sample_rate}")
        s = np.asarray(self.samples)
        if s.ndim != 1:
            raise UsageError("trace samples must be 1-D")
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self):
        return self.samples.size / self.sample_rate

    @property
    def dt(self):
        return 1.0 / self.sample_rate

    def times(self):
        return self.start_time + np.arange(self.samples.size) / self.sample_rate

    def __eq__(self, other):
        if not isinstance(other, CurrentTrace):
            return NotImplemented
        return (
            self.sample_rate == other.sample_rate
            and self.start_time == other.start_time
            and np.array_equal(self.samples, other.samples)
        )


class PulseTrainSynthesizer:
    """Streaming overlap-add synthesis of one current trace.

    Feed time-ordered batches of events with :meth:`push`; each call returns
    the samples that no later event can still modify.  :meth:`finish`
    returns the remainder.  Events outside the trace span contribute only
    the part of their pulse that falls inside it.
    """

    def __init__(self, kernel, n_samples, start_time=0.0):
        self.kernel = kernel
        self.n_samples = int(n_samples)
        self.start_time = float(start_time)
        self._emitted = 0
        self._acc = np.zeros(0)
        self._last_bin = None

    def _bins(self, times, charges):
        u = (np.asarray(times, dtype=float) - self.start_time) * self.kernel.sample_rate
        m = np.floor(u)
        phi = u - m
        m = m.astype(np.int64)
        lo = int(m.min())
        idx = m - lo
        w_hi = charges * phi
        size = int(idx.max()) + 2
        bins = np.bincount(idx, weights=charges - w_hi, minlength=size)
        bins[1:] += np.bincount(idx, weights=w_hi, minlength=size - 1)[: size - 1]
        return lo, bins

    def _deposit(self, lo, bins):
        k = self.kernel
        contrib = oaconvolve(bins, k.values) if bins.size * k.values.size > 4096 else np.convolve(bins, k.values)
        first = lo + k.start
        last = first + contrib.size
        a = max(first, self._emitted)
        b = min(last, self.n_samples)
        if b <= a:
            return
        need = b - self._emitted
        if need > self._acc.size:
            self._acc = np.concatenate([self._acc, np.zeros(need - self._acc.size)])
        self._acc[a - self._emitted : b - self._emitted] += contrib[a - first : b - first]

    def push(self, times, charges, until=None):
        """Deposit events; finalize samples no event at time >= ``until`` can reach."""
        times = np.asarray(times, dtype=float)
        if times.size:
            self._deposit(*self._bins(times, np.asarray(charges, dtype=float)))
        if until is None:
            return np.empty(0)
        m_until = int(np.floor((until - self.start_time) * self.kernel.sample_rate))
        return self._release(min(m_until + self.kernel.start, self.n_samples))

    def _release(self, upto):
        n = upto - self._emitted
        if n <= 0:
            return np.empty(0)
        if n > self._acc.size:
            self._acc = np.concatenate([self._acc, np.zeros(n - self._acc.size)])
        out = self._acc[:n].copy()
        self._acc = self._acc[n:]
        self._emitted = upto
        return out

    def finish(self):
        return self._release(self.n_samples)


def n_samples_for(duration, sample_rate):
    return int(round(duration * sample_rate))


def synthesize_trace(events, model, sample_rate, rng_seed=0, charges=None, duration=None, start_time=0.0):
    """Sampled current of ``events`` seen through detector ``model``.

    ``charges`` fixes the per-event charges; otherwise they are drawn from
    the model with a substream of ``rng_seed``.  Quantum efficiency is not
    applied here: ``events`` are already detected events.
    """
    duration = events.duration if duration is None else duration
    if events.duration > duration * (1 + 1e-12):
        raise UsageError(f"event stream spans {events.duration} s but the trace spans {duration} s")
    kernel = pulse_kernel(model, sample_rate)
    if charges is None:
        charges = model.draw_charges(len(events), substream(rng_seed, Stream.CHARGE, 0))
    charges = np.asarray(charges, dtype=float)
    if charges.shape != events.times.shape:
        raise UsageError("need exactly one charge per event")
    synth = PulseTrainSynthesizer(kernel, n_samples_for(duration, sample_rate), start_time)
    synth.push(events.times, charges)
    samples = synth.finish()
    return CurrentTrace(float(sample_rate), samples, start_time, model.pulse_width)


def scatter_add_reference(times, charges, kernel, n_samples, start_time=0.0):
    """Direct per-event deposition of a linearly interpolated pulse (slow)."""
    out = np.zeros(n_samples)
    fs = kernel.sample_rate
    for t, q in zip(times, charges):
        u = (t - start_time) * fs
        m = int(np.floor(u))
        phi = u - m
        shifted = np.concatenate([(1 - phi) * kernel.values, [0.0]])
        shifted[1:] += phi * kernel.values
        first = m + kernel.start
        lo, hi = max(first, 0), min(first + shifted.size, n_samples)
        if hi > lo:
            out[lo:hi] += q * shifted[lo - first : hi - first]
    return out


# -- trace files ---------------------------------------------------------------

TRACE_MAGIC = b"STIMCALTRACE"
TRACE_VERSION = 1
TRACE_HEADER = np.dtype(
    [("magic", "S12"), ("version", "<u4"), ("sample_rate", "<f8"), ("start_time", "<f8"), ("count", "<u8")]
)


class TraceWriter:
    """Streams samples to a binary trace file; the count is patched on close."""

    def __init__(self, path, sample_rate, start_time=0.0):
        self.path = path
        self.sample_rate = float(sample_rate)
        self.start_time = float(start_time)
        self.count = 0
        self._fh = open(path, "wb")
        self._fh.write(self._header().tobytes())

    def _header(self):
        return np.array(
            [(TRACE_MAGIC, TRACE_VERSION, self.sample_rate, self.start_time, self.count)], dtype=TRACE_HEADER
        )

    def write(self, samples):
        s = np.ascontiguousarray(samples, dtype="<f8")
        self._fh.write(s.tobytes())
        self.count += s.size

    def close(self):
        self._fh.seek(0)
        self._fh.write(self._header().tobytes())
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_trace(path, trace):
    with TraceWriter(path, trace.sample_rate, trace.start_time) as w:
        w.write(trace.samples)


def read_trace(path, pulse_width=None, mmap=True):
    """Read a binary trace file; large files are memory-mapped."""
    with open(path, "rb") as fh:
        head = fh.read(TRACE_HEADER.itemsize)
        fh.seek(0, 2)
        size = fh.tell()
    if len(head) < TRACE_HEADER.itemsize:
        raise TraceFormatError(f"file too short for the {TRACE_HEADER.itemsize}-byte header", offset=len(head))
    h = np.frombuffer(head, dtype=TRACE_HEADER)[0]
    if h["magic"] != TRACE_MAGIC:
        raise TraceFormatError("bad trace-file magic", offset=0)
    if h["version"] != TRACE_VERSION:
        raise TraceFormatError(f"unsupported trace-file version {h['version']}", offset=12)
    count = int(h["count"])
    expected = TRACE_HEADER.itemsize + 8 * count
    if size < expected:
        whole = (size - TRACE_HEADER.itemsize) // 8
        raise TraceFormatError(
            f"truncated trace: header announces {count} samples, file holds {whole}",
            offset=TRACE_HEADER.itemsize + 8 * whole,
        )
    if size > expected:
        raise TraceFormatError(f"{size - expected} trailing bytes after {count} samples", offset=expected)
    if mmap and count:
        samples = np.memmap(path, dtype="<f8", mode="r", offset=TRACE_HEADER.itemsize, shape=(count,))
    else:
        samples = np.fromfile(path, dtype="<f8", offset=TRACE_HEADER.itemsize, count=count)
    return CurrentTrace(float(h["sample_rate"]), samples, float(h["start_time"]), pulse_width)


def write_trace_csv(path, trace):
    """Two-column CSV (time, current) for interoperability."""
    data = np.column_stack([trace.times(), trace.samples])
    np.savetxt(path, data, delimiter=",", header="time_s,current_e_per_s", comments="", fmt="%.17g")


def read_trace_csv(path, pulse_width=None):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] < 2:
        raise TraceFormatError("CSV trace needs at least two samples")
    dt = np.diff(data[:, 0])
    return CurrentTrace(float(1.0 / np.mean(dt)), data[:, 1].copy(), float(data[0, 0]), pulse_width)
