"""Time-tagged photon streams for the two arms of a stimulated-PDC source.

The source is a Poisson cluster process.  Each cluster epoch, at rate
``pair_rate``, puts one photon on arm 1 (tag PAIR) and two on arm 2: the
down-converted partner (PAIR) and the seed photon that stimulated the
pair (SEED_BUNCHED).  The rest of the seed reaches arm 2 as an
uncorrelated Poisson stream at ``seed_rate - pair_rate``, so the arm-2
mean stays at ``seed_rate + pair_rate``.  Members of a cluster are jittered
independently by a Laplace variate of scale ``coherence_time / 2``.

Generation is split into fixed time segments, each drawing from its own
random substream, so a run is reproducible bit for bit whatever the
order or concurrency in which segments are produced.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import TraceFormatError, UsageError
from .fieldstats import Arm
from .rng import Stream, substream


class Tag(IntEnum):
    PAIR = 0
    SEED_BUNCHED = 1
    SEED_BACKGROUND = 2


ARM_CODES = {Arm.ARM1: 1, Arm.ARM2: 2}
CODE_ARMS = {v: k for k, v in ARM_CODES.items()}


def _readonly(a, dtype):
    v = np.ascontiguousarray(a, dtype=dtype).view()
    v.flags.writeable = False
    return v


@dataclass(frozen=True, eq=False)
class PhotonEventStream:
    """Sorted photon arrival times on one arm, with per-event origin tags."""

    arm: Arm
    times: np.ndarray
    tags: np.ndarray
    duration: float

    def __post_init__(self):
        object.__setattr__(self, "arm", Arm(self.arm))
        times = _readonly(self.times, np.float64)
        tags = _readonly(self.tags, np.uint8)
        if times.shape != tags.shape or times.ndim != 1:
            raise UsageError("times and tags must be 1-D arrays of equal length")
        if times.size:
            if np.any(np.diff(times) < 0):
                raise UsageError("event times must be sorted ascending")
            if times[0] < 0 or times[-1] > self.duration:
                raise UsageError(f"event times must lie in [0, {self.duration}]")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "tags", tags)

    def __len__(self):
        return self.times.size

    def count(self, tag=None):
        if tag is None:
            return len(self)
        return int(np.count_nonzero(self.tags == int(tag)))

    @property
    def rate(self):
        return len(self) / self.duration

    def __eq__(self, other):
        if not isinstance(other, PhotonEventStream):
            return NotImplemented
        return (
            self.arm is other.arm
            and self.duration == other.duration
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.tags, other.tags)
        )


@dataclass(frozen=True)
class SimulationPlan:
    """Rates, detection efficiencies and seeding for one event simulation.

    ``dark_rate1`` and ``dark_rate2`` add uncorrelated detector counts after
    thinning.  ``segment_duration`` fixes the substream layout; changing it
    changes the realization but not the statistics.
    """

    duration: float
    pair_rate: float
    seed_rate: float
    coherence_time: float
    rng_seed: int
    eta1: float = 1.0
    eta2: float = 1.0
    dark_rate1: float = 0.0
    dark_rate2: float = 0.0
    segment_duration: float = 1e-3

    def __post_init__(self):
        if not np.isfinite(self.duration) or self.duration <= 0:
            raise UsageError(f"duration must be > 0, got {self.duration}")
        for name in ("pair_rate", "seed_rate", "dark_rate1", "dark_rate2"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise UsageError(f"{name} must be finite and >= 0, got {value}")
        if self.seed_rate < self.pair_rate:
            raise UsageError(
                f"seed_rate ({self.seed_rate:g}) must be >= pair_rate ({self.pair_rate:g}); "
                "the small-gain regime guarantees this"
            )
        if not np.isfinite(self.coherence_time) or self.coherence_time <= 0:
            raise UsageError(f"coherence_time must be > 0, got {self.coherence_time}")
        for name in ("eta1", "eta2"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise UsageError(f"{name} must lie in [0, 1], got {value}")
        if self.segment_duration <= 0:
            raise UsageError("segment_duration must be > 0")
        if self.segment_duration <= 100 * self.coherence_time:
            raise UsageError("segment_duration must be much longer than the coherence time")
        int(self.rng_seed).to_bytes(8, "little")

    @property
    def background_rate(self):
        return self.seed_rate - self.pair_rate

    @property
    def n_segments(self):
        return max(1, int(np.ceil(self.duration / self.segment_duration - 1e-9)))

    def segment_bounds(self, k):
        t0 = k * self.segment_duration
        t1 = self.duration if k == self.n_segments - 1 else (k + 1) * self.segment_duration
        return t0, t1

    def eta(self, arm):
        return self.eta1 if Arm(arm) is Arm.ARM1 else self.eta2

    def dark_rate(self, arm):
        return self.dark_rate1 if Arm(arm) is Arm.ARM1 else self.dark_rate2


@dataclass(frozen=True, eq=False)
class EventWindow:
    """Finalized, time-sorted events of both arms inside ``[start, end)``."""

    index: int
    start: float
    end: float
    times1: np.ndarray
    tags1: np.ndarray
    times2: np.ndarray
    tags2: np.ndarray
    raw_count1: int = -1
    raw_count2: int = -1

    def arm(self, arm):
        if Arm(arm) is Arm.ARM1:
            return self.times1, self.tags1
        return self.times2, self.tags2


_EMPTY_T = np.empty(0, dtype=np.float64)
_EMPTY_TAG = np.empty(0, dtype=np.uint8)


def poisson_times(rng, rate, t0, t1):
    """Sorted homogeneous Poisson arrivals on [t0, t1) via spacing order statistics."""
    n = int(rng.poisson(rate * (t1 - t0))) if rate > 0 else 0
    if n == 0:
        return _EMPTY_T.copy()
    c = np.cumsum(rng.standard_exponential(n + 1))
    return t0 + (t1 - t0) * (c[:n] / c[n])


def _pair_segment(plan, k):
    """Raw cluster photons whose epochs fall in segment ``k`` (unsorted)."""
    t0, t1 = plan.segment_bounds(k)
    rng = substream(plan.rng_seed, Stream.PAIRS, k)
    epochs = poisson_times(rng, plan.pair_rate, t0, t1)
    n = epochs.size
    jit = rng.laplace(0.0, 0.5 * plan.coherence_time, size=(3, n))
    a1 = epochs + jit[0]
    a2 = np.concatenate([epochs + jit[1], epochs + jit[2]])
    tags2 = np.concatenate(
        [np.full(n, Tag.PAIR, np.uint8), np.full(n, Tag.SEED_BUNCHED, np.uint8)]
    )
    return (a1, np.full(n, Tag.PAIR, np.uint8)), (a2, tags2)


def _background_segment(plan, k):
    t0, t1 = plan.segment_bounds(k)
    rng = substream(plan.rng_seed, Stream.BACKGROUND, k)
    t = poisson_times(rng, plan.background_rate, t0, t1)
    return t, np.full(t.size, Tag.SEED_BACKGROUND, np.uint8)


class _Reorderer:
    """Restores global time order for events jittered across segment edges."""

    def __init__(self, duration):
        self.duration = duration
        self.times = _EMPTY_T
        self.tags = _EMPTY_TAG
        self.emitted_until = 0.0

    def push(self, times, tags):
        self.times = np.concatenate([self.times, times])
        self.tags = np.concatenate([self.tags, tags])

    def release(self, horizon):
        """Return sorted events with time < ``horizon`` (all if None)."""
        order = np.argsort(self.times, kind="stable")
        t = self.times[order]
        g = self.tags[order]
        cut = t.size if horizon is None else int(np.searchsorted(t, horizon, side="left"))
        out_t, out_g = t[:cut], g[:cut]
        self.times, self.tags = t[cut:], g[cut:]
        if out_t.size and out_t[0] < self.emitted_until:
            # only reachable if jitter exceeds a whole segment
            raise RuntimeError("cluster jitter exceeded the segment duration")
        keep = (out_t >= 0.0) & (out_t <= self.duration)
        if horizon is not None:
            self.emitted_until = horizon
        return out_t[keep], out_g[keep]


def _map_segments(fn, n, workers):
    if workers is None or workers <= 1:
        for k in range(n):
            yield fn(k)
        return
    batch = 4 * workers
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for lo in range(0, n, batch):
            yield from pool.map(fn, range(lo, min(n, lo + batch)))


def _raw_windows(plan, pairs=True, background=True, workers=None):
    """Yield (k, t_start, t_end, arm1, arm2) raw windows in time order."""

    def produce(k):
        if pairs:
            (t1, g1), (t2, g2) = _pair_segment(plan, k)
        else:
            t1, g1, t2, g2 = _EMPTY_T, _EMPTY_TAG, _EMPTY_T, _EMPTY_TAG
        if background:
            tb, gb = _background_segment(plan, k)
            t2 = np.concatenate([t2, tb])
            g2 = np.concatenate([g2, gb])
        return t1, g1, t2, g2

    r1 = _Reorderer(plan.duration)
    r2 = _Reorderer(plan.duration)
    n = plan.n_segments
    for k, (t1, g1, t2, g2) in enumerate(_map_segments(produce, n, workers)):
        r1.push(t1, g1)
        r2.push(t2, g2)
        if k >= 1:
            start, _ = plan.segment_bounds(k - 1)
            horizon, _ = plan.segment_bounds(k)
            yield k - 1, start, horizon, r1.release(horizon), r2.release(horizon)
    start, _ = plan.segment_bounds(n - 1)
    yield n - 1, start, plan.duration, r1.release(None), r2.release(None)


def _thin(times, tags, eta, rng):
    if eta >= 1.0:
        return times, tags
    keep = rng.random(times.size) < eta
    return times[keep], tags[keep]


def iter_event_windows(plan, detected=True, workers=None):
    """Stream the simulation as consecutive :class:`EventWindow` objects.

    With ``detected=True`` each arm is thinned by its quantum efficiency
    and dark counts are merged in; otherwise the raw source photons are
    returned.  Window ``k`` covers the nominal time span of segment ``k``.
    """
    for k, start, end, (t1, g1), (t2, g2) in _raw_windows(plan, workers=workers):
        raw1, raw2 = t1.size, t2.size
        if detected:
            t1, g1 = _thin(t1, g1, plan.eta1, substream(plan.rng_seed, Stream.THIN, 1, k))
            t2, g2 = _thin(t2, g2, plan.eta2, substream(plan.rng_seed, Stream.THIN, 2, k))
            t1, g1 = _add_dark(t1, g1, plan.dark_rate1, start, end, substream(plan.rng_seed, Stream.DARK, 1, k))
            t2, g2 = _add_dark(t2, g2, plan.dark_rate2, start, end, substream(plan.rng_seed, Stream.DARK, 2, k))
        yield EventWindow(k, start, end, t1, g1, t2, g2, raw1, raw2)


def _add_dark(times, tags, rate, t0, t1, rng):
    if rate <= 0:
        return times, tags
    d = poisson_times(rng, rate, t0, t1)
    t = np.concatenate([times, d])
    g = np.concatenate([tags, np.full(d.size, Tag.SEED_BACKGROUND, np.uint8)])
    order = np.argsort(t, kind="stable")
    return t[order], g[order]


def _collect(plan, windows):
    parts = {Arm.ARM1: ([], []), Arm.ARM2: ([], [])}
    for w in windows:
        for arm in (Arm.ARM1, Arm.ARM2):
            t, g = w.arm(arm) if isinstance(w, EventWindow) else w[3 if arm is Arm.ARM1 else 4]
            parts[arm][0].append(t)
            parts[arm][1].append(g)
    out = []
    for arm in (Arm.ARM1, Arm.ARM2):
        ts, gs = parts[arm]
        t = np.concatenate(ts) if ts else _EMPTY_T
        g = np.concatenate(gs) if gs else _EMPTY_TAG
        out.append(PhotonEventStream(arm, t, g, plan.duration))
    return tuple(out)


def generate_pair_events(plan, workers=None):
    """Cluster photons only: (arm-1 stream, arm-2 stream), before detection."""
    return _collect(plan, _raw_windows(plan, background=False, workers=workers))


def generate_seed_background(plan, workers=None):
    """Uncorrelated seed photons on arm 2 at ``seed_rate - pair_rate``."""
    return _collect(plan, _raw_windows(plan, pairs=False, workers=workers))[1]


def simulate_detected_events(plan, workers=None):
    """Whole-run detected streams; use :func:`iter_event_windows` for long runs."""
    return _collect(plan, iter_event_windows(plan, detected=True, workers=workers))


def thin_detection(stream, eta, rng):
    """Keep each event independently with probability ``eta``.

    ``rng`` is a ``numpy.random.Generator`` or an integer seed.
    """
    if not 0.0 <= eta <= 1.0:
        raise UsageError(f"eta must lie in [0, 1], got {eta}")
    if not isinstance(rng, np.random.Generator):
        rng = substream(rng, Stream.THIN, ARM_CODES[stream.arm])
    keep = rng.random(len(stream)) < eta
    return PhotonEventStream(stream.arm, stream.times[keep], stream.tags[keep], stream.duration)


def merge_streams(*streams):
    """Time-ordered union of streams from the same arm."""
    if not streams:
        raise UsageError("nothing to merge")
    arm = streams[0].arm
    if any(s.arm is not arm for s in streams):
        raise UsageError("can only merge streams of the same arm")
    t = np.concatenate([s.times for s in streams])
    g = np.concatenate([s.tags for s in streams])
    order = np.argsort(t, kind="stable")
    return PhotonEventStream(arm, t[order], g[order], max(s.duration for s in streams))


# -- binary event files -------------------------------------------------------

EVENT_MAGIC = b"STIMCALEVNT\x00"
EVENT_VERSION = 1
EVENT_HEADER = np.dtype([("magic", "S12"), ("version", "<u4")])
EVENT_RECORD = np.dtype([("time", "<f8"), ("arm", "u1"), ("tag", "u1")])


class EventWriter:
    """Appends time-ordered event records to a binary file."""

    def __init__(self, path):
        self._fh = open(path, "wb")
        header = np.array([(EVENT_MAGIC, EVENT_VERSION)], dtype=EVENT_HEADER)
        self._fh.write(header.tobytes())
        self.count = 0

    def write(self, *streams_or_window):
        recs = []
        for item in streams_or_window:
            if isinstance(item, EventWindow):
                pairs = [(Arm.ARM1, item.times1, item.tags1), (Arm.ARM2, item.times2, item.tags2)]
            else:
                pairs = [(item.arm, item.times, item.tags)]
            for arm, t, g in pairs:
                r = np.empty(t.size, dtype=EVENT_RECORD)
                r["time"], r["arm"], r["tag"] = t, ARM_CODES[arm], g
                recs.append(r)
        if not recs:
            return
        r = np.concatenate(recs)
        r = r[np.argsort(r["time"], kind="stable")]
        self._fh.write(r.tobytes())
        self.count += r.size

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_events(path, *streams):
    with EventWriter(path) as w:
        w.write(*streams)


def read_events(path, duration=None):
    """Read an event file into ``{Arm: PhotonEventStream}``."""
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size < EVENT_HEADER.itemsize:
        raise TraceFormatError(f"file too short for a {EVENT_HEADER.itemsize}-byte header", offset=raw.size)
    header = raw[: EVENT_HEADER.itemsize].view(EVENT_HEADER)[0]
    if header["magic"] != EVENT_MAGIC.rstrip(b"\x00"):
        raise TraceFormatError("bad event-file magic", offset=0)
    if header["version"] != EVENT_VERSION:
        raise TraceFormatError(f"unsupported event-file version {header['version']}", offset=12)
    body = raw[EVENT_HEADER.itemsize:]
    if body.size % EVENT_RECORD.itemsize:
        whole = body.size // EVENT_RECORD.itemsize
        raise TraceFormatError(
            f"truncated record {whole}", offset=EVENT_HEADER.itemsize + whole * EVENT_RECORD.itemsize
        )
    recs = body.view(EVENT_RECORD)
    bad = ~np.isin(recs["arm"], list(CODE_ARMS))
    if bad.any():
        i = int(np.argmax(bad))
        raise TraceFormatError(f"invalid arm code {recs['arm'][i]}", offset=EVENT_HEADER.itemsize + i * EVENT_RECORD.itemsize + 8)
    if duration is None:
        duration = float(recs["time"].max()) if recs.size else 0.0
    out = {}
    for code, arm in CODE_ARMS.items():
        sel = recs[recs["arm"] == code]
        out[arm] = PhotonEventStream(arm, sel["time"].copy(), sel["tag"].copy(), duration)
    return out
