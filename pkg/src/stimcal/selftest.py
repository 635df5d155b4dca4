"""Fast oracle checks runnable from the command line (``stimcal selftest``)."""

import numpy as np

from .correlation import CovarianceAccumulator, windowed_count_statistics
from .events import PhotonEventStream, poisson_times
from .fieldstats import Arm, DetectionRegion, SeedBeam, mean_flux_arm1
from .optics import GainModel, OpticsGeometry, check_unitarity, far_field_map, gain_intensity
from .photocurrent import DetectorModel, effective_kernel_energy, pulse_kernel, synthesize_trace
from .rng import Stream, substream


def _unitarity():
    rng = substream(1, Stream.MISC, 1)
    worst = 0.0
    for g in (0.0, 0.01, 0.1):
        m = GainModel(g, 1e3, 1e12, phase=0.3, ring_momentum=4e5)
        qs = np.column_stack([4e5 + rng.normal(0, 3e3, 1000), rng.normal(0, 3e3, 1000)])
        worst = max(worst, check_unitarity(m, qs, rng.normal(0, 3e12, 1000)))
    return worst <= 1e-12, f"max violation {worst:.2e}"


def _far_field():
    geom = OpticsGeometry(5e-7, 0.1, 1e-3, 0.1)
    q = float(far_field_map(geom, 1e-3))
    return abs(q - 1.2566370614359173e5) < 1e-6, f"q = {q:.7e} rad/m"


def _quadrature():
    gain = GainModel(0.05, 2e3, 1e12, ring_momentum=0.0)
    geom = OpticsGeometry(7e-7, 0.1, 5e-3, 0.05)
    seed = SeedBeam.gaussian(1e8, (0.0, 0.0), 1.5e3)
    hw = 8 * 1.5e3 / geom.momentum_scale
    quad = mean_flux_arm1(gain, geom, seed, DetectionRegion.centered(Arm.ARM1, (0.0, 0.0), hw))
    h = 8 * 1.5e3
    g = np.linspace(-h, h, 801)
    qx, qy = np.meshgrid(g, g, indexing="ij")
    q = np.stack([qx, qy], axis=-1)
    vals = gain_intensity(gain, q, 0.0) * seed.profile(-q)
    grid = np.trapezoid(np.trapezoid(vals, g, axis=1), g)
    rel = abs(quad - grid) / grid
    return rel < 1e-4, f"adaptive vs grid relative difference {rel:.1e}"


def _campbell():
    rate, dur, fs = 1e7, 2e-3, 2e8
    t = poisson_times(substream(2, Stream.MISC, 2), rate, 0.0, dur)
    ev = PhotonEventStream(Arm.ARM1, t, np.zeros(t.size, np.uint8), dur)
    det = DetectorModel(1.0, 1e-7)
    tr = synthesize_trace(ev, det, fs)
    k = pulse_kernel(det, fs)
    core = np.asarray(tr.samples[300:-300])
    var_pred = rate * effective_kernel_energy(k)
    # mean over n samples of a pulse train: variance ~ rate / duration
    se = np.sqrt(rate / (core.size / fs))
    ok = abs(core.mean() - rate) < 4 * se and abs(core.var() / var_pred - 1) < 0.05
    return ok, f"mean {core.mean():.4e} (expect {rate:.1e}), variance ratio {core.var() / var_pred:.4f}"


def _covariance():
    rng = substream(3, Stream.MISC, 3)
    a = rng.normal(size=3000)
    b = np.roll(a, 4) + rng.normal(size=3000)
    acc = CovarianceAccumulator(1.0, 10, 2, ((0, 1),), block_samples=257)
    acc.update(a[:1234], b[:1234])
    acc.update(a[1234:], b[1234:])
    c = acc.finalize()[(0, 1)].values
    da, db = a - a.mean(), b - b.mean()
    direct = [np.mean(da[max(0, -k) : 3000 - max(0, k)] * db[max(0, k) : 3000 - max(0, -k)]) for k in range(-10, 11)]
    err = float(np.max(np.abs(c - direct)))
    return err < 1e-12, f"streaming vs direct max difference {err:.1e}"


def _fano():
    t = poisson_times(substream(4, Stream.MISC, 4), 1e6, 0.0, 1.0)
    s = PhotonEventStream(Arm.ARM1, t, np.zeros(t.size, np.uint8), 1.0)
    st = windowed_count_statistics(s, s, 1e-4)
    f, se = st.fano(1)
    return abs(f - 1) < 3 * se, f"Fano {f:.4f} +/- {se:.4f}"


CHECKS = [
    ("gain unitarity", _unitarity),
    ("far-field map", _far_field),
    ("flux quadrature", _quadrature),
    ("Campbell mean/variance", _campbell),
    ("streaming covariance", _covariance),
    ("Poisson Fano factor", _fano),
]


def run_selftest(echo=print):
    """Run every check; returns True if all pass."""
    ok_all = True
    for name, fn in CHECKS:
        ok, detail = fn()
        ok_all &= bool(ok)
        echo(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return ok_all
