"""Independent reference computations used only by the tests.

Nothing here imports the package's numerical code; each oracle is a
slow, direct evaluation from first principles.
"""

import mpmath as mp
import numpy as np


def gain_intensity_mp(peak_gain, delta):
    """|V|^2 = sinh^2(asinh(sqrt(G)) sin(d)/d) in arbitrary precision."""
    mp.mp.dps = 40
    s = mp.asinh(mp.sqrt(peak_gain)) * (mp.sin(delta) / delta if delta != 0 else 1)
    return float(mp.sinh(s) ** 2)


def sinc_root(target):
    """Smallest d > 0 with sin(d)/d = target (0 < target < 1)."""
    mp.mp.dps = 40
    return float(mp.findroot(lambda d: mp.sin(d) / d - target, 1.5))


def grid_flux(weight, seed_center, seed_width, total_flux, box, n=1201):
    """Dense uniform-grid Riemann sum of weight(qx, qy) * Gaussian seed over ``box``."""
    qx = np.linspace(box[0], box[1], n)
    qy = np.linspace(box[2], box[3], n)
    dx, dy = qx[1] - qx[0], qy[1] - qy[0]
    gx, gy = np.meshgrid(qx, qy, indexing="ij")
    cx, cy = seed_center
    seed = total_flux / (2 * np.pi * seed_width**2) * np.exp(-((gx - cx) ** 2 + (gy - cy) ** 2) / (2 * seed_width**2))
    return float(np.sum(weight(gx, gy) * seed) * dx * dy)


def rect_autocorrelation(tau, width):
    """Closed-form self-correlation of a unit-area rectangle: triangle of base 2w, peak 1/w."""
    tau = np.abs(np.asarray(tau, dtype=float))
    return np.where(tau < width, (width - tau) / width**2, 0.0)


def direct_covariance(a, b, max_lag):
    """Global-mean covariance <da[t] db[t+k]> averaged over the overlapping pairs."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.size
    da, db = a - a.mean(), b - b.mean()
    out = []
    for k in range(-max_lag, max_lag + 1):
        if k >= 0:
            out.append(np.mean(da[: n - k] * db[k:]))
        else:
            out.append(np.mean(da[-k:] * db[: n + k]))
    return np.array(out)


def direct_pulse_train(times, charges, shape, width, fs, n):
    """i[m] = sum q f(m / fs - t) evaluated pulse by pulse, continuous-time shape."""
    out = np.zeros(n)
    grid = np.arange(n) / fs
    for t, q in zip(times, charges):
        x = grid - t
        if shape == "rectangular":
            out += q * ((x >= 0) & (x < width)) / width
        else:
            out += q * np.exp(-0.5 * (x / width) ** 2) / (np.sqrt(2 * np.pi) * width)
    return out


def cluster_count_moments(pair_rate, background_rate, eta1, eta2, window):
    """Exact windowed-count moments for the cluster model when jitter << window.

    Returns (mean1, mean2, var1, var2, cov12).  Arm 1 gets one photon per
    epoch, arm 2 two; each photon is kept independently.
    """
    m1 = eta1 * pair_rate * window
    m2 = (2 * eta2 * pair_rate + eta2 * background_rate) * window
    var1 = m1
    # compound Poisson: E[K^2] for K ~ Binomial(2, eta2) is 2 eta2 + 2 eta2^2
    var2 = pair_rate * window * (2 * eta2 + 2 * eta2**2) + eta2 * background_rate * window
    cov = 2 * eta1 * eta2 * pair_rate * window
    return m1, m2, var1, var2, cov


def sampled_gaussian_autocorrelation(width, fs, max_lag, n_phase=8):
    """Expected C(l) / (rate q^2) of a trace built by linear sub-sample deposition.

    An event at fractional offset phi deposits (1 - phi) k[j] + phi k[j - 1]
    where k is the unit-area Gaussian sampled on the grid.  Poisson arrivals
    make the offset uniform; the phi average is done by Gauss-Legendre
    quadrature (exact here: the integrand is quadratic in phi).
    Returns values on lags -max_lag..max_lag (samples).
    """
    half = int(np.ceil(10 * width * fs))
    j = np.arange(-half, half + 1)
    k = np.exp(-0.5 * (j / (width * fs)) ** 2)
    k = k / (k.sum() / fs)
    x, w = np.polynomial.legendre.leggauss(n_phase)
    phis, weights = 0.5 * (x + 1), 0.5 * w
    out = np.zeros(2 * max_lag + 1)
    for phi, wt in zip(phis, weights):
        kp = np.concatenate([(1 - phi) * k, [0.0]]) + np.concatenate([[0.0], phi * k])
        full = np.correlate(kp, kp, mode="full") / fs
        mid = full.size // 2
        out += wt * full[mid - max_lag : mid + max_lag + 1]
    return out
