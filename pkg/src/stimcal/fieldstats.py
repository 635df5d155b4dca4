"""Mean photon fluxes and integrated correlations of stimulated down-conversion.

Arm 2 carries the coherent seed (monochromatic, detuning W0) plus the
stimulated emission; arm 1 carries the conjugate, idler-like emission at
-W0, mirrored in the focal plane (x <-> -x).  Under the plane-wave pump
every correlation is point-to-point, so each region integral is a single
2-D integral over the focal plane.  Spontaneous terms without a seed
factor |alpha|^2 are dropped, and |U|^2 ~ 1 in the correlation terms.

All integrals are carried out in transverse-momentum coordinates
q = 2 pi x / (lambda f); the seed profile is a density in q so the
Jacobian cancels.
"""

from dataclasses import asdict, dataclass
from enum import Enum
from typing import Callable
import warnings

import numpy as np
from scipy.integrate import cubature
from scipy.interpolate import RegularGridInterpolator

from .errors import NumericalError, UsageError
from .optics import gain_intensity

QUAD_RTOL = 1e-6
COVERAGE_MIN = 0.999
GAUSSIAN_SUPPORT_WIDTHS = 8.0


class Arm(str, Enum):
    ARM1 = "arm1"
    ARM2 = "arm2"


@dataclass(frozen=True)
class SeedBeam:
    """Monochromatic coherent seed injected into arm 2.

    ``profile(q)`` returns |alpha(q)|^2 as a photon-flux density
    [photons s^-1 per (rad/m)^2] for momenta of shape (N, 2).  ``support``
    is the (qx_lo, qx_hi, qy_lo, qy_hi) box outside which the profile is
    zero or negligible.
    """

    center_frequency_detuning: float
    profile: Callable
    total_flux: float
    support: tuple

    def __post_init__(self):
        if not np.isfinite(self.total_flux) or self.total_flux <= 0:
            raise UsageError(f"seed total_flux must be > 0, got {self.total_flux}")
        if not np.isfinite(self.center_frequency_detuning):
            raise UsageError("seed detuning must be finite")

    @classmethod
    def gaussian(cls, total_flux, center, width, detuning=0.0):
        """Isotropic Gaussian profile in q with rms width ``width`` [rad/m]."""
        cx, cy = (float(c) for c in center)
        if width <= 0:
            raise UsageError(f"seed width must be > 0, got {width}")
        norm = total_flux / (2.0 * np.pi * width**2)

        def profile(q):
            q = np.asarray(q, dtype=float)
            r2 = (q[..., 0] - cx) ** 2 + (q[..., 1] - cy) ** 2
            return norm * np.exp(-0.5 * r2 / width**2)

        h = GAUSSIAN_SUPPORT_WIDTHS * width
        return cls(float(detuning), profile, float(total_flux), (cx - h, cx + h, cy - h, cy + h))

    @classmethod
    def tabulated(cls, qx, qy, values, detuning=0.0):
        """Bilinear interpolation of a tabulated non-negative density.

        ``values[i, j]`` is the density at ``(qx[i], qy[j])``; the total
        flux is the exact integral of the bilinear interpolant.
        """
        qx = np.asarray(qx, dtype=float)
        qy = np.asarray(qy, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.shape != (qx.size, qy.size):
            raise UsageError(f"table shape {values.shape} does not match axes ({qx.size}, {qy.size})")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise UsageError("seed profile must be finite and non-negative")
        interp = RegularGridInterpolator((qx, qy), values, bounds_error=False, fill_value=0.0)
        total = np.trapezoid(np.trapezoid(values, qy, axis=1), qx)

        def profile(q):
            q = np.asarray(q, dtype=float)
            return interp(q.reshape(-1, 2)).reshape(q.shape[:-1])

        return cls(float(detuning), profile, float(total), (qx[0], qx[-1], qy[0], qy[-1]))


@dataclass(frozen=True)
class DetectionRegion:
    """Rectangular collection area in the focal plane, extent in metres."""

    arm: Arm
    extent: tuple  # (x_lo, x_hi, y_lo, y_hi)

    def __post_init__(self):
        object.__setattr__(self, "arm", Arm(self.arm))
        x0, x1, y0, y1 = self.extent
        if not (x1 > x0 and y1 > y0):
            raise UsageError(f"degenerate detection region {self.extent}")

    @classmethod
    def centered(cls, arm, center, half_width):
        cx, cy = center
        return cls(arm, (cx - half_width, cx + half_width, cy - half_width, cy + half_width))

    def momentum_box(self, geom):
        return tuple(geom.momentum_scale * e for e in self.extent)

    def mirrored(self, arm):
        x0, x1, y0, y1 = self.extent
        return DetectionRegion(arm, (-x1, -x0, -y1, -y0))


@dataclass(frozen=True)
class FluxStatistics:
    """Theory-side photon fluxes [photons/s] and coherence time [s]."""

    mean_flux_1: float
    mean_flux_2: float
    pair_rate: float
    excess_noise_2: float
    cross_strength: float
    coherence_time: float

    def as_dict(self):
        return asdict(self)


def _intersect(box_a, box_b):
    lo = np.array([max(box_a[0], box_b[0]), max(box_a[2], box_b[2])])
    hi = np.array([min(box_a[1], box_b[1]), min(box_a[3], box_b[3])])
    if np.any(hi <= lo):
        return None
    return lo, hi


def _mirror(box):
    return (-box[1], -box[0], -box[3], -box[2])


def _integrate(fn, box, seed_box, scale):
    """Adaptive integral of ``fn`` over ``box`` restricted to ``seed_box``."""
    limits = _intersect(box, seed_box)
    if limits is None:
        return 0.0
    res = cubature(fn, limits[0], limits[1], rule="gk21", rtol=QUAD_RTOL, atol=1e-15 * scale)
    value = float(res.estimate)
    err = float(res.error)
    if res.status != "converged" or err > QUAD_RTOL * abs(value) + 1e-15 * scale:
        achieved = err / abs(value) if value else err
        raise NumericalError(
            f"quadrature did not converge: relative error {achieved:.3g} > {QUAD_RTOL:g}",
            achieved=achieved,
            requested=QUAD_RTOL,
        )
    return value


def _require_arm(region, arm):
    if region.arm is not arm:
        raise UsageError(f"expected a {arm.value} detection region, got {region.arm.value}")


def seed_coverage(geom, seed, region):
    """Fraction of the seed (arm 2) or its mirror image (arm 1) inside ``region``."""
    box = region.momentum_box(geom)
    if region.arm is Arm.ARM2:
        inside = _integrate(seed.profile, box, seed.support, seed.total_flux)
    else:
        inside = _integrate(lambda q: seed.profile(-q), box, _mirror(seed.support), seed.total_flux)
    return inside / seed.total_flux


def validate_regions(geom, seed, r1, r2, minimum=COVERAGE_MIN):
    """Raise if either region misses more than ``1 - minimum`` of the seed."""
    _require_arm(r1, Arm.ARM1)
    _require_arm(r2, Arm.ARM2)
    for region in (r1, r2):
        cov = seed_coverage(geom, seed, region)
        if cov < minimum:
            raise UsageError(
                f"{region.arm.value} region captures {cov:.6f} of the seed energy; "
                f"need >= {minimum} (enlarge the region)"
            )


def mean_flux_arm1(gain, geom, seed, region):
    """<F1> = integral over R1 of |V(x, -W0)|^2 |alpha(-x)|^2."""
    _require_arm(region, Arm.ARM1)
    om = -seed.center_frequency_detuning

    def integrand(q):
        return gain_intensity(gain, q, om) * seed.profile(-q)

    return _integrate(integrand, region.momentum_box(geom), _mirror(seed.support), seed.total_flux)


def mean_flux_arm2(gain, geom, seed, region):
    """<F2> = integral over R2 of (|V(x, W0)|^2 + 1) |alpha(x)|^2."""
    _require_arm(region, Arm.ARM2)
    om = seed.center_frequency_detuning

    def integrand(q):
        return (gain_intensity(gain, q, om) + 1.0) * seed.profile(q)

    return _integrate(integrand, region.momentum_box(geom), seed.support, seed.total_flux)


def integrated_cross_correlation(gain, geom, seed, r1, r2):
    """Lag-integrated normally-ordered cross-correlation of the two fluxes.

    The explicit term and its complex conjugate contribute equally, giving
    twice the integral of |V(x, -W0)|^2 |alpha(-x)|^2 over R1.  ``r2`` must
    contain the mirror image of every point of R1 that carries signal;
    this is guaranteed by :func:`validate_regions`.
    """
    _require_arm(r1, Arm.ARM1)
    _require_arm(r2, Arm.ARM2)
    om = -seed.center_frequency_detuning

    def integrand(q):
        return 2.0 * gain_intensity(gain, q, om) * seed.profile(-q)

    return _integrate(integrand, r1.momentum_box(geom), _mirror(seed.support), seed.total_flux)


def integrated_auto_correlation_arm2(gain, geom, seed, r2):
    """Lag-integrated normally-ordered arm-2 self term, 2 x int |V(x,W0)|^2 |alpha(x)|^2."""
    _require_arm(r2, Arm.ARM2)
    om = seed.center_frequency_detuning

    def integrand(q):
        return 2.0 * gain_intensity(gain, q, om) * seed.profile(q)

    return _integrate(integrand, r2.momentum_box(geom), seed.support, seed.total_flux)


def coherence_time(gain):
    return 1.0 / gain.frequency_bandwidth


def per_mode_photon_number(seed, resolution_time):
    """Seed photons per detector resolution time; should be >> 1."""
    return seed.total_flux * resolution_time


def warn_if_weak_seed(seed, resolution_time, threshold=1.0):
    n = per_mode_photon_number(seed, resolution_time)
    if n < threshold:
        warnings.warn(
            f"seed carries {n:.3g} photons per resolution time (< {threshold:g}); "
            "the coherent-seed approximation may not hold",
            stacklevel=2,
        )
    return n


def flux_statistics(gain, geom, seed, r1, r2, check_coverage=True):
    """Evaluate every theory-side quantity for one configuration."""
    if check_coverage:
        validate_regions(geom, seed, r1, r2)
    f1 = mean_flux_arm1(gain, geom, seed, r1)
    f2 = mean_flux_arm2(gain, geom, seed, r2)
    return FluxStatistics(
        mean_flux_1=f1,
        mean_flux_2=f2,
        pair_rate=f1,
        excess_noise_2=integrated_auto_correlation_arm2(gain, geom, seed, r2),
        cross_strength=integrated_cross_correlation(gain, geom, seed, r1, r2),
        coherence_time=coherence_time(gain),
    )
