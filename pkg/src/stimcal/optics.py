"""Parametric gain functions and the far-field momentum/position map.

The gain functions follow the two-mode squeezing solution

    U(q, W) = cosh s(q, W),    V(q, W) = exp(i phase) sinh s(q, W)
    s(q, W) = asinh(sqrt(G)) * sinc(d(q, W))
    d(q, W) = ((|q| - q_ring) / dq)**2 + (W / dW)**2

with the unnormalized sinc, sin(d)/d.  The same (U, V) pair serves both
arms, which makes the commutator-preservation identities hold exactly
because s is even under (q, W) -> (-q, -W).
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UsageError

#: Largest peak gain accepted for calibration runs (small-gain regime).
SMALL_GAIN_LIMIT = 0.1


@dataclass(frozen=True)
class OpticsGeometry:
    """Crystal and far-field imaging geometry.

    Attributes
    ----------
    wavelength : float
        Degenerate signal wavelength [m].
    focal_length : float
        Focal length of the imaging lens [m]; the lens sits one focal
        length from the crystal.
    crystal_length : float
        Nonlinear crystal length [m].
    central_angle : float
        Emission angle with respect to the pump [rad], in (0, pi/2).
    """

    wavelength: float
    focal_length: float
    crystal_length: float
    central_angle: float

    def __post_init__(self):
        for name in ("wavelength", "focal_length", "crystal_length", "central_angle"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise DomainError(f"{name} must be finite and > 0, got {value}")
        if self.central_angle >= np.pi / 2:
            raise DomainError(f"central_angle must be < pi/2, got {self.central_angle}")

    @property
    def momentum_scale(self):
        """Factor 2 pi / (lambda f) mapping focal-plane metres to rad/m."""
        return 2.0 * np.pi / (self.wavelength * self.focal_length)

    @property
    def ring_momentum(self):
        """Transverse momentum of the central emission direction [rad/m]."""
        return 2.0 * np.pi / self.wavelength * np.sin(self.central_angle)

    @property
    def momentum_bandwidth_scale(self):
        """Order-of-magnitude angular acceptance 1 / (l tan theta) [rad/m]."""
        return 1.0 / (self.crystal_length * np.tan(self.central_angle))


@dataclass(frozen=True)
class GainModel:
    """Gain-function parameters.

    ``peak_gain`` is G = max |V|^2 at the seed frequency.  Bandwidths are
    free parameters; ``OpticsGeometry.momentum_bandwidth_scale`` gives the
    usual crystal-length estimate for ``momentum_bandwidth``.
    """

    peak_gain: float
    momentum_bandwidth: float
    frequency_bandwidth: float
    phase: float = 0.0
    ring_momentum: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.peak_gain) or self.peak_gain < 0:
            raise DomainError(f"peak_gain must be finite and >= 0, got {self.peak_gain}")
        for name in ("momentum_bandwidth", "frequency_bandwidth"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise DomainError(f"{name} must be finite and > 0, got {value}")
        if not np.isfinite(self.phase) or not np.isfinite(self.ring_momentum) or self.ring_momentum < 0:
            raise DomainError("phase and ring_momentum must be finite, ring_momentum >= 0")

    @classmethod
    def for_geometry(cls, geom, peak_gain, momentum_bandwidth, frequency_bandwidth, phase=0.0):
        """Gain model centred on the emission ring of ``geom``."""
        return cls(peak_gain, momentum_bandwidth, frequency_bandwidth, phase, geom.ring_momentum)

    @property
    def squeezing_amplitude(self):
        return float(np.arcsinh(np.sqrt(self.peak_gain)))

    @property
    def is_small_gain(self):
        return self.peak_gain <= SMALL_GAIN_LIMIT

    @property
    def coherence_time(self):
        return 1.0 / self.frequency_bandwidth


def _as_momentum(q):
    q = np.asarray(q, dtype=float)
    if q.shape[-1:] != (2,):
        raise UsageError(f"transverse momentum must have trailing dimension 2, got shape {q.shape}")
    return q


def phase_mismatch(model, q, omega):
    """Dimensionless mismatch d(q, W); even under (q, W) -> (-q, -W)."""
    q = _as_momentum(q)
    omega = np.asarray(omega, dtype=float)
    radial = (np.hypot(q[..., 0], q[..., 1]) - model.ring_momentum) / model.momentum_bandwidth
    return radial**2 + (omega / model.frequency_bandwidth) ** 2


def squeezing_parameter(model, q, omega):
    d = phase_mismatch(model, q, omega)
    # np.sinc is sin(pi x)/(pi x) with the x = 0 limit built in
    return model.squeezing_amplitude * np.sinc(d / np.pi)


def eval_gain(model, q, omega):
    """Evaluate the gain functions U and V.

    Parameters
    ----------
    model : GainModel
    q : array_like, shape (..., 2)
        Transverse momentum [rad/m].
    omega : array_like
        Frequency detuning from half the pump frequency [rad/s];
        broadcast against ``q[..., 0]``.

    Returns
    -------
    U, V : ndarray of complex
    """
    q = _as_momentum(q)
    omega = np.asarray(omega, dtype=float)
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(omega))):
        raise DomainError("gain functions need finite momentum and detuning")
    s = squeezing_parameter(model, q, omega)
    u = np.cosh(s).astype(complex)
    v = np.exp(1j * model.phase) * np.sinh(s)
    return u, v


def gain_intensity(model, q, omega):
    """|V|^2, the mean number of photons generated per seed photon."""
    return np.sinh(squeezing_parameter(model, q, omega)) ** 2


def unitarity_grid(model, n=10, momentum_span=3.0, frequency_span=3.0):
    """Regular n x n x n grid of (q, W) around the emission ring."""
    qx = model.ring_momentum + np.linspace(-momentum_span, momentum_span, n) * model.momentum_bandwidth
    qy = np.linspace(-momentum_span, momentum_span, n) * model.momentum_bandwidth
    om = np.linspace(-frequency_span, frequency_span, n) * model.frequency_bandwidth
    gx, gy, go = np.meshgrid(qx, qy, om, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel()], axis=-1), go.ravel()


def check_unitarity(model, qs, omegas):
    """Largest violation of the two commutator-preservation identities.

    Returns max over the samples of ``| |U|^2 - |V|^2 - 1 |`` and of
    ``|U1(q,W) V2(-q,-W) - U2(-q,-W) V1(q,W)|`` (both arms share U, V).
    """
    qs = _as_momentum(qs)
    omegas = np.broadcast_to(np.asarray(omegas, dtype=float), qs.shape[:-1])
    if omegas.size == 0:
        raise UsageError("unitarity check needs a non-empty grid")
    u, v = eval_gain(model, qs, omegas)
    um, vm = eval_gain(model, -qs, -omegas)
    norm = np.abs(np.abs(u) ** 2 - np.abs(v) ** 2 - 1.0)
    cross = np.abs(u * vm - um * v)
    return float(max(norm.max(), cross.max()))


def far_field_map(geom, x):
    """Focal-plane position [m] -> transverse momentum [rad/m]."""
    return geom.momentum_scale * np.asarray(x, dtype=float)


def focal_plane_position(geom, q):
    """Inverse of :func:`far_field_map`."""
    return np.asarray(q, dtype=float) / geom.momentum_scale
