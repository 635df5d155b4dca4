"""Run configuration: a YAML file whose physical keys carry unit suffixes.

Example::

    optics:
      wavelength_m: 7.02e-7
      focal_length_m: 0.1
      crystal_length_m: 0.005
      central_angle_rad: 0.05
    gain:
      peak_gain: 0.01
      frequency_bandwidth_rad_per_s: 1.0e12
    seed:
      total_flux_per_s: 1.0e8
      width_rad_per_m: 200.0
    detectors:
      arm1: {eta: 0.8, pulse_width_s: 1.0e-7}
      arm2: {eta: 0.6, pulse_width_s: 1.0e-7}
    plan:
      duration_s: 10.0
      rng_seed: 1
      sample_rate_hz: 2.0e8

Momenta are in rad/m, focal-plane positions in m.  The seed is a
Gaussian centred on the emission ring (plus an optional offset); both
detection regions are squares centred on the seed image and on its
mirror image.
"""

from dataclasses import asdict, dataclass, field, replace
import hashlib
import json
import re
import warnings

import numpy as np
import yaml

from .errors import ConfigError, UsageError
from .fieldstats import Arm, DetectionRegion, SeedBeam, validate_regions, warn_if_weak_seed
from .optics import SMALL_GAIN_LIMIT, GainModel, OpticsGeometry
from .photocurrent import MIN_SAMPLES_PER_PULSE, DetectorModel

MIN_PULSE_TO_COHERENCE = 100.0
DEFAULT_COUNT_WINDOW_S = 1e-8
DEFAULT_REGION_WIDTHS = 10.0


@dataclass(frozen=True)
class SeedConfig:
    total_flux_per_s: float
    width_rad_per_m: float
    center_offset_rad_per_m: tuple = (0.0, 0.0)
    detuning_rad_per_s: float = 0.0


@dataclass(frozen=True)
class PlanConfig:
    duration_s: float
    rng_seed: int
    sample_rate_hz: float
    segment_duration_s: float = 1e-3
    dark_rate1_per_s: float = 0.0
    dark_rate2_per_s: float = 0.0


@dataclass(frozen=True)
class AnalysisConfig:
    max_lag_s: float = None
    count_window_s: float = DEFAULT_COUNT_WINDOW_S
    bootstrap_resamples: int = 200
    bootstrap_seed: int = 0
    detrend: bool = False


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "stimcal-out"
    write_traces: bool = False
    write_events: bool = False
    plot_data: bool = True


@dataclass(frozen=True)
class RunConfig:
    optics: OpticsGeometry
    gain: GainModel
    seed: SeedConfig
    detector1: DetectorModel
    detector2: DetectorModel
    plan: PlanConfig
    region_half_width_m: float = None
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    outputs: OutputConfig = field(default_factory=OutputConfig)

    # -- derived objects ---------------------------------------------------------

    def seed_beam(self):
        ox, oy = self.seed.center_offset_rad_per_m
        center = (self.gain.ring_momentum + ox, oy)
        return SeedBeam.gaussian(self.seed.total_flux_per_s, center, self.seed.width_rad_per_m, self.seed.detuning_rad_per_s)

    def regions(self):
        scale = self.optics.momentum_scale
        ox, oy = self.seed.center_offset_rad_per_m
        cx, cy = (self.gain.ring_momentum + ox) / scale, oy / scale
        hw = self.region_half_width_m
        if hw is None:
            hw = DEFAULT_REGION_WIDTHS * self.seed.width_rad_per_m / scale
        r2 = DetectionRegion.centered(Arm.ARM2, (cx, cy), hw)
        return r2.mirrored(Arm.ARM1), r2

    def detector(self, arm):
        return self.detector1 if int(arm) == 1 else self.detector2

    @property
    def max_lag_s(self):
        if self.analysis.max_lag_s is not None:
            return self.analysis.max_lag_s
        t1, t2 = self.detector1.pulse_width, self.detector2.pulse_width
        return max(10.0 * max(t1, t2), 6.0 * (t1 + t2))

    def with_overrides(self, rng_seed=None, duration_s=None, output_dir=None):
        plan = self.plan
        if rng_seed is not None:
            plan = replace(plan, rng_seed=int(rng_seed))
        if duration_s is not None:
            plan = replace(plan, duration_s=float(duration_s))
        outputs = self.outputs if output_dir is None else replace(self.outputs, directory=str(output_dir))
        return replace(self, plan=plan, outputs=outputs)

    def to_dict(self):
        def det(d):
            return {
                "eta": d.eta,
                "pulse_width_s": d.pulse_width,
                "pulse_shape": d.pulse_shape.value,
                "charge_mean_e": d.charge_mean,
                "charge_model": d.charge_model.value,
            }

        return _plain({
            "optics": {
                "wavelength_m": self.optics.wavelength,
                "focal_length_m": self.optics.focal_length,
                "crystal_length_m": self.optics.crystal_length,
                "central_angle_rad": self.optics.central_angle,
            },
            "gain": {
                "peak_gain": self.gain.peak_gain,
                "momentum_bandwidth_rad_per_m": self.gain.momentum_bandwidth,
                "frequency_bandwidth_rad_per_s": self.gain.frequency_bandwidth,
                "phase_rad": self.gain.phase,
            },
            "seed": {**asdict(self.seed), "center_offset_rad_per_m": list(self.seed.center_offset_rad_per_m)},
            "region_half_width_m": self.region_half_width_m,
            "detectors": {"arm1": det(self.detector1), "arm2": det(self.detector2)},
            "plan": asdict(self.plan),
            "analysis": asdict(self.analysis),
            "outputs": asdict(self.outputs),
        })

    def digest(self):
        """SHA-256 of the canonical JSON form of the configuration."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _plain(obj):
    """Recursively convert numpy scalars and tuples to plain Python values."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _section(data, name, required=True):
    sec = data.get(name)
    if sec is None:
        if required:
            raise ConfigError(f"missing section '{name}'")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    return dict(sec)


def _build(cls, sec, name, keymap=None):
    keymap = keymap or {}
    kwargs = {}
    for key, value in sec.items():
        kwargs[keymap.get(key, key)] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"section '{name}': {exc}") from None
    except UsageError as exc:
        raise ConfigError(f"section '{name}': {exc}") from None


def config_from_dict(data):
    """Build and validate a :class:`RunConfig` from parsed YAML."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    known = {"optics", "gain", "seed", "detectors", "plan", "analysis", "outputs", "region_half_width_m"}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown top-level keys: {sorted(extra)}")
    optics = _build(
        OpticsGeometry,
        _section(data, "optics"),
        "optics",
        {"wavelength_m": "wavelength", "focal_length_m": "focal_length", "crystal_length_m": "crystal_length", "central_angle_rad": "central_angle"},
    )
    gsec = _section(data, "gain")
    gsec.setdefault("momentum_bandwidth_rad_per_m", optics.momentum_bandwidth_scale)
    try:
        gain = GainModel.for_geometry(
            optics,
            gsec.pop("peak_gain"),
            gsec.pop("momentum_bandwidth_rad_per_m"),
            gsec.pop("frequency_bandwidth_rad_per_s"),
            gsec.pop("phase_rad", 0.0),
        )
    except KeyError as exc:
        raise ConfigError(f"section 'gain': missing key {exc}") from None
    except UsageError as exc:
        raise ConfigError(f"section 'gain': {exc}") from None
    if gsec:
        raise ConfigError(f"section 'gain': unknown keys {sorted(gsec)}")
    ssec = _section(data, "seed")
    if "center_offset_rad_per_m" in ssec:
        ssec["center_offset_rad_per_m"] = tuple(float(v) for v in ssec["center_offset_rad_per_m"])
    seed = _build(SeedConfig, ssec, "seed")
    dets = _section(data, "detectors")
    detkeys = {"pulse_width_s": "pulse_width", "charge_mean_e": "charge_mean"}
    detectors = []
    for arm in ("arm1", "arm2"):
        if arm not in dets:
            raise ConfigError(f"section 'detectors': missing '{arm}'")
        detectors.append(_build(DetectorModel, dict(dets[arm]), f"detectors.{arm}", detkeys))
    plan = _build(PlanConfig, _section(data, "plan"), "plan")
    analysis = _build(AnalysisConfig, _section(data, "analysis", False), "analysis")
    outputs = _build(OutputConfig, _section(data, "outputs", False), "outputs")
    cfg = RunConfig(optics, gain, seed, detectors[0], detectors[1], plan, data.get("region_half_width_m"), analysis, outputs)
    validate_config(cfg)
    return cfg


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads exponents without a sign (``1.0e8``) as floats."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


def parse_config_text(text):
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"not valid YAML: {exc}") from None
    return config_from_dict(data)


def load_config(path):
    with open(path) as fh:
        try:
            data = yaml.load(fh, Loader=_Loader)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML: {exc}") from None
    return config_from_dict(data)


def validate_config(cfg, check_coverage=True):
    """Cross-field checks; raises :class:`ConfigError` naming the violated rule.

    Returns the seed photon number per detector resolution time.  A
    warning is issued when it is below one.
    """
    p = cfg.plan
    if not (np.isfinite(p.duration_s) and p.duration_s > 0):
        raise ConfigError(f"plan.duration_s must be > 0, got {p.duration_s}")
    if not (np.isfinite(p.sample_rate_hz) and p.sample_rate_hz > 0):
        raise ConfigError(f"plan.sample_rate_hz must be > 0, got {p.sample_rate_hz}")
    if not (isinstance(p.rng_seed, (int, np.integer)) and 0 <= p.rng_seed < 2**64):
        raise ConfigError(f"plan.rng_seed must be an unsigned 64-bit integer, got {p.rng_seed!r}")
    if cfg.gain.peak_gain > SMALL_GAIN_LIMIT:
        raise ConfigError(f"peak_gain {cfg.gain.peak_gain:g} exceeds the small-gain limit {SMALL_GAIN_LIMIT:g}")
    tau_coh = cfg.gain.coherence_time
    for arm, det in ((1, cfg.detector1), (2, cfg.detector2)):
        if not 0.0 <= det.eta <= 1.0:
            raise ConfigError(f"detectors.arm{arm}.eta must lie in [0, 1], got {det.eta}")
        if det.pulse_width < MIN_PULSE_TO_COHERENCE * tau_coh:
            raise ConfigError(
                f"detectors.arm{arm}.pulse_width_s {det.pulse_width:g} must be >= "
                f"{MIN_PULSE_TO_COHERENCE:g} x coherence time ({MIN_PULSE_TO_COHERENCE * tau_coh:g} s)"
            )
        if p.sample_rate_hz * det.pulse_width < MIN_SAMPLES_PER_PULSE * (1 - 1e-9):
            raise ConfigError(
                f"detectors.arm{arm}: sample_rate_hz x pulse_width_s = {p.sample_rate_hz * det.pulse_width:g}; "
                f"need >= {MIN_SAMPLES_PER_PULSE} samples per pulse width"
            )
    if p.segment_duration_s <= MIN_PULSE_TO_COHERENCE * max(cfg.detector1.pulse_width, cfg.detector2.pulse_width):
        raise ConfigError("plan.segment_duration_s must exceed 100 pulse widths")
    if not cfg.analysis.count_window_s > 100 * tau_coh:
        raise ConfigError("analysis.count_window_s must be >> coherence time (at least 100 x)")
    if not cfg.analysis.bootstrap_resamples >= 2:
        raise ConfigError("analysis.bootstrap_resamples must be >= 2")
    seed = cfg.seed_beam()
    if check_coverage:
        r1, r2 = cfg.regions()
        try:
            validate_regions(cfg.optics, seed, r1, r2)
        except UsageError as exc:
            raise ConfigError(str(exc)) from None
    with warnings.catch_warnings():
        warnings.simplefilter("default")
        return warn_if_weak_seed(seed, min(cfg.detector1.pulse_width, cfg.detector2.pulse_width))
