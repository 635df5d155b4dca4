"""Calibration report: estimates, mean currents, theory fluxes and diagnostics.

Reports carry no timestamps or host data, so identical inputs give
byte-identical files.  Floats are written with ``repr`` in the key-value
form so they read back exactly.
"""

from dataclasses import dataclass, field
import math
import os

from .correlation import Estimate


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def _parse(text):
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


@dataclass(frozen=True)
class CalibrationReport:
    """Quantum-efficiency estimates of detector 2 with standard uncertainties.

    ``eta_ratio`` estimates eta_2 from the plateau ratio of C12 to C11;
    ``eta_q_integral`` estimates eta_2 <q_2> (units of e) from the lag
    integral of C12.  ``mean_currents`` are in e/s.
    """

    eta_ratio: Estimate
    eta_q_integral: Estimate
    mean_currents: tuple
    integration_window: float
    detrended: bool = False
    theory: dict = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("eta_ratio", "eta_q_integral"):
            est = getattr(self, name)
            if est is not None and not (est.uncertainty > 0 or math.isnan(est.uncertainty)):
                raise ValueError(f"{name} uncertainty must be > 0, got {est.uncertainty}")

    def items(self):
        """Flat, ordered (key, value) pairs."""
        out = []
        for name, est in (("eta_ratio", self.eta_ratio), ("eta_q_integral", self.eta_q_integral)):
            if est is None:
                out.append((f"{name}.value", "nan"))
                continue
            out += [
                (f"{name}.value", float(est.value)),
                (f"{name}.uncertainty", float(est.uncertainty)),
                (f"{name}.n_effective", int(est.n_effective)),
            ]
        out += [
            ("mean_current_1_e_per_s", float(self.mean_currents[0])),
            ("mean_current_2_e_per_s", float(self.mean_currents[1])),
            ("integration_window_s", float(self.integration_window)),
            ("detrended", bool(self.detrended)),
        ]
        if self.theory:
            out += [(f"theory.{k}", float(v)) for k, v in self.theory.items()]
        out += [(f"diagnostics.{k}", v if isinstance(v, (bool, int, str)) else float(v)) for k, v in self.diagnostics.items()]
        return out

    def to_key_value(self):
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in self.items())

    def to_text(self):
        lines = ["Calibration report", "=================="]

        def est(label, e, unit):
            if e is None:
                return f"{label:<34}unavailable"
            return f"{label:<34}{e.value:.6f} +/- {e.uncertainty:.6f}{unit}  (n_eff = {e.n_effective})"

        lines.append(est("eta_2, ratio estimator:", self.eta_ratio, ""))
        lines.append(est("eta_2 <q_2>, integral estimator:", self.eta_q_integral, " e"))
        lines.append(f"{'mean current, arm 1:':<34}{self.mean_currents[0]:.6e} e/s")
        lines.append(f"{'mean current, arm 2:':<34}{self.mean_currents[1]:.6e} e/s")
        lines.append(f"{'integration window:':<34}+/- {self.integration_window:.6e} s")
        lines.append(f"{'mean removal:':<34}{'per-unit (detrended)' if self.detrended else 'global mean'}")
        if self.theory:
            lines += ["", "Theory"]
            lines += [f"  {k:<32}{v:.9e}" for k, v in self.theory.items()]
        if self.diagnostics:
            lines += ["", "Diagnostics"]
            for k, v in self.diagnostics.items():
                shown = f"{v:.9e}" if isinstance(v, float) else _fmt(v)
                lines.append(f"  {k:<40}{shown}")
        return "\n".join(lines) + "\n"

    def write(self, directory):
        """Write ``report.txt`` and ``report.kv``; returns their paths."""
        txt = os.path.join(directory, "report.txt")
        kv = os.path.join(directory, "report.kv")
        with open(txt, "w") as fh:
            fh.write(self.to_text())
        with open(kv, "w") as fh:
            fh.write(self.to_key_value())
        return [txt, kv]


def read_key_value(path):
    """Parse a ``report.kv`` file into an ordered dict."""
    out = {}
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            k, _, v = line.rstrip("\n").partition(" = ")
            out[k] = _parse(v)
    return out
