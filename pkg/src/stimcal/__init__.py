"""Absolute calibration of analog photodetectors by stimulated down-conversion.

Simulates the quantum-correlated photon streams of a seeded parametric
amplifier, turns them into sampled detector currents and recovers the
quantum efficiency of the second detector from current covariances.
"""

__version__ = "0.1.0"
