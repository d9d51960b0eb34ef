"""Azimuthal directivity patterns for sectorized antenna elements.

Two pattern families are supported:

* an ideal sector pattern with a flat main lobe of width ``theta``
  degrees and gain ``a_main``, and a flat back lobe with gain ``a_back``
  solved from the lossless identity
  ``(theta/360) * a_main + (1 - theta/360) * a_back = 1``;
* a measured pattern tabulated as (angle, linear gain) samples, linearly
  interpolated with wraparound and rescaled on load so its circular mean
  is one (same lossless convention).

Gains are power gains relative to an isotropic radiator; angles are in
degrees relative to boresight, wrapped to [-180, 180).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class PatternError(ValueError):
    """Invalid pattern parameters or table."""


def wrap_angle_deg(phi):
    """Wrap angle(s) to the interval [-180, 180)."""
    return (np.asarray(phi, dtype=float) + 180.0) % 360.0 - 180.0


@dataclass(frozen=True)
class IdealPattern:
    beamwidth_deg: float
    a_main: float
    a_back: float

    def gain_at(self, phi_deg):
        """Main-lobe gain for |phi| <= theta/2 (boundary inclusive), else back lobe."""
        phi = wrap_angle_deg(phi_deg)
        gain = np.where(np.abs(phi) <= self.beamwidth_deg / 2.0, self.a_main, self.a_back)
        return gain if gain.ndim else float(gain)


@dataclass(frozen=True)
class TabulatedPattern:
    angles_deg: np.ndarray   # strictly ascending, within [-180, 180)
    gains: np.ndarray        # normalized to circular mean 1

    def gain_at(self, phi_deg):
        phi = wrap_angle_deg(phi_deg)
        gain = np.interp(phi, self.angles_deg, self.gains, period=360.0)
        return gain if gain.ndim else float(gain)


Pattern = IdealPattern | TabulatedPattern

# Omnidirectional element: unit gain in every direction (trivially lossless).
OMNI_PATTERN = IdealPattern(beamwidth_deg=360.0, a_main=1.0, a_back=1.0)


def make_irp(theta_deg: float, a_main: float) -> IdealPattern:
    """Ideal sector pattern; back-lobe gain follows from power conservation."""
    if not 0.0 < theta_deg < 360.0:
        raise PatternError(f"beamwidth must be in (0, 360), got {theta_deg}")
    if a_main < 1.0 or a_main > 360.0 / theta_deg:
        raise PatternError(
            f"main-lobe gain {a_main} out of range [1, {360.0 / theta_deg:g}] "
            f"for beamwidth {theta_deg}")
    frac = theta_deg / 360.0
    a_back = (1.0 - frac * a_main) / (1.0 - frac)
    return IdealPattern(beamwidth_deg=theta_deg, a_main=a_main, a_back=max(a_back, 0.0))


_trapezoid = getattr(np, "trapezoid", None) or np.trapz  # numpy < 2 fallback


def circular_mean(angles_deg: np.ndarray, gains: np.ndarray) -> float:
    """Trapezoidal mean of a periodic gain table over the full circle."""
    ang = np.concatenate([angles_deg, [angles_deg[0] + 360.0]])
    g = np.concatenate([gains, [gains[0]]])
    return float(_trapezoid(g, ang) / 360.0)


def load_pattern(angles_deg, gains) -> TabulatedPattern:
    """Build a tabulated pattern, rescaling gains to circular mean one."""
    ang = np.asarray(angles_deg, dtype=float)
    g = np.asarray(gains, dtype=float)
    if ang.ndim != 1 or ang.shape != g.shape:
        raise PatternError("angles and gains must be 1-D arrays of equal length")
    if ang.size < 8:
        raise PatternError(f"need at least 8 samples, got {ang.size}")
    if np.any(np.diff(ang) <= 0):
        raise PatternError("angles must be strictly ascending")
    if ang[0] < -180.0 or ang[-1] >= 180.0:
        raise PatternError("angles must lie within [-180, 180)")
    if np.any(g < 0):
        raise PatternError("gains must be nonnegative")
    mean = circular_mean(ang, g)
    if mean <= 0:
        raise PatternError("pattern radiates no power")
    return TabulatedPattern(angles_deg=ang, gains=g / mean)


def read_pattern_file(path: str) -> TabulatedPattern:
    """Read a two-column CSV ``angle_deg,gain_linear`` with a header row."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise PatternError(f"{path}: empty pattern file")
    header = [h.strip().lower() for h in lines[0].split(",")]
    if header[:2] != ["angle_deg", "gain_linear"]:
        raise PatternError(f"{path}: expected header 'angle_deg,gain_linear', got {lines[0]!r}")
    angles, gains = [], []
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != 2:
            raise PatternError(f"{path}:{lineno}: expected two comma-separated columns")
        try:
            angles.append(float(parts[0]))
            gains.append(float(parts[1]))
        except ValueError as exc:
            raise PatternError(f"{path}:{lineno}: bad number") from exc
    return load_pattern(np.asarray(angles), np.asarray(gains))


def resolve_pattern(selector: str) -> Pattern:
    """Parse a pattern selector: ``irp:THETA:AQ``, ``file:PATH``, or ``omni``."""
    s = selector.strip()
    low = s.lower()
    if low == "omni":
        return OMNI_PATTERN
    if low.startswith("irp:"):
        parts = s.split(":")
        if len(parts) != 3:
            raise PatternError(f"bad pattern selector {selector!r}; expected irp:THETA:AQ")
        try:
            theta, a_main = float(parts[1]), float(parts[2])
        except ValueError as exc:
            raise PatternError(f"bad pattern selector {selector!r}") from exc
        return make_irp(theta, a_main)
    if low.startswith("file:"):
        return read_pattern_file(s[5:])
    raise PatternError(f"unknown pattern selector {selector!r}")
