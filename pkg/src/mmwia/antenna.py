"""Directional antenna pattern and beam codebooks.

The gain pattern is a two-piece model: a quadratic main lobe of width
2.6x the half-power beamwidth, and a flat side-lobe floor. Peak and
side-lobe gains are closed forms of the half-power beamwidth alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import TWO_PI, Bearing, circular_distance, normalize_angle

MAIN_LOBE_FACTOR = 2.6  # main-lobe width / half-power beamwidth


@dataclass(frozen=True)
class AntennaPattern:
    """Closed-form directional pattern parameterized by half-power beamwidth.

    phi_3db is in radians; g0 and g_sl in dBi. The side-lobe constant's
    logarithm takes the beamwidth in degrees (the reference model is
    degree-based); the sine in g0 is unit-free.
    """

    phi_3db: float
    phi_ml: float
    g0: float
    g_sl: float

    def gain(self, offset):
        """Gain in dBi at angular offset(s) from boresight, offsets in [0, pi]."""
        off = np.asarray(offset, dtype=float)
        if np.any(off < 0.0) or np.any(off > math.pi + 1e-12):
            raise ValueError("offset must lie in [0, pi]")
        main = self.g0 - 3.01 * (2.0 * off / self.phi_3db) ** 2
        out = np.where(off <= self.phi_ml / 2.0, main, self.g_sl)
        return float(out) if out.ndim == 0 else out


def make_pattern(phi_3db: float) -> AntennaPattern:
    """Build the pattern for a half-power beamwidth in radians, 0 < phi_3db < pi."""
    if not (0.0 < phi_3db < math.pi):
        raise ValueError("phi_3db must lie in (0, pi)")
    g0 = 10.0 * math.log10((1.6162 / math.sin(phi_3db / 2.0)) ** 2)
    g_sl = -0.4111 * math.log(math.degrees(phi_3db)) - 10.579
    return AntennaPattern(
        phi_3db=phi_3db,
        phi_ml=MAIN_LOBE_FACTOR * phi_3db,
        g0=g0,
        g_sl=g_sl,
    )


def gain(pattern: AntennaPattern, offset):
    return pattern.gain(offset)


@dataclass(frozen=True)
class BeamCodebook:
    """Evenly spaced beam centers sharing one pattern, plus a sweep order."""

    beam_centers: np.ndarray  # radians in [0, 2*pi), ascending from start
    pattern: AntennaPattern
    sweep_order: tuple[int, ...]

    def __post_init__(self):
        n = len(self.beam_centers)
        if sorted(self.sweep_order) != list(range(n)):
            raise ValueError("sweep_order is not a permutation of beam indices")

    @property
    def n_beams(self) -> int:
        return len(self.beam_centers)


def make_codebook(
    n_beams: int,
    phi_3db: float | None = None,
    start: float | Bearing = 0.0,
    order_seed=None,
) -> BeamCodebook:
    """Codebook of ``n_beams`` centers spaced 2*pi/n from ``start``.

    phi_3db defaults to the beam spacing (beams then overlap at their
    2.6x main-lobe width). order_seed None keeps the identity sweep
    order; otherwise the order is a seeded random permutation.
    """
    if n_beams < 1:
        raise ValueError("n_beams must be >= 1")
    start_angle = start.angle if isinstance(start, Bearing) else normalize_angle(start)
    if phi_3db is None:
        # spacing-matched beamwidth, clamped into the pattern's domain for
        # the degenerate 1- and 2-beam codebooks
        phi_3db = min(TWO_PI / n_beams, 0.95 * math.pi)
    centers = np.array(
        [normalize_angle(start_angle + k * TWO_PI / n_beams) for k in range(n_beams)]
    )
    if order_seed is None:
        order = tuple(range(n_beams))
    else:
        order = tuple(int(i) for i in np.random.default_rng(order_seed).permutation(n_beams))
    return BeamCodebook(centers, make_pattern(phi_3db), order)


def best_beam_index(cb: BeamCodebook, target: float | Bearing) -> int:
    """Index of the beam center closest to ``target``; ties go to the lower index."""
    t = target.angle if isinstance(target, Bearing) else target
    d = circular_distance(cb.beam_centers, t)
    return int(np.argmin(d))  # argmin takes the first (lowest) index on ties
