"""Large-scale couplings, pilot reuse sets, and channel-estimation gains.

The analytical pipeline needs only the combined directivity-weighted
large-scale gain per (array, user) pair,

    c = a(azimuth offset from boresight) * beta,

where beta comes from COST231-Hata path loss plus log-normal shadowing.
Shadowing is drawn once per (site, user) and shared by co-sited arrays,
since those arrays hang off the same mast.

The MMSE channel-estimate power at an array for a user whose cell shares
the pilot book of class sigma is

    ag = rho_ul * tau_p * c^2 / (1 + rho_ul * tau_p * sum_{cells in class} c),

which is strictly below c wherever c > 0: pilot contamination and noise
make the estimate weaker than the true channel. Pilots within a cell are
orthonormal and indexed by the user index; cells of the same reuse class
replicate the book, cells of different classes use orthogonal books.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .antenna import Pattern
from .geometry import Layout, min_image_displacements
from .scenario import LinkBudget, PathlossParams, Scenario

MIN_DISTANCE_M = 1.0


def cost231_hata_db(distance_m, freq_hz: float, params: PathlossParams):
    """COST231-Hata urban path loss in dB; distances clamped at 1 m."""
    d_km = np.maximum(np.asarray(distance_m, dtype=float), MIN_DISTANCE_M) / 1000.0
    f_mhz = freq_hz / 1e6
    h_b = params.bs_height_m
    h_r = params.ue_height_m
    a_hr = 3.2 * (math.log10(11.75 * h_r)) ** 2 - 4.97
    return (46.3 + 33.9 * math.log10(f_mhz) - 13.82 * math.log10(h_b) - a_hr
            + (44.9 - 6.55 * math.log10(h_b)) * np.log10(d_km)
            + params.metro_correction_db)


def large_scale_coupling(layout: Layout, pattern: Pattern, drop: np.ndarray,
                         shadow_seed: int, s: Scenario) -> np.ndarray:
    """Combined gains c[a, l, k] for every array/user pair.

    Distance and azimuth both come from the nearest wrapped image.
    Deterministic given the shadowing seed.
    """
    L, K = drop.shape[0], drop.shape[1]
    users = drop.reshape(L * K, 2)
    disp = min_image_displacements(layout.positions, users, layout)   # (A, U, 2)
    dist = np.linalg.norm(disp, axis=-1)
    if np.any(dist < MIN_DISTANCE_M):
        warnings.warn(f"{int(np.sum(dist < MIN_DISTANCE_M))} array-user distances "
                      f"below {MIN_DISTANCE_M} m were clamped")

    pl_db = cost231_hata_db(dist, s.carrier_frequency_hz, s.pathloss)
    rng = np.random.Generator(np.random.PCG64(shadow_seed))
    shadow_db = s.shadow_sigma_db * rng.standard_normal((layout.site_positions.shape[0], L * K))
    beta = 10.0 ** ((-pl_db + shadow_db[layout.site_of, :]) / 10.0)

    azimuth = np.degrees(np.arctan2(disp[..., 1], disp[..., 0]))
    offset = azimuth - layout.boresight_deg[:, None]
    gain = np.where(layout.directional[:, None], pattern.gain_at(offset), 1.0)
    return (gain * beta).reshape(layout.num_arrays, L, K)


@dataclass(frozen=True)
class ReuseMap:
    """Partition of cells into pilot-reuse classes."""

    xi: int
    class_of: np.ndarray                 # (L,) class index per cell
    classes: tuple[tuple[int, ...], ...]  # cells per class

    def cells_sharing(self, l: int) -> tuple[int, ...]:
        return self.classes[int(self.class_of[l])]


def reuse_sets(xi: int, layout: Layout) -> ReuseMap:
    """Pilot-sharing cell sets for reuse factor 1 or 3.

    Reuse 3 uses the standard planning coloring (q - r) mod 3 on the
    axial cell coordinates, which is a proper 3-coloring of the
    unwrapped layout (class sizes {7, 6, 6} for 19 cells). No wrapped
    cluster of 7 or 19 cells admits a coloring that is also proper
    across the wrap boundary (the quotient graph needs more than three
    colors), so a few co-class pairs are unavoidably wrap-adjacent;
    interference from them is modeled exactly either way.
    """
    L = layout.num_cells
    if xi == 1:
        class_of = np.zeros(L, dtype=int)
        classes = (tuple(range(L)),)
    elif xi == 3:
        class_of = (layout.cell_axial[:, 0] - layout.cell_axial[:, 1]) % 3
        classes = tuple(tuple(np.nonzero(class_of == c)[0].tolist()) for c in range(3))
    else:
        raise ValueError(f"pilot reuse must be 1 or 3, got {xi}")
    return ReuseMap(xi=xi, class_of=class_of, classes=classes)


def estimation_gains(c: np.ndarray, reuse: ReuseMap, lb: LinkBudget, tau_p: int) -> np.ndarray:
    """Directivity-weighted estimate powers ag[a, l, k].

    Defined for every (array, cell, user) triple: the denominator sums
    the couplings of the pilot-sharing cells of the *user's* class, so
    the value equals the MMSE estimate power at any array that despreads
    that class's pilot book.
    """
    rt = lb.rho_ul * tau_p
    ag = np.empty_like(c)
    for cells in reuse.classes:
        idx = list(cells)
        denom = 1.0 + rt * c[:, idx, :].sum(axis=1, keepdims=True)   # (A, 1, K)
        ag[:, idx, :] = rt * c[:, idx, :] ** 2 / denom
    return ag
