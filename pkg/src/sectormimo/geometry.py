"""Wrapped hexagonal layouts, array placement, and user drops.

Cells are flat-top hexagons of circumradius R on a triangular lattice
with basis u = (1.5 R, sqrt(3) R / 2), v = (0, sqrt(3) R) in axial
coordinates (q, r). The 7-cell and 19-cell clusters (one and two rings
around a center cell) are fundamental domains of their cluster
superlattices, generated by 2u + v and 3u + 2v respectively; wraparound
replicates the cluster on that superlattice, and both the distance and
the azimuth to an array are taken from the nearest image.

Sector sites sit on the non-adjacent corners of each hexagon at angles
0, 120, and 240 degrees from the cell center. Those corners form one
vertex class of the honeycomb, so on the wrapped layout each site is
shared by exactly three cells, and each cell sees three sites whose
boresights point at its center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import Scenario, ValidationError

SQRT3 = math.sqrt(3.0)

# Angles (degrees, CCW from +x) of the chosen non-adjacent hexagon corners.
CORNER_ANGLES_DEG = (0.0, 120.0, 240.0)

# Cluster superlattice generators in axial (q, r) coordinates.
_CLUSTER_BASIS = {7: (2, 1), 19: (3, 2)}


class SamplingError(RuntimeError):
    """User drop rejection sampling failed to converge."""


@dataclass(frozen=True)
class ArrayRecord:
    array_id: str
    site: int
    position: np.ndarray
    boresight_deg: float
    elements: int
    power_budget: float
    served_cells: tuple[int, ...]
    directional: bool


@dataclass(frozen=True)
class Layout:
    setting: str
    cell_radius: float
    cell_centers: np.ndarray        # (L, 2)
    cell_axial: np.ndarray          # (L, 2) int
    wrap_translations: np.ndarray   # (7, 2), index 0 is the zero vector
    positions: np.ndarray           # (A, 2) array positions
    boresight_deg: np.ndarray       # (A,)
    elements: np.ndarray            # (A,) int
    budget: np.ndarray              # (A,)
    directional: np.ndarray         # (A,) bool
    site_of: np.ndarray             # (A,) int site index
    site_positions: np.ndarray      # (S, 2)
    served_cells: tuple[tuple[int, ...], ...]   # per array
    arrays_of_cell: tuple[tuple[int, ...], ...]  # per cell, serving arrays
    neighbors: tuple[tuple[int, ...], ...]       # per cell, wrap-aware ring-1

    @property
    def num_cells(self) -> int:
        return self.cell_centers.shape[0]

    @property
    def num_arrays(self) -> int:
        return self.positions.shape[0]

    def array_records(self):
        for a in range(self.num_arrays):
            yield ArrayRecord(
                array_id=f"a{a:02d}",
                site=int(self.site_of[a]),
                position=self.positions[a],
                boresight_deg=float(self.boresight_deg[a]),
                elements=int(self.elements[a]),
                power_budget=float(self.budget[a]),
                served_cells=self.served_cells[a],
                directional=bool(self.directional[a]),
            )


def _hex_axial_coords(num_cells: int) -> np.ndarray:
    radius = {7: 1, 19: 2}[num_cells]
    coords = [(q, r)
              for q in range(-radius, radius + 1)
              for r in range(-radius, radius + 1)
              if max(abs(q), abs(r), abs(q + r)) <= radius]
    # Deterministic order: center first, then by ring and polar angle.
    def key(c):
        q, r = c
        ring = max(abs(q), abs(r), abs(q + r))
        x, y = 1.5 * q, SQRT3 * (r + q / 2.0)
        return (ring, math.atan2(y, x) % (2.0 * math.pi))
    coords.sort(key=key)
    return np.asarray(coords, dtype=int)


def _axial_to_xy(axial: np.ndarray, R: float) -> np.ndarray:
    q = axial[..., 0].astype(float)
    r = axial[..., 1].astype(float)
    return np.stack([1.5 * R * q, SQRT3 * R * (r + q / 2.0)], axis=-1)


def _wrap_translations(num_cells: int, R: float) -> np.ndarray:
    i, j = _CLUSTER_BASIS[num_cells]
    t1 = _axial_to_xy(np.array([i, j]), R)
    # Rotating an axial vector by 60 degrees CCW maps (q, r) -> (-r, q + r).
    t2 = _axial_to_xy(np.array([-j, i + j]), R)
    return np.array([
        [0.0, 0.0], t1, t2, t2 - t1, -t1, -t2, t1 - t2,
    ])


def min_image_vector(src, dst, layout: Layout):
    """Displacement src -> nearest wrapped image of dst.

    Ties in the image norm are broken by the lowest translation index,
    with the zero translation first.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    cand = dst + layout.wrap_translations - src          # (7, 2)
    idx = int(np.argmin(np.einsum("tj,tj->t", cand, cand)))
    return cand[idx]


def _min_image_disp(src_points: np.ndarray, dst_points: np.ndarray,
                    translations: np.ndarray) -> np.ndarray:
    diff = dst_points[None, :, :] - src_points[:, None, :]      # (S, D, 2)
    cand = diff[None, :, :, :] + translations[:, None, None, :]
    norms = np.einsum("tsdj,tsdj->tsd", cand, cand)
    best = np.argmin(norms, axis=0)                              # (S, D)
    s_idx, d_idx = np.meshgrid(np.arange(src_points.shape[0]),
                               np.arange(dst_points.shape[0]), indexing="ij")
    return cand[best, s_idx, d_idx]


def min_image_displacements(src_points: np.ndarray, dst_points: np.ndarray,
                            layout: Layout) -> np.ndarray:
    """All-pairs nearest-image displacements, shape (n_src, n_dst, 2)."""
    return _min_image_disp(np.asarray(src_points, dtype=float),
                           np.asarray(dst_points, dtype=float),
                           layout.wrap_translations)


def _canonical_site_index(pos: np.ndarray, site_list: list[np.ndarray],
                          translations: np.ndarray, tol: float) -> int | None:
    for idx, sp in enumerate(site_list):
        d = pos + translations - sp
        if np.min(np.einsum("tj,tj->t", d, d)) <= tol * tol:
            return idx
    return None


def build_layout(s: Scenario) -> Layout:
    """Place cells and arrays for the scenario's communication setting."""
    L, R, M = s.num_cells, s.cell_radius_m, s.antennas_per_array
    axial = _hex_axial_coords(L)
    centers = _axial_to_xy(axial, R)
    translations = _wrap_translations(L, R)
    tol = 1e-6 * R

    positions, boresights, elements, budgets, directional = [], [], [], [], []
    site_of, served = [], []
    site_list: list[np.ndarray] = []

    def register_site(pos: np.ndarray) -> int:
        idx = _canonical_site_index(pos, site_list, translations, tol)
        if idx is None:
            site_list.append(pos.copy())
            idx = len(site_list) - 1
        return idx

    if s.setting == "omni":
        for l in range(L):
            site = register_site(centers[l])
            positions.append(centers[l])
            boresights.append(0.0)
            elements.append(3 * M)
            budgets.append(1.0)
            directional.append(False)
            site_of.append(site)
            served.append((l,))
    elif s.setting in ("secmd", "secmp", "compsec"):
        for l in range(L):
            for ang in CORNER_ANGLES_DEG:
                rad = math.radians(ang)
                pos = centers[l] + R * np.array([math.cos(rad), math.sin(rad)])
                site = register_site(pos)
                positions.append(pos)
                boresights.append((ang + 180.0) % 360.0)
                elements.append(M)
                budgets.append(1.0 / 3.0)
                directional.append(True)
                site_of.append(site)
                served.append((l,))
    elif s.setting == "compomn":
        # One 3M-element omnidirectional array per corner site, shared by
        # the (up to three) cells meeting at that corner.
        corner_cells: dict[int, list[int]] = {}
        site_pos: dict[int, np.ndarray] = {}
        for l in range(L):
            for ang in CORNER_ANGLES_DEG:
                rad = math.radians(ang)
                pos = centers[l] + R * np.array([math.cos(rad), math.sin(rad)])
                site = register_site(pos)
                corner_cells.setdefault(site, []).append(l)
                site_pos.setdefault(site, pos)
        for site in sorted(corner_cells):
            positions.append(site_pos[site])
            boresights.append(0.0)
            elements.append(3 * M)
            budgets.append(1.0)
            directional.append(False)
            site_of.append(site)
            served.append(tuple(sorted(set(corner_cells[site]))))
    else:
        raise ValidationError(f"unsupported setting {s.setting!r}")

    served_t = tuple(served)
    arrays_of_cell = tuple(
        tuple(a for a in range(len(positions)) if l in served_t[a]) for l in range(L))

    # Wrap-aware direct neighbors: centers at lattice spacing sqrt(3) R.
    spacing = SQRT3 * R
    disp = _min_image_disp(centers, centers, translations)
    dist = np.linalg.norm(disp, axis=-1)
    neighbors = tuple(
        tuple(np.nonzero(np.abs(dist[l] - spacing) < tol)[0].tolist()) for l in range(L))

    return Layout(
        setting=s.setting,
        cell_radius=R,
        cell_centers=centers,
        cell_axial=axial,
        wrap_translations=translations,
        positions=np.asarray(positions),
        boresight_deg=np.asarray(boresights),
        elements=np.asarray(elements, dtype=int),
        budget=np.asarray(budgets),
        directional=np.asarray(directional, dtype=bool),
        site_of=np.asarray(site_of, dtype=int),
        site_positions=np.asarray(site_list),
        served_cells=served_t,
        arrays_of_cell=arrays_of_cell,
        neighbors=neighbors,
    )


def point_in_hexagon(points: np.ndarray, center: np.ndarray, R: float) -> np.ndarray:
    """Membership test for a flat-top hexagon of circumradius R."""
    rel = np.asarray(points, dtype=float) - center
    x, y = np.abs(rel[..., 0]), np.abs(rel[..., 1])
    return (y <= SQRT3 * R / 2.0 + 1e-12) & (SQRT3 * x + y <= SQRT3 * R + 1e-9)


def drop_users(s: Scenario, layout: Layout, drop_seed: int) -> np.ndarray:
    """Uniform user positions per cell, shape (L, K, 2).

    Rejection sampling inside each hexagon, excluding disks of the
    scenario's exclusion radius around the sites of that cell's serving
    arrays. Deterministic given the seed.
    """
    rng = np.random.Generator(np.random.PCG64(drop_seed))
    L, K, R = layout.num_cells, s.users_per_cell, layout.cell_radius
    excl2 = s.exclusion_radius_m ** 2
    out = np.empty((L, K, 2))
    for l in range(L):
        sites = np.asarray([layout.positions[a] for a in layout.arrays_of_cell[l]])
        center = layout.cell_centers[l]
        got = 0
        attempts = 0
        while got < K:
            if attempts > 1000 * K + 1000:
                raise SamplingError(
                    f"cell {l}: rejection sampling exhausted "
                    f"(exclusion radius {s.exclusion_radius_m} m too large?)")
            n = 4 * (K - got) + 8
            attempts += n
            pts = center + rng.uniform([-R, -SQRT3 * R / 2.0], [R, SQRT3 * R / 2.0], size=(n, 2))
            ok = point_in_hexagon(pts, center, R)
            d2 = np.sum((pts[:, None, :] - sites[None, :, :]) ** 2, axis=-1)
            ok &= np.all(d2 >= excl2, axis=1)
            pts = pts[ok]
            take = min(K - got, pts.shape[0])
            out[l, got:got + take] = pts[:take]
            got += take
    return out


def dump_layout(layout: Layout) -> str:
    """Tabular text description of the arrays, one record per line."""
    lines = ["id site x_m y_m boresight_deg elements budget served_cells"]
    for rec in layout.array_records():
        cells = "/".join(str(c) for c in rec.served_cells)
        lines.append(
            f"{rec.array_id} {rec.site} {rec.position[0]:.3f} {rec.position[1]:.3f} "
            f"{rec.boresight_deg:.1f} {rec.elements} {rec.power_budget:.6f} {cells}")
    return "\n".join(lines) + "\n"
