"""User to antenna-array association for each communication setting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Layout, min_image_displacements
from .scenario import ValidationError


@dataclass(frozen=True)
class Association:
    """Boolean service map e[a, l, k] plus per-array served-user counts."""

    e: np.ndarray        # (A, L, K) bool
    counts: np.ndarray   # (A,) number of served users

    def served_users(self, a: int) -> np.ndarray:
        """Flat user indices (l * K + k) served by array a."""
        return np.nonzero(self.e[a].ravel())[0]


def associate(setting: str, layout: Layout, c: np.ndarray,
              drop: np.ndarray | None = None) -> Association:
    """Build the service map.

    secmd: nearest of the cell's three arrays (wrap-aware distance;
           needs the user positions in ``drop``).
    secmp: strongest combined gain c among the cell's three arrays,
           which folds in directivity, path loss, and shadowing.
    compsec / compomn: all three arrays/sites serving the cell.
    omni: the single central array.
    Ties break toward the lowest sector index.
    """
    A, L, K = c.shape
    e = np.zeros((A, L, K), dtype=bool)
    if setting in ("omni", "compsec", "compomn"):
        for l in range(L):
            for a in layout.arrays_of_cell[l]:
                e[a, l, :] = True
    elif setting == "secmp":
        for l in range(L):
            arrays = np.asarray(layout.arrays_of_cell[l])
            choice = np.argmax(c[arrays, l, :], axis=0)       # first max wins ties
            e[arrays[choice], l, np.arange(K)] = True
    elif setting == "secmd":
        if drop is None:
            raise ValidationError("secmd association needs user positions")
        for l in range(L):
            arrays = np.asarray(layout.arrays_of_cell[l])
            disp = min_image_displacements(layout.positions[arrays], drop[l], layout)
            choice = np.argmin(np.linalg.norm(disp, axis=-1), axis=0)
            e[arrays[choice], l, np.arange(K)] = True
    else:
        raise ValidationError(f"unsupported setting {setting!r}")
    counts = e.sum(axis=(1, 2))
    return Association(e=e, counts=counts)


def check_zf_wellposed(assoc: Association, layout: Layout) -> None:
    """Zero-forcing needs strictly more antennas than served users."""
    bad = np.nonzero(assoc.counts >= layout.elements)[0]
    if bad.size:
        a = int(bad[0])
        raise ValidationError(
            f"array {a} serves {int(assoc.counts[a])} users with only "
            f"{int(layout.elements[a])} antennas; zero-forcing is ill-posed")
