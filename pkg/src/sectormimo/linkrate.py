"""Closed-form effective SINR and achievable-rate lower bounds.

One engine covers every communication setting by working with the set
of arrays serving each user instead of a fixed sector index. For user
(l, k) with pilot class sigma(l) and per-array precoding gain
G_a = M_a - K_a (zero-forcing) or M_a (maximum-ratio):

  P   = rho_dl * (sum over serving arrays of sqrt(G_a ag eta))^2
  I1  = rho_dl * sum over co-book arrays of (c - [zf] epk * ag) * S_a
  I2  = rho_dl * sum over other arrays of c * S_a
  I3  = rho_dl * sum over co-class cells l' != l of
        (sum over arrays serving (l', k) of sqrt(G_a ag eta))^2
  SINR = P / (I1 + I2 + I3 + 1),    rate = (tau_dl / tau_c) W log2(1 + SINR)

where S_a is the array's total transmit power, ag is the estimate power
toward user (l, k), "co-book" means the array despreads a pilot book
containing (l, k)'s pilot, and epk marks co-book arrays that serve some
user on that same pilot (their transmission splits into an estimate part
and an uncorrelated error part, hence the zero-forcing subtraction). In
purely sectorized settings the quadratic forms collapse to the usual
single-array expressions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .association import Association, check_zf_wellposed
from .channel import ReuseMap
from .geometry import Layout
from .scenario import FrameAccounting, LinkBudget, ValidationError


@dataclass(frozen=True)
class SinrBreakdown:
    """Noise-normalized powers and effective SINR per user, shape (L, K)."""

    p_sig: np.ndarray
    i1: np.ndarray
    i2: np.ndarray
    i3: np.ndarray
    sinr: np.ndarray


@dataclass(frozen=True)
class RateReport:
    rate_bps: np.ndarray   # (L, K)


def precoding_gain(precoder: str, layout: Layout, assoc: Association) -> np.ndarray:
    """Array gain factor G_a; validates zero-forcing well-posedness."""
    if precoder == "zf":
        check_zf_wellposed(assoc, layout)
        return (layout.elements - assoc.counts).astype(float)
    if precoder == "mr":
        return layout.elements.astype(float)
    raise ValidationError(f"unknown precoder {precoder!r}")


def cobook_mask(layout: Layout, reuse: ReuseMap) -> np.ndarray:
    """book_co[a, l]: does array a despread the pilot book of cell l's class?"""
    A, L = layout.num_arrays, layout.num_cells
    book_co = np.zeros((A, L), dtype=bool)
    for a in range(A):
        served_classes = {int(reuse.class_of[c]) for c in layout.served_cells[a]}
        for l in range(L):
            book_co[a, l] = int(reuse.class_of[l]) in served_classes
    return book_co


def pilot_collision_mask(assoc: Association, reuse: ReuseMap) -> np.ndarray:
    """epk[a, l, k]: does array a serve some user on (l, k)'s pilot?"""
    A, L, K = assoc.e.shape
    epk = np.zeros((A, L, K), dtype=bool)
    for cells in reuse.classes:
        idx = list(cells)
        any_owner = assoc.e[:, idx, :].any(axis=1)     # (A, K)
        epk[:, idx, :] = any_owner[:, None, :]
    return epk


def noncoherent_interference(c: np.ndarray, ag: np.ndarray, array_power: np.ndarray,
                             book_co: np.ndarray, epk: np.ndarray, zf: bool,
                             rho_dl: float, array_mask: np.ndarray | None = None):
    """(I1, I2) for a given per-array total transmit power.

    ``array_mask`` restricts the interfering arrays (used by the
    neighborhood-local power optimizers).
    """
    inc = array_power if array_mask is None else array_power * array_mask
    coef = c - (epk * ag if zf else 0.0)
    i1 = rho_dl * np.einsum("alk,a,al->lk", coef, inc, book_co)
    i2 = rho_dl * np.einsum("alk,a,al->lk", c, inc, ~book_co)
    return i1, i2


def coherent_amplitudes(gain: np.ndarray, ag: np.ndarray, eta: np.ndarray,
                        e: np.ndarray) -> np.ndarray:
    """T[l, m, k]: coherent amplitude at user (l, k) from arrays serving (m, k)."""
    q = np.sqrt(np.maximum(gain[:, None, None] * ag, 0.0))      # (A, L, K)
    amp = np.where(e, np.sqrt(np.maximum(eta, 0.0)), 0.0)       # (A, L, K)
    return np.einsum("alk,amk->lmk", q, amp)


def sinr_breakdown(precoder: str, assoc: Association, c: np.ndarray, ag: np.ndarray,
                   eta: np.ndarray, reuse: ReuseMap, lb: LinkBudget,
                   layout: Layout) -> SinrBreakdown:
    """Evaluate the rate-bound SINR decomposition for every user."""
    A, L, K = c.shape
    _check_power_constraints(eta, assoc, layout)
    gain = precoding_gain(precoder, layout, assoc)
    rho = lb.rho_dl

    t = coherent_amplitudes(gain, ag, eta, assoc.e)             # (L, M, K)
    diag = np.arange(L)
    p_sig = rho * t[diag, diag, :] ** 2

    same_class = reuse.class_of[:, None] == reuse.class_of[None, :]
    coherent_mask = same_class & ~np.eye(L, dtype=bool)
    i3 = rho * np.einsum("lmk,lm->lk", t ** 2, coherent_mask)

    book_co = cobook_mask(layout, reuse)
    epk = pilot_collision_mask(assoc, reuse)
    s_a = eta.sum(axis=(1, 2))
    i1, i2 = noncoherent_interference(c, ag, s_a, book_co, epk, precoder == "zf", rho)

    sinr = p_sig / (i1 + i2 + i3 + 1.0)
    return SinrBreakdown(p_sig=p_sig, i1=i1, i2=i2, i3=i3, sinr=sinr)


def achievable_rate(sb: SinrBreakdown, frame: FrameAccounting, bandwidth_hz: float) -> RateReport:
    """Rate lower bound: downlink prelog times Shannon capacity at the SINR."""
    prelog = frame.tau_dl / frame.tau_c
    return RateReport(rate_bps=prelog * bandwidth_hz * np.log2(1.0 + sb.sinr))


def _check_power_constraints(eta: np.ndarray, assoc: Association, layout: Layout,
                             slack: float = 1e-9) -> None:
    if np.any(eta < -slack):
        raise ValidationError("negative power coefficient")
    if np.any((eta > slack) & ~assoc.e):
        raise ValidationError("power allocated to a user the array does not serve")
    over = eta.sum(axis=(1, 2)) - layout.budget
    if np.any(over > slack):
        a = int(np.argmax(over))
        raise ValidationError(
            f"array {a} power {eta.sum(axis=(1, 2))[a]:.12f} exceeds budget {layout.budget[a]:.12f}")
