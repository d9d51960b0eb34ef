"""Downlink power allocation strategies.

* ``upa``: each array splits its budget uniformly over its users.
* ``pmf``: per-cell max-min fairness closed forms. Under the two
  standing assumptions (every array transmits at full power; coherent
  interference neglected) the denominator of each user's SINR is a
  constant D, the numerator is linear (sectorized) or a squared
  amplitude sum (coordinated) in the powers, and equalizing SINRs in
  the cell while exhausting the budget gives
  eta = (D / F) * common_sinr with common_sinr = budget / sum(D / F).
  The coordinated variant additionally ties the three per-array
  coefficients of a user to a common value, which is what makes the
  closed form possible.
* ``nmf``: network-wide max-min fairness by bisection on the target
  SINR. Each probe solves a max-slack feasibility problem: a linear
  program in the sectorized settings (numerator and denominator are
  both linear), a second-order-cone program in amplitude variables
  psi = sqrt(eta) for the coordinated setting.
* ``dpa``: decentralized variant; each cell solves its chosen problem
  on the subnetwork of itself plus its direct (wrap-aware) neighbors
  and keeps only its own arrays' coefficients.

All solvers are deterministic given their inputs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .association import Association
from .channel import ReuseMap
from .geometry import Layout
from .linkrate import (cobook_mask, noncoherent_interference,
                       pilot_collision_mask, precoding_gain, sinr_breakdown)
from .scenario import LinkBudget, ValidationError

FEASIBILITY_TOL = 1e-7
BISECTION_TOL = 1e-4
BISECTION_MAX_ITER = 60

_LP_SETTINGS = ("omni", "secmd", "secmp")


class SolverError(RuntimeError):
    """A feasibility solve failed to converge."""


def upa(assoc: Association, layout: Layout) -> np.ndarray:
    """Uniform power allocation: budget_a / K_a per served user."""
    eta = np.zeros_like(assoc.e, dtype=float)
    counts = np.maximum(assoc.counts, 1)
    share = layout.budget / counts
    eta[assoc.e] = np.repeat(share, assoc.counts)
    return eta


def _array_mask(layout: Layout, neighborhood) -> np.ndarray | None:
    if neighborhood is None:
        return None
    cells = set(int(x) for x in neighborhood)
    return np.asarray([any(c in cells for c in layout.served_cells[a])
                       for a in range(layout.num_arrays)], dtype=float)


def _pmf_denominator(precoder, c, ag, reuse, lb, assoc, layout, neighborhood):
    """Full-power non-coherent interference plus noise, D[l, k]."""
    book_co = cobook_mask(layout, reuse)
    epk = pilot_collision_mask(assoc, reuse)
    mask = _array_mask(layout, neighborhood)
    i1, i2 = noncoherent_interference(c, ag, layout.budget, book_co, epk,
                                      precoder == "zf", lb.rho_dl, mask)
    return i1 + i2 + 1.0


def pmf(setting: str, precoder: str, c: np.ndarray, ag: np.ndarray, reuse: ReuseMap,
        lb: LinkBudget, assoc: Association, layout: Layout,
        neighborhood=None) -> np.ndarray:
    """Closed-form per-cell max-min power coefficients."""
    if setting == "compomn":
        raise ValidationError(
            "per-cell max-min power control is undefined for shared-site "
            "omnidirectional coordination; use upa")
    A, L, K = c.shape
    gain = precoding_gain(precoder, layout, assoc)
    d = _pmf_denominator(precoder, c, ag, reuse, lb, assoc, layout, neighborhood)
    eta = np.zeros((A, L, K))

    if setting == "compsec":
        # One coefficient per user, applied identically at all three arrays.
        amp = np.einsum("alk,alk->lk", np.sqrt(gain[:, None, None] * ag), assoc.e)
        r = lb.rho_dl * amp ** 2
        for l in range(L):
            arrays = list(layout.arrays_of_cell[l])
            budgets = layout.budget[arrays]
            ratio = _guarded_ratio(d[l], r[l], l)
            total = ratio.sum()
            if total <= 0.0:
                continue
            common_sinr = float(budgets[0]) / total
            for a in arrays:
                eta[a, l, :] = ratio * common_sinr
        return eta

    # Sectorized or omnidirectional: exactly one serving array per user.
    serving = np.argmax(assoc.e, axis=0)                     # (L, K)
    f = lb.rho_dl * gain[serving] * np.take_along_axis(
        ag, serving[None, :, :], axis=0)[0]
    for a in range(A):
        mask = assoc.e[a]
        if not mask.any():
            continue
        ratio = np.zeros((L, K))
        ratio[mask] = _guarded_ratio(d[mask], f[mask], a)
        total = ratio.sum()
        if total <= 0.0:
            continue
        common_sinr = layout.budget[a] / total
        eta[a][mask] = ratio[mask] * common_sinr
    return eta


def _guarded_ratio(d, denom, where) -> np.ndarray:
    """D / F with zero-gain users dropped (they get zero power)."""
    d = np.asarray(d, dtype=float)
    denom = np.asarray(denom, dtype=float)
    bad = denom <= 0.0
    if np.any(bad):
        warnings.warn(f"{int(bad.sum())} user(s) with zero estimated gain in "
                      f"group {where}; assigned zero power")
    out = np.zeros_like(d)
    np.divide(d, denom, out=out, where=~bad)
    return out


# --- network-wide max-min fairness ---------------------------------------

@dataclass(frozen=True)
class MaxMinProblem:
    """Preassembled feasibility data for one max-min instance.

    Coefficients are rescaled so the largest signal coefficient is one
    (the noise keeps track of the scale); SINRs are unchanged and the
    conditioning of the feasibility solves improves by orders of
    magnitude.
    """

    mode: str                      # "lp" or "soc"
    shape: tuple[int, int, int]    # (A, L, K)
    users: np.ndarray              # (U, 2) included (l, k)
    pair_array: np.ndarray         # (J,) array index per variable
    pair_user: np.ndarray          # (J,) row into ``users`` per variable
    signal_coef: np.ndarray        # (J,) scaled G * rho * ag of the own link
    noncoh: np.ndarray             # (U, J) scaled interference coefficients
    coherent: np.ndarray           # (U, J) scaled coherent coefficients
    active_arrays: np.ndarray      # (A',) arrays with at least one variable
    budgets: np.ndarray            # (A',)
    noise: float                   # scaled unit noise power


@dataclass(frozen=True)
class MaxMinResult:
    eta: np.ndarray
    t_star: float
    bracket: tuple[float, float]
    iterations: int
    trace: tuple[tuple[float, bool], ...] = field(default=())


def build_problem(setting: str, precoder: str, c: np.ndarray, ag: np.ndarray,
                  reuse: ReuseMap, lb: LinkBudget, assoc: Association,
                  layout: Layout, neighborhood=None) -> MaxMinProblem:
    if setting == "compomn":
        raise ValidationError(
            "max-min power control is undefined for shared-site "
            "omnidirectional coordination; use upa")
    mode = "lp" if setting in _LP_SETTINGS else "soc"
    A, L, K = c.shape
    rho = lb.rho_dl
    gain = precoding_gain(precoder, layout, assoc)
    cells = sorted(range(L)) if neighborhood is None else sorted(int(x) for x in neighborhood)
    cellset = set(cells)
    arrays = [a for a in range(A) if any(cl in cellset for cl in layout.served_cells[a])]

    users = np.asarray([(l, k) for l in cells for k in range(K)], dtype=int)
    urow = {(l, k): i for i, (l, k) in enumerate(map(tuple, users))}

    pair_array, pair_user = [], []
    for a in arrays:
        ls, ks = np.nonzero(assoc.e[a])
        for l, k in zip(ls, ks):
            if l in cellset:
                pair_array.append(a)
                pair_user.append(urow[(int(l), int(k))])
    pair_array = np.asarray(pair_array, dtype=int)
    pair_user = np.asarray(pair_user, dtype=int)
    J = pair_array.size
    U = users.shape[0]
    if mode == "lp":
        served_per_user = np.bincount(pair_user, minlength=U)
        if np.any(served_per_user != 1):
            raise ValidationError("linear max-min expects exactly one serving array per user")

    ul, uk = users[:, 0], users[:, 1]
    signal_coef = rho * gain[pair_array] * ag[pair_array, ul[pair_user], uk[pair_user]]

    book_co = cobook_mask(layout, reuse)
    epk = pilot_collision_mask(assoc, reuse)
    zf = precoder == "zf"

    # noncoh[u, j]: interference density of pair j's array onto user u.
    a_j = pair_array
    cvals = c[a_j[None, :], ul[:, None], uk[:, None]]            # (U, J)
    agvals = ag[a_j[None, :], ul[:, None], uk[:, None]]
    co = book_co[a_j[None, :], ul[:, None]]
    sub = epk[a_j[None, :], ul[:, None], uk[:, None]] & co if zf else False
    noncoh = rho * np.where(co, cvals - (agvals * sub if zf else 0.0), cvals)

    # coherent[u, j]: pilot-sharing coherent gain of pair j toward user u
    # (same pilot index, co-class different cell, pair actually served).
    jl = ul[pair_user]
    same_k = uk[:, None] == uk[pair_user][None, :]
    same_class = reuse.class_of[ul][:, None] == reuse.class_of[jl][None, :]
    other_cell = ul[:, None] != jl[None, :]
    coh_mask = same_k & same_class & other_cell
    coherent = np.where(coh_mask, rho * gain[a_j][None, :] * agvals, 0.0)

    scale = float(np.max(signal_coef)) if signal_coef.size else 1.0
    if scale <= 0.0:
        scale = 1.0
    return MaxMinProblem(
        mode=mode, shape=(A, L, K), users=users,
        pair_array=pair_array, pair_user=pair_user,
        signal_coef=signal_coef / scale, noncoh=noncoh / scale,
        coherent=coherent / scale,
        active_arrays=np.asarray(arrays, dtype=int),
        budgets=layout.budget[arrays],
        noise=1.0 / scale,
    )


def _eta_from_pairs(prob: MaxMinProblem, values: np.ndarray) -> np.ndarray:
    eta = np.zeros(prob.shape)
    ul, uk = prob.users[:, 0], prob.users[:, 1]
    eta[prob.pair_array, ul[prob.pair_user], uk[prob.pair_user]] = np.maximum(values, 0.0)
    # Interior-point solutions satisfy the budgets only to solver
    # tolerance; rescale the rare overshoot so the contract is exact.
    for i, a in enumerate(prob.active_arrays):
        total = eta[a].sum()
        if total > prob.budgets[i]:
            eta[a] *= prob.budgets[i] / total
    return eta


def upper_bound_sinr(prob: MaxMinProblem) -> float:
    """Zero-interference, full-budget SINR; provable bisection upper bound."""
    budget_of = dict(zip(prob.active_arrays.tolist(), prob.budgets.tolist()))
    amp = np.zeros(prob.users.shape[0])
    # Coordinated users add amplitudes coherently across serving arrays.
    np.add.at(amp, prob.pair_user,
              np.sqrt(prob.signal_coef * np.asarray([budget_of[a] for a in prob.pair_array])))
    return float(np.max(amp ** 2)) / prob.noise if amp.size else 0.0


def pair_min_sinr(prob: MaxMinProblem, eta_pairs: np.ndarray) -> float:
    """Exact min-SINR of a candidate allocation in problem coordinates."""
    U = prob.users.shape[0]
    eta_pairs = np.maximum(eta_pairs, 0.0)
    sig_amp = np.zeros(U)
    np.add.at(sig_amp, prob.pair_user, np.sqrt(prob.signal_coef * eta_pairs))
    denom = prob.noncoh @ eta_pairs + prob.noise
    coh_amp = np.sqrt(prob.coherent * eta_pairs[None, :])        # (U, J)
    for u in range(U):
        groups: dict[int, float] = {}
        nz = np.nonzero(coh_amp[u])[0]
        for j in nz:
            key = int(prob.pair_user[j])
            groups[key] = groups.get(key, 0.0) + float(coh_amp[u, j])
        denom[u] += sum(v * v for v in groups.values())
    return float(np.min(sig_amp ** 2 / denom)) if U else 0.0


def feasible_at(t: float, prob: MaxMinProblem):
    """Max-slack feasibility of target SINR t.

    Returns (feasible, eta or None, slack). Feasibility means optimal
    slack >= -FEASIBILITY_TOL (scaled), i.e. every user can reach SINR t
    within the per-array budgets.
    """
    if t <= 0.0:
        return True, _eta_from_pairs(prob, np.zeros(prob.pair_array.size)), 0.0
    if prob.mode == "lp":
        return _feasible_lp(t, prob)
    return _feasible_soc(t, prob)


def _feasible_lp(t: float, prob: MaxMinProblem):
    # Work in noise-normalized units so the solver's absolute row
    # tolerances stay small relative to every constraint.
    J = prob.pair_array.size
    U = prob.users.shape[0]
    n = J + 1                                  # eta variables plus slack
    c_obj = np.zeros(n)
    c_obj[-1] = -1.0

    sp = _lp_serving_pair(prob)
    rows = t * (prob.noncoh + prob.coherent) / prob.noise   # (U, J)
    rows[np.arange(U), sp] -= prob.signal_coef[sp] / prob.noise
    a_ub = np.zeros((U + prob.active_arrays.size, n))
    a_ub[:U, :J] = rows
    a_ub[:U, -1] = 1.0
    b_ub = np.full(U + prob.active_arrays.size, -t, dtype=float)
    for i, a in enumerate(prob.active_arrays):
        a_ub[U + i, :J] = (prob.pair_array == a).astype(float)
        a_ub[U + i, -1] = 0.0
        b_ub[U + i] = prob.budgets[i]
    bounds = [(0.0, None)] * J + [(None, None)]
    res = linprog(c_obj, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        raise SolverError(f"LP feasibility failed at t={t:.6g}: {res.message}")
    slack = -res.fun
    tol = FEASIBILITY_TOL * max(1.0, t)
    if slack >= -tol:
        return True, _eta_from_pairs(prob, res.x[:J]), slack
    return False, None, slack


def _lp_serving_pair(prob: MaxMinProblem) -> np.ndarray:
    """For LP instances: the unique pair index serving each user row."""
    order = np.empty(prob.users.shape[0], dtype=int)
    order[prob.pair_user] = np.arange(prob.pair_array.size)
    return order


def _feasible_soc(t: float, prob: MaxMinProblem):
    import clarabel

    J = prob.pair_array.size
    U = prob.users.shape[0]
    n = J + 1                                  # psi variables plus slack
    sqrt_t = float(np.sqrt(t))
    amp_j = np.sqrt(prob.signal_coef)          # per-pair signal amplitudes

    a_rows, a_cols, a_vals, b_vals, cones = [], [], [], [], []
    row = 0

    def add_row(cols, vals, rhs):
        nonlocal row
        for cc, vv in zip(cols, vals):
            a_rows.append(row)
            a_cols.append(cc)
            a_vals.append(vv)
        b_vals.append(rhs)
        row += 1

    # psi >= 0
    for j in range(J):
        add_row([j], [-1.0], 0.0)
    cones.append(clarabel.NonnegativeConeT(J))

    # per-array budget: ||psi_a|| <= sqrt(budget_a)
    for i, a in enumerate(prob.active_arrays):
        members = np.nonzero(prob.pair_array == a)[0]
        add_row([], [], float(np.sqrt(prob.budgets[i])))
        for j in members:
            add_row([int(j)], [-1.0], 0.0)
        cones.append(clarabel.SecondOrderConeT(int(members.size) + 1))

    # per-user SINR cone:
    # sum_j amp_j psi_j - s >= sqrt(t) * ||(noncoh elements, coherent sums, 1)||
    coh_groups = _coherent_groups(prob)
    for u in range(U):
        own = np.nonzero(prob.pair_user == u)[0]
        add_row([int(j) for j in own] + [n - 1],
                [-float(amp_j[j]) for j in own] + [1.0], 0.0)
        nz = np.nonzero(prob.noncoh[u] > 0.0)[0]
        add_row([], [], sqrt_t * float(np.sqrt(prob.noise)))   # noise element
        for j in nz:
            add_row([int(j)], [-sqrt_t * float(np.sqrt(prob.noncoh[u, j]))], 0.0)
        for group in coh_groups[u]:
            cols = [int(j) for j in group]
            vals = [-sqrt_t * float(np.sqrt(prob.coherent[u, j])) for j in group]
            add_row(cols, vals, 0.0)
        # top + noise + one row per interference element
        cones.append(clarabel.SecondOrderConeT(2 + int(nz.size) + len(coh_groups[u])))

    a_mat = sparse.csc_matrix((a_vals, (a_rows, a_cols)), shape=(row, n))
    p_mat = sparse.csc_matrix((n, n))
    q = np.zeros(n)
    q[-1] = -1.0
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    solver = clarabel.DefaultSolver(p_mat, q, a_mat, np.asarray(b_vals), cones, settings)
    sol = solver.solve()
    status = str(sol.status)
    x = np.asarray(sol.x)
    if status not in ("Solved", "AlmostSolved"):
        # Stalled near the feasibility boundary: judge the candidate by the
        # SINRs it actually achieves instead of the unreliable slack.
        if status in ("InsufficientProgress", "MaxIterations") and np.all(np.isfinite(x)):
            eta = _eta_from_pairs(prob, x[:J] ** 2)
            eta_pairs = eta[prob.pair_array, prob.users[prob.pair_user, 0],
                            prob.users[prob.pair_user, 1]]
            achieved = pair_min_sinr(prob, eta_pairs)
            if achieved >= t * (1.0 - 1e-6):
                return True, eta, 0.0
            return False, None, achieved - t
        raise SolverError(f"SOC feasibility failed at t={t:.6g}: status {status}")
    slack = float(x[-1])
    tol = FEASIBILITY_TOL * float(np.sqrt(prob.noise)) * max(1.0, sqrt_t)
    if slack >= -tol:
        return True, _eta_from_pairs(prob, x[:J] ** 2), slack
    return False, None, slack


def _coherent_groups(prob: MaxMinProblem):
    """Per user: pair-index groups that add coherently (same interfering user)."""
    groups: list[list[np.ndarray]] = []
    for u in range(prob.users.shape[0]):
        nz = np.nonzero(prob.coherent[u] > 0.0)[0]
        by_user: dict[int, list[int]] = {}
        for j in nz:
            by_user.setdefault(int(prob.pair_user[j]), []).append(int(j))
        groups.append([np.asarray(v) for _, v in sorted(by_user.items())])
    return groups


def nmf(setting: str, precoder: str, c: np.ndarray, ag: np.ndarray, reuse: ReuseMap,
        lb: LinkBudget, assoc: Association, layout: Layout,
        tol: float = BISECTION_TOL, neighborhood=None) -> MaxMinResult:
    """Bisection on the max-min SINR target with convex feasibility probes."""
    prob = build_problem(setting, precoder, c, ag, reuse, lb, assoc, layout, neighborhood)
    t_hi = upper_bound_sinr(prob)
    t_lo = 0.0
    eta_best = _eta_from_pairs(prob, np.zeros(prob.pair_array.size))
    trace: list[tuple[float, bool]] = []
    iterations = 0
    while (t_hi - t_lo) > tol * max(t_hi, 1e-12):
        if iterations >= BISECTION_MAX_ITER:
            raise SolverError(
                f"bisection did not converge in {BISECTION_MAX_ITER} iterations; "
                f"bracket [{t_lo:.6g}, {t_hi:.6g}]")
        t = 0.5 * (t_lo + t_hi)
        feasible, eta_t, _ = feasible_at(t, prob)
        trace.append((t, feasible))
        if feasible:
            t_lo, eta_best = t, eta_t
        else:
            t_hi = t
        iterations += 1

    sb = sinr_breakdown(precoder, assoc, c, ag, eta_best, reuse, lb, layout)
    incl = prob.users
    t_star = float(np.min(sb.sinr[incl[:, 0], incl[:, 1]])) if incl.size else 0.0
    return MaxMinResult(eta=eta_best, t_star=t_star, bracket=(t_lo, t_hi),
                        iterations=iterations, trace=tuple(trace))


def format_trace(result: MaxMinResult) -> str:
    """Solver trace as tabular text: probe target, feasibility, iteration."""
    lines = ["iter probe_t feasible"]
    for i, (t, feas) in enumerate(result.trace):
        lines.append(f"{i} {t:.10g} {int(feas)}")
    lines.append(f"# bracket [{result.bracket[0]:.10g}, {result.bracket[1]:.10g}] "
                 f"iterations {result.iterations} t_star {result.t_star:.10g}")
    return "\n".join(lines) + "\n"


def dpa(strategy: str, setting: str, precoder: str, c: np.ndarray, ag: np.ndarray,
        reuse: ReuseMap, lb: LinkBudget, assoc: Association, layout: Layout,
        tol: float = BISECTION_TOL) -> np.ndarray:
    """Decentralized allocation: per-cell neighborhood solves, own arrays kept."""
    if setting == "compomn":
        raise ValidationError(
            "decentralized power control is undefined for shared-site "
            "omnidirectional coordination; use upa")
    eta = np.zeros_like(c)
    for l in range(layout.num_cells):
        hood = sorted({l, *layout.neighbors[l]})
        if strategy == "pmf":
            sub = pmf(setting, precoder, c, ag, reuse, lb, assoc, layout, neighborhood=hood)
        elif strategy == "nmf":
            sub = nmf(setting, precoder, c, ag, reuse, lb, assoc, layout,
                      tol=tol, neighborhood=hood).eta
        else:
            raise ValidationError(f"unknown decentralized strategy {strategy!r}")
        for a in layout.arrays_of_cell[l]:
            eta[a] = sub[a]
    return eta
