"""Monte Carlo small-scale-fading oracle for the closed-form rate bounds.

Each realization draws the de-spread pilot observations Z per array
(i.i.d. standard complex normal, one column per pilot of the array's
book), builds the MR or ZF precoder from the served columns, and
synthesizes the received-signal decomposition at probe users:

  T11 desired signal            T12 coherent pilot-sharing interference
  T13 beamforming-gain fluctuation (MR)   T14 intra-book cross talk (MR)
  T2  estimation-error leakage  T3  non-serving co-book array signals
  T4  other-book array signals  T5  receiver noise

The channel bookkeeping follows the estimate-plus-error model: toward a
co-book array the probe user's channel is sqrt(ag) * z_pilot plus an
independent error of variance c - ag; toward other arrays it is an
independent draw of variance c. Data symbols and receiver noise enter
every term linearly, so their unit second moments are marginalized
analytically: per realization each term is reduced to its coefficient
on every symbol, variances average |coefficient|^2 and cross moments
average coefficient products. That keeps the estimator an unbiased
Monte Carlo over the channel randomness while removing symbol noise.

The fluctuation statistics of Z (Gram matrices, inverse diagonals,
column correlations) are exactly what the closed-form variances assert,
so agreement here validates the bound end to end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .association import Association, associate
from .channel import ReuseMap, estimation_gains, large_scale_coupling, reuse_sets
from .geometry import Layout, build_layout, drop_users
from .antenna import resolve_pattern
from .linkrate import precoding_gain, sinr_breakdown
from .power import upa
from .rng import derive_seed, make_generator
from .scenario import LinkBudget, Scenario, ValidationError, derive_frame, derive_link_budget

ZF_TERMS = ("T11", "T12", "T2", "T3", "T4", "T5")
MR_TERMS = ("T11", "T12", "T13", "T14", "T2", "T3", "T4", "T5")


@dataclass(frozen=True)
class FadeInstance:
    scenario: Scenario
    layout: Layout
    reuse: ReuseMap
    link_budget: LinkBudget
    coupling: np.ndarray       # (A, L, K)
    est_gain: np.ndarray       # (A, L, K)
    assoc: Association


@dataclass(frozen=True)
class TermStats:
    terms: tuple[str, ...]
    variances: dict            # term -> (P,) empirical variance per probe user
    cross: dict                # (term_i, term_j) -> (P,) complex cross moments
    n_real: int
    redraws: int


@dataclass(frozen=True)
class OracleReport:
    terms: tuple[str, ...]
    predicted: dict
    empirical: dict
    rel_err: dict              # term -> (P,) per-probe diagnostic
    pooled_rel_err: dict       # term -> float, pooled over the probe cell
    max_rel_err: float         # worst pooled per-term error
    max_cross_corr: float      # worst pooled pair correlation
    emp_sinr: np.ndarray       # (P,)
    closed_sinr: np.ndarray    # (P,)
    sinr_rel_err: np.ndarray   # (P,)


def make_instance(s: Scenario, seed: int = 0) -> FadeInstance:
    """Run the large-scale pipeline once and freeze the result."""
    if s.setting == "compomn":
        raise ValidationError("fading oracle does not model shared-site service")
    layout = build_layout(s)
    pattern = resolve_pattern(s.pattern)
    drop = drop_users(s, layout, derive_seed(s.master_seed, seed, 1))
    c = large_scale_coupling(layout, pattern, drop, derive_seed(s.master_seed, seed, 2), s)
    reuse = reuse_sets(s.pilot_reuse, layout)
    lb = derive_link_budget(s)
    frame = derive_frame(s)
    ag = estimation_gains(c, reuse, lb, frame.tau_p)
    assoc = associate(s.setting, layout, c, drop)
    return FadeInstance(scenario=s, layout=layout, reuse=reuse, link_budget=lb,
                        coupling=c, est_gain=ag, assoc=assoc)


def _home_cell(layout: Layout, a: int) -> int:
    cells = layout.served_cells[a]
    if len(cells) != 1:
        raise ValidationError("fading oracle needs single-cell arrays")
    return cells[0]


def simulate_terms(inst: FadeInstance, precoder: str, eta: np.ndarray,
                   n_real: int, seed: int, probe_cell: int = 0,
                   chunk: int = 128) -> TermStats:
    """Empirical variances and cross moments of the received-signal terms.

    Statistics are gathered for every user of ``probe_cell``.
    Deterministic given the seed; realizations are independent across
    chunks, each chunk owning a derived seed.
    """
    layout, reuse = inst.layout, inst.reuse
    A, L, K = inst.coupling.shape
    P = K
    rho = inst.link_budget.rho_dl
    zf = precoder == "zf"
    terms = ZF_TERMS if zf else MR_TERMS
    coef_terms = tuple(t for t in terms if t != "T5")

    probe_class = int(reuse.class_of[probe_cell])
    homes = [_home_cell(layout, a) for a in range(A)]
    served_ks = [np.nonzero(inst.assoc.e[a, homes[a]])[0] for a in range(A)]
    cobook = [int(reuse.class_of[homes[a]]) == probe_class for a in range(A)]
    gain = precoding_gain(precoder, layout, inst.assoc)

    var_sum = {t: np.zeros(P) for t in coef_terms}
    cross_sum = {}
    for i, ti in enumerate(coef_terms):
        for tj in coef_terms[i + 1:]:
            cross_sum[(ti, tj)] = np.zeros(P, dtype=complex)

    done = 0
    redraws = 0
    chunk_index = 0
    while done < n_real:
        nb = min(chunk, n_real - done)
        rng = make_generator(seed, 7001, chunk_index)
        coef = {t: np.zeros((nb, P, L, K), dtype=complex) for t in coef_terms}
        for a in range(A):
            redraws += _accumulate_array(
                coef, rng, inst, a, homes[a], served_ks[a], bool(cobook[a]),
                probe_cell, gain, eta, rho, nb, zf)
        for t in coef_terms:
            var_sum[t] += np.einsum("bplk,bplk->p", coef[t], np.conj(coef[t])).real
        for (ti, tj) in cross_sum:
            cross_sum[(ti, tj)] += np.einsum("bplk,bplk->p", coef[ti], np.conj(coef[tj]))
        done += nb
        chunk_index += 1

    variances = {t: var_sum[t] / n_real for t in coef_terms}
    variances["T5"] = np.ones(P)          # unit receiver noise, marginalized
    cross = {k: v / n_real for k, v in cross_sum.items()}
    return TermStats(terms=terms, variances=variances, cross=cross,
                     n_real=n_real, redraws=redraws)


def _accumulate_array(coef, rng, inst, a, home, ks, is_cobook, probe_cell,
                      gain, eta, rho, nb, zf) -> int:
    """Add array a's symbol coefficients for every probe user. Returns redraws."""
    layout = inst.layout
    m_a = int(layout.elements[a])
    k_a = ks.size
    K = inst.coupling.shape[2]
    sqrt_rho = np.sqrt(rho)

    redraws = 0
    for attempt in range(11):
        z = _crandn(rng, (nb, m_a, K))
        if k_a == 0:
            break
        zt = z[:, :, ks]                                     # (nb, M, Ka)
        eta_cols = eta[a, home, ks]
        if zf:
            gram = np.einsum("bmk,bml->bkl", zt, np.conj(zt))
            try:
                inv_cols = np.linalg.solve(gram, np.broadcast_to(
                    np.diag(np.sqrt(eta_cols)), (nb, k_a, k_a)))
            except np.linalg.LinAlgError:
                redraws += 1
                continue
            bs = np.sqrt(gain[a]) * np.einsum("bmk,bkl->bml", np.conj(zt), inv_cols)
        else:
            bs = np.einsum("bmk,k->bmk", np.conj(zt), np.sqrt(eta_cols)) / np.sqrt(m_a)
        break
    else:
        raise RuntimeError(f"array {a}: 10 consecutive singular Gram matrices")

    if k_a == 0:
        return redraws

    ag_p = inst.est_gain[a, probe_cell, :]                   # (P,)
    c_p = inst.coupling[a, probe_cell, :]

    if not is_cobook:
        # Independent true channels; everything lands in T4.
        h = _crandn(rng, (nb, K, m_a)) * np.sqrt(c_p)[None, :, None]
        hb = np.einsum("bpm,bmj->bpj", h, bs)
        coef["T4"][:, :, home, ks] += sqrt_rho * hb
        return redraws

    # Estimation error toward each probe user, variance c - ag.
    err_sd = np.sqrt(np.maximum(c_p - ag_p, 0.0))
    eps = _crandn(rng, (nb, K, m_a)) * err_sd[None, :, None]
    zb = np.einsum("bmp,bmj->bpj", z, bs)                    # (nb, P, Ka)
    eb = np.einsum("bpm,bmj->bpj", eps, bs)
    sqrt_ag = np.sqrt(ag_p)

    served_mask = inst.assoc.e[a, home, :]                   # epk per probe pilot
    col_of = {int(k): j for j, k in enumerate(ks)}
    for p in range(K):
        amp = sqrt_rho * sqrt_ag[p]
        if served_mask[p]:
            j0 = col_of[p]
            target = "T11" if home == probe_cell else "T12"
            if zf:
                # ZF projects the pilot column exactly onto its own symbol;
                # the remaining columns are identically zero.
                coef[target][:, p, home, p] += amp * zb[:, p, j0]
            else:
                mean_amp = amp * np.sqrt(eta[a, home, p] * m_a)
                coef[target][:, p, home, p] += mean_amp
                coef["T13"][:, p, home, p] += amp * zb[:, p, j0] - mean_amp
                others = np.ones(k_a, dtype=bool)
                others[j0] = False
                coef["T14"][:, p, home, ks[others]] += amp * zb[:, p, others]
            coef["T2"][:, p, home, ks] += sqrt_rho * eb[:, p, :]
        else:
            coef["T3"][:, p, home, ks] += amp * zb[:, p, :] + sqrt_rho * eb[:, p, :]
    return redraws


def _crandn(rng, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def closed_form_terms(inst: FadeInstance, precoder: str, eta: np.ndarray,
                      probe_cell: int = 0) -> dict:
    """Predicted variance of every term for the probe cell's users."""
    layout, reuse = inst.layout, inst.reuse
    A, L, K = inst.coupling.shape
    rho = inst.link_budget.rho_dl
    zf = precoder == "zf"
    gain = precoding_gain(precoder, layout, inst.assoc)
    homes = [_home_cell(layout, a) for a in range(A)]
    probe_class = int(reuse.class_of[probe_cell])

    s_a = eta.sum(axis=(1, 2))
    pred = {t: np.zeros(K) for t in (ZF_TERMS if zf else MR_TERMS)}
    pred["T5"] = np.ones(K)
    amp12 = np.zeros((L, K))
    for a in range(A):
        home = homes[a]
        ag_p = inst.est_gain[a, probe_cell, :]
        c_p = inst.coupling[a, probe_cell, :]
        if int(reuse.class_of[home]) != probe_class:
            pred["T4"] += rho * c_p * s_a[a]
            continue
        served = inst.assoc.e[a, home, :]
        eta_own = eta[a, home, :]
        amp12[home, :] += served * np.sqrt(gain[a] * ag_p * eta_own)
        pred["T2"] += rho * served * (c_p - ag_p) * s_a[a]
        pred["T3"] += rho * (~served) * c_p * s_a[a]
        if not zf:
            pred["T13"] += rho * served * ag_p * eta_own
            pred["T14"] += rho * served * ag_p * (s_a[a] - eta_own)
    pred["T11"] = rho * amp12[probe_cell, :] ** 2
    other = [l for l in range(L)
             if l != probe_cell and int(reuse.class_of[l]) == probe_class]
    pred["T12"] = rho * (amp12[other, :] ** 2).sum(axis=0) if other else np.zeros(K)
    return pred


def oracle_compare(stats: TermStats, predicted: dict,
                   closed_sinr: np.ndarray | None = None) -> OracleReport:
    """Compare empirical and predicted term statistics.

    Per-term agreement is judged on the variance pooled over the probe
    cell's users (one number per term, as are the closed forms' claims);
    per-probe errors are kept for diagnostics. Cross correlations pool
    the per-probe cross moments the same way, which keeps the estimator
    noise well under the acceptance threshold at a few thousand
    realizations.
    """
    scale = float(np.max(predicted["T11"]))
    rel_err = {}
    pooled_rel_err = {}
    for t in stats.terms:
        p, e = predicted[t], stats.variances[t]
        err = np.zeros_like(np.asarray(p, dtype=float))
        sig = p > 1e-12 * scale
        err[sig] = np.abs(e[sig] - p[sig]) / p[sig]
        err[~sig] = np.where(e[~sig] > 1e-9 * scale, np.inf, 0.0)
        rel_err[t] = err
        psum = float(np.sum(p))
        if psum > 1e-12 * scale:
            pooled_rel_err[t] = float(abs(np.sum(e) - psum) / psum)
        else:
            pooled_rel_err[t] = 0.0 if np.sum(e) <= 1e-9 * scale else np.inf

    max_corr = 0.0
    for (ti, tj), moment in stats.cross.items():
        vi, vj = stats.variances[ti], stats.variances[tj]
        ok = (vi > 1e-12 * scale) & (vj > 1e-12 * scale)
        if np.any(ok):
            denom = float(np.sum(np.sqrt(vi[ok] * vj[ok])))
            max_corr = max(max_corr, float(np.abs(np.sum(moment[ok]))) / denom)

    num = stats.variances["T11"]
    denom = sum(stats.variances[t] for t in stats.terms if t not in ("T11",))
    emp_sinr = num / denom
    if closed_sinr is None:
        closed_sinr = np.full_like(emp_sinr, np.nan)
        sinr_rel = np.full_like(emp_sinr, np.nan)
    else:
        sinr_rel = np.abs(emp_sinr - closed_sinr) / closed_sinr
    return OracleReport(
        terms=stats.terms, predicted=predicted, empirical=stats.variances,
        rel_err=rel_err, pooled_rel_err=pooled_rel_err,
        max_rel_err=float(max(pooled_rel_err.values())),
        max_cross_corr=max_corr, emp_sinr=emp_sinr, closed_sinr=closed_sinr,
        sinr_rel_err=sinr_rel)


def closed_form_sinr(inst: FadeInstance, precoder: str, eta: np.ndarray,
                     probe_cell: int = 0) -> np.ndarray:
    sb = sinr_breakdown(precoder, inst.assoc, inst.coupling, inst.est_gain,
                        eta, inst.reuse, inst.link_budget, inst.layout)
    return sb.sinr[probe_cell]


def default_eta(inst: FadeInstance) -> np.ndarray:
    return upa(inst.assoc, inst.layout)


def render_report(report: OracleReport) -> str:
    """Tabular text: per-term predicted vs empirical agreement."""
    lines = ["term predicted empirical rel_err"]
    for t in report.terms:
        lines.append(
            f"{t} {np.sum(report.predicted[t]):.6e} "
            f"{np.sum(report.empirical[t]):.6e} {report.pooled_rel_err[t]:.4f}")
    lines.append(f"# max_cross_correlation {report.max_cross_corr:.4f}")
    lines.append(f"# max_sinr_rel_err {np.nanmax(report.sinr_rel_err):.4f}")
    return "\n".join(lines) + "\n"


def gram_identities(m: int, k: int, n_samples: int, seed: int,
                    chunk: int = 256) -> dict:
    """Random-matrix checks: E[z^T z*] = M and E[diag (Z^T Z*)^-1] = 1/(M-K)."""
    ztz_sum = 0.0
    inv_sum = 0.0
    done = 0
    chunk_index = 0
    while done < n_samples:
        nb = min(chunk, n_samples - done)
        rng = make_generator(seed, 8002, chunk_index)
        z = _crandn(rng, (nb, m, k))
        gram = np.einsum("bmk,bml->bkl", z, np.conj(z))
        inv = np.linalg.inv(gram)
        ztz_sum += float(np.einsum("bkk->", gram).real) / k
        inv_sum += float(np.einsum("bkk->", inv).real) / k
        done += nb
        chunk_index += 1
    n = done
    return {"mean_ztz": ztz_sum / n, "mean_inv_diag": inv_sum / n,
            "expected_ztz": float(m), "expected_inv_diag": 1.0 / (m - k)}
