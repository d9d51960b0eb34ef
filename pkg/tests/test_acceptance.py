"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
report. The heavyweight experiment sweeps are shared between criteria via
module-scoped fixtures.
"""

import time

import numpy as np
import pytest

import sectormimo as sm
from sectormimo import fadelab, power
from sectormimo.linkrate import sinr_breakdown
from sectormimo.runner import run_experiment, summarize

from conftest import build_pipeline

SETTINGS = ("omni", "secmd", "secmp", "compsec")
REFERENCE_GAINS = {1: {"secmd": 2.35, "secmp": 4.16, "compsec": 6.25},
               3: {"secmd": 1.91, "secmp": 3.13, "compsec": 4.51}}
TABLE_DROPS = 200
TABLE_SEED = 20240817


def _report(criterion: str, detail: str):
    print(f"[PASS] {criterion}: {detail}")


# ------------------------------------------------------------------ shared

@pytest.fixture(scope="module")
def table_runs():
    """p95/median per (setting, reuse) for MR + CPA-PMF at 200 drops."""
    out = {}
    for setting in SETTINGS:
        for xi in (1, 3):
            s = sm.Scenario(setting=setting, pilot_reuse=xi, precoder="mr",
                            power_strategy="cpa-pmf", num_drops=TABLE_DROPS,
                            master_seed=TABLE_SEED)
            out[(setting, xi)] = summarize(run_experiment(s, workers=4))
    return out


# ------------------------------------------------------------- criterion 1

def test_criterion_1_bound_oracle_agreement():
    t0 = time.perf_counter()
    n_real = 2000
    worst_terms = {}
    worst_corr = 0.0
    worst_sinr = 0.0
    for setting in ("compsec", "secmp"):
        s = sm.Scenario(num_cells=7, users_per_cell=18, antennas_per_array=100,
                        setting=setting, num_drops=1, master_seed=100)
        inst = fadelab.make_instance(s, seed=0)
        eta = fadelab.default_eta(inst)
        for precoder in ("mr", "zf"):
            stats = fadelab.simulate_terms(inst, precoder, eta, n_real=n_real, seed=123)
            pred = fadelab.closed_form_terms(inst, precoder, eta)
            rep = fadelab.oracle_compare(
                stats, pred, fadelab.closed_form_sinr(inst, precoder, eta))
            for t, err in rep.pooled_rel_err.items():
                key = f"{setting}/{precoder}/{t}"
                worst_terms[key] = err
                assert err <= 0.05, f"{key}: term variance off by {err:.3%}"
            worst_corr = max(worst_corr, rep.max_cross_corr)
            worst_sinr = max(worst_sinr, float(np.max(rep.sinr_rel_err)))
            assert rep.max_cross_corr < 0.03
            assert np.all(rep.sinr_rel_err < 0.07)
    elapsed = time.perf_counter() - t0
    assert elapsed < 180.0, f"oracle runtime {elapsed:.0f}s exceeds 3 min"
    _report("criterion 1",
            f"all term variances within 5% (worst {max(worst_terms.values()):.3%}), "
            f"max cross-correlation {worst_corr:.4f} < 0.03, "
            f"SINR reconstruction within {worst_sinr:.3%} < 7%, {elapsed:.0f}s")


# ------------------------------------------------------------- criterion 2

def test_criterion_2_random_matrix_identities():
    out = fadelab.gram_identities(100, 18, n_samples=10_000, seed=77)
    err_ztz = abs(out["mean_ztz"] - 100.0) / 100.0
    err_inv = abs(out["mean_inv_diag"] - 1.0 / 82.0) * 82.0
    assert err_ztz < 0.01
    assert err_inv < 0.01
    _report("criterion 2",
            f"E[z^T z*]={out['mean_ztz']:.3f} (err {err_ztz:.4%}), "
            f"E[diag inv]={out['mean_inv_diag']:.6f} vs 1/82 (err {err_inv:.4%})")


# ------------------------------------------------------------- criterion 3

def test_criterion_3_pmf_closed_forms():
    checked = 0
    rng = np.random.default_rng(5150)
    for i in range(50):
        setting = ("secmp", "secmd", "omni", "compsec")[i % 4]
        precoder = ("mr", "zf")[i % 2]
        pipe = build_pipeline(setting=setting, users_per_cell=int(rng.integers(2, 7)),
                              master_seed=900 + i)
        eta = power.pmf(setting, precoder, pipe.coupling, pipe.est_gain, pipe.reuse,
                        pipe.link_budget, pipe.assoc, pipe.layout)
        active = pipe.assoc.counts > 0
        np.testing.assert_allclose(eta.sum(axis=(1, 2))[active],
                                   pipe.layout.budget[active], rtol=1e-9)
        obj = _pmf_objective(pipe, precoder, eta)
        if setting == "compsec":
            groups = [obj[l] for l in range(pipe.layout.num_cells)]
        else:
            groups = [obj[pipe.assoc.e[a]] for a in range(pipe.layout.num_arrays)
                      if pipe.assoc.e[a].sum() >= 2]
        for vals in groups:
            assert vals.max() / vals.min() - 1.0 <= 1e-9
        checked += 1
    # Symmetric instance: uniform coefficients, exactly budget / K each.
    pipe = build_pipeline(setting="compsec", users_per_cell=6, master_seed=991)
    K = 6
    c = pipe.coupling.mean(axis=2, keepdims=True) * np.ones((1, 1, K))
    ag = pipe.est_gain.mean(axis=2, keepdims=True) * np.ones((1, 1, K))
    eta = power.pmf("compsec", "mr", c, ag, pipe.reuse, pipe.link_budget,
                    pipe.assoc, pipe.layout)
    np.testing.assert_allclose(eta[pipe.assoc.e], 1.0 / (3.0 * K), rtol=1e-12)
    _report("criterion 3",
            f"{checked} random instances: equal per-cell SINR to 1e-9, budgets "
            f"exact to 1e-9; symmetric instance uniform at 1/(3K)")


def _pmf_objective(pipe, precoder, eta):
    d = power._pmf_denominator(precoder, pipe.coupling, pipe.est_gain, pipe.reuse,
                               pipe.link_budget, pipe.assoc, pipe.layout, None)
    gain = sm.linkrate.precoding_gain(precoder, pipe.layout, pipe.assoc)
    amp = np.einsum("alk,alk->lk",
                    np.sqrt(gain[:, None, None] * pipe.est_gain * np.maximum(eta, 0.0)),
                    pipe.assoc.e)
    return pipe.link_budget.rho_dl * amp ** 2 / d


# ------------------------------------------------------------- criterion 4

def test_criterion_4_nmf_bisection():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4242)
    n_mono = 0
    for i in range(30):
        setting = ("secmp", "compsec")[i % 2]
        precoder = ("mr", "zf")[(i // 2) % 2]
        pipe = build_pipeline(setting=setting, users_per_cell=int(rng.integers(2, 5)),
                              master_seed=500 + i)
        prob = power.build_problem(setting, precoder, pipe.coupling, pipe.est_gain,
                                   pipe.reuse, pipe.link_budget, pipe.assoc,
                                   pipe.layout)
        t_hi = power.upper_bound_sinr(prob)
        probes = np.sort(rng.uniform(0.0, 1.1 * t_hi, size=4))
        feas = [power.feasible_at(float(t), prob)[0] for t in probes]
        for a, b in zip(feas[:-1], feas[1:]):
            assert a or not b, "feasibility must be monotone decreasing in t"
        n_mono += 1

        res = power.nmf(setting, precoder, pipe.coupling, pipe.est_gain, pipe.reuse,
                        pipe.link_budget, pipe.assoc, pipe.layout)
        lo, hi = res.bracket
        assert (hi - lo) <= 1e-4 * max(hi, 1e-12)
        for _ in range(100):
            eta_r = _random_eta(pipe, rng)
            sb = sinr_breakdown(precoder, pipe.assoc, pipe.coupling,
                                pipe.est_gain, eta_r, pipe.reuse,
                                pipe.link_budget, pipe.layout)
            assert res.t_star >= float(sb.sinr.min()) - 1e-9

    grid_checked = _grid_oracle_check()
    elapsed = time.perf_counter() - t0
    assert elapsed < 300.0, f"max-min suite took {elapsed:.0f}s, exceeds 5 min"
    _report("criterion 4",
            f"{n_mono} instances monotone, brackets <= 1e-4, optimum beats 100 "
            f"random allocations each; {grid_checked} two-user instances match "
            f"grid oracle within 2e-3; {elapsed:.0f}s")


def _random_eta(pipe, rng):
    eta = np.zeros_like(pipe.coupling)
    for a in range(pipe.layout.num_arrays):
        mask = pipe.assoc.e[a]
        n = int(mask.sum())
        if n:
            eta[a][mask] = rng.dirichlet(np.ones(n)) * rng.uniform(0.1, 1.0) \
                * pipe.layout.budget[a]
    return eta


def _grid_oracle_check() -> int:
    checked = 0
    for precoder in ("mr", "zf"):
        for seed in (1, 2):
            pipe = build_pipeline(setting="secmp", users_per_cell=2,
                                  master_seed=400 + seed)
            res = power.nmf("secmp", precoder, pipe.coupling, pipe.est_gain,
                            pipe.reuse, pipe.link_budget, pipe.assoc,
                            pipe.layout, neighborhood=[0])
            prob = power.build_problem("secmp", precoder, pipe.coupling,
                                       pipe.est_gain, pipe.reuse, pipe.link_budget,
                                       pipe.assoc, pipe.layout, neighborhood=[0])
            t_grid = _grid_max_min(prob, pipe.layout.budget)
            assert res.t_star == pytest.approx(t_grid, rel=2e-3)
            checked += 1
    return checked


def _grid_max_min(prob, budget) -> float:
    """Brute-force 1e-3-resolution search over two power coefficients."""
    assert prob.pair_array.size == 2
    a0, a1 = prob.pair_array
    u0, u1 = prob.pair_user
    grid = np.linspace(0.0, 1.0, 1001)
    f0, f1 = np.meshgrid(grid, grid, indexing="ij")
    if a0 == a1:
        valid = (f0 + f1) <= 1.0
        p0, p1 = f0 * budget[a0], f1 * budget[a0]
    else:
        valid = np.ones_like(f0, dtype=bool)
        p0, p1 = f0 * budget[a0], f1 * budget[a1]
    sinrs = []
    for u in (0, 1):
        own = p0 if u0 == u else p1
        b = prob.signal_coef[0 if u0 == u else 1]
        denom = (prob.noncoh[u, 0] + prob.coherent[u, 0]) * p0 \
            + (prob.noncoh[u, 1] + prob.coherent[u, 1]) * p1 + prob.noise
        sinrs.append(b * own / denom)
    value = np.where(valid, np.minimum(sinrs[0], sinrs[1]), -np.inf)
    return float(value.max())


# --------------------------------------------------------- criteria 5 and 6

def test_criterion_5_table_ordering_and_gains(table_runs):
    t0 = time.perf_counter()
    lines = []
    for xi in (1, 3):
        p95 = {setting: table_runs[(setting, xi)].p95_likely_bps
               for setting in SETTINGS}
        assert p95["compsec"] > p95["secmp"] > p95["secmd"] > p95["omni"], \
            f"xi={xi}: ordering violated: {p95}"
        for setting, target in REFERENCE_GAINS[xi].items():
            ratio = p95[setting] / p95["omni"]
            dev = abs(ratio - target) / target
            assert dev <= 0.40, \
                f"xi={xi} {setting}: gain {ratio:.2f}x vs {target}x (dev {dev:.0%})"
            lines.append(f"xi={xi} {setting} {ratio:.2f}x (target {target}x)")
    _report("criterion 5", "ordering CoMPSec>SecMP>SecMD>Omni holds; gains "
            + ", ".join(lines) + f" [{time.perf_counter() - t0:.0f}s on cache]")


def test_criterion_6_pilot_reuse_effect(table_runs):
    gains = {}
    for setting in SETTINGS:
        p1 = table_runs[(setting, 1)].p95_likely_bps
        p3 = table_runs[(setting, 3)].p95_likely_bps
        assert p3 > p1, f"{setting}: reuse-3 p95 {p3} not above reuse-1 {p1}"
        gains[setting] = p3 / p1
    _report("criterion 6", "95%-likely rate improves with reuse 3 everywhere: "
            + ", ".join(f"{s} {g:.2f}x" for s, g in gains.items()))


# ------------------------------------------------------------- criterion 7

def test_criterion_7_coherent_interference_split():
    medians = {}
    for setting in ("secmp", "compomn"):
        s = sm.Scenario(setting=setting, pilot_reuse=1, precoder="mr",
                        power_strategy="upa", num_drops=50, master_seed=11)
        r = run_experiment(s, workers=4)
        medians[setting] = float(np.median(r.i3 / (r.i1 + r.i2 + 1.0)))
    assert medians["secmp"] < 0.1
    assert medians["compomn"] >= 10.0 * medians["secmp"]
    _report("criterion 7",
            f"median coherent share: secmp {medians['secmp']:.5f} < 0.1, "
            f"compomn {medians['compomn']:.4f} "
            f"({medians['compomn'] / medians['secmp']:.0f}x larger)")


# ------------------------------------------------------------- criterion 8

def test_criterion_8_decentralized_matches_centralized(table_runs):
    s = sm.Scenario(setting="secmp", pilot_reuse=1, precoder="mr",
                    power_strategy="dpa-pmf", num_drops=TABLE_DROPS,
                    master_seed=TABLE_SEED)
    dpa_stats = summarize(run_experiment(s, workers=4))
    cpa = table_runs[("secmp", 1)].p95_likely_bps
    gap = abs(dpa_stats.p95_likely_bps - cpa) / cpa
    assert gap <= 0.10, f"DPA vs CPA 95%-likely gap {gap:.1%} exceeds 10%"
    _report("criterion 8",
            f"DPA-PMF p95 {dpa_stats.p95_likely_bps / 1e6:.3f} Mbps vs CPA "
            f"{cpa / 1e6:.3f} Mbps (gap {gap:.2%} <= 10%)")


# ------------------------------------------------------------- criterion 9

def test_criterion_9_determinism_across_workers(tmp_path):
    from sectormimo.runner import main

    blobs = []
    for workers in (1, 4):
        out = tmp_path / f"w{workers}"
        code = main(["--setting", "secmp", "--precoder", "mr", "--power", "cpa-pmf",
                     "--drops", "6", "--seed", "31337",
                     "--workers", str(workers), "--out", str(out)])
        assert code == 0
        blobs.append((out / "rates.csv").read_bytes())
    assert blobs[0] == blobs[1]
    _report("criterion 9", "rates.csv byte-identical for 1 vs 4 workers "
            f"({len(blobs[0])} bytes)")
