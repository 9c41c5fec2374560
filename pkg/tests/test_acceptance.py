"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line
with its measured runtime against the stated budget.

Two sub-criteria are asserted exactly as stated but are expected to fail for
reasons established analytically and recorded in the decisions log (they are
strict xfails, so the suite notices if they ever start passing):

* criterion 6b: the stated N_n(k)/V_n target is inconsistent with the main
  concentration statement by the deterministic factor
  Gamma(1+alpha+theta)/Gamma(1+theta) (~= 1.128 at alpha=theta=0.5); the
  simulation matches the classical theta-free limit instead.
* criterion 8b: P(V = m at horizon 1e4) in the bounded regime is exactly
  0.97356 (three-state chain law), below the stated 0.99; the simulator
  matches the exact value (asserted in the companion test).

Kernel JIT compilation happens once in a session fixture and is excluded
from the per-criterion timings.
"""

import math
import time
from collections import Counter
from pathlib import Path

import numpy as np
import pytest
from scipy.special import gammaln

from gcrp import _kernels, cli, harness
from gcrp import normalizers as nz
from gcrp.martingales import run_tracked
from gcrp.model import validate_params
from gcrp.oracle import compare_to_mc, enumerate_laws
from gcrp.rng import derive_replica_seed

BASE_SEED = 20260810

# mixed Polynomial-regime grid for the exact-identity and audit criteria
GRID_PARAMS = [
    (0.25, -0.15), (0.25, 0.5), (0.25, 2.0),
    (0.5, -0.15), (0.5, 0.5), (0.5, 2.0),
    (0.75, -0.15), (0.75, 0.5), (0.75, 2.0),
    (0.75, -0.25),
]
GRID_HORIZONS = [1_000, 3_162, 10_000, 31_623, 100_000]

_build_times: dict[str, float] = {}


def _report(criterion: str, passed: bool, detail: str, elapsed: float, budget: float):
    status = "PASS" if passed else "FAIL"
    print(f"\nACCEPTANCE {criterion}: {status} - {detail} [{elapsed:.1f}s < {budget:.0f}s]")


def _timed_ensemble(key, *args, **kwargs):
    t0 = time.monotonic()
    ens = harness.run_ensemble(*args, **kwargs)
    _build_times[key] = time.monotonic() - t0
    return ens


@pytest.fixture(scope="module")
def tracked_grid():
    t0 = time.monotonic()
    runs = []
    rid = 0
    for alpha, theta in GRID_PARAMS:
        p = validate_params(alpha, theta)
        for h in GRID_HORIZONS:
            runs.append(run_tracked(p, h, seed=BASE_SEED, replica_id=rid,
                                    k_max_m=10, audit=True))
            rid += 1
    _build_times["tracked_grid"] = time.monotonic() - t0
    assert len(runs) == 50
    return runs


@pytest.fixture(scope="module")
def ens_a5():
    return _timed_ensemble("ens_a5", validate_params(0.5, 0.5), 10**5, 1000,
                           BASE_SEED, k_max_hist=8)


@pytest.fixture(scope="module")
def ens_a25():
    return _timed_ensemble("ens_a25", validate_params(0.25, 0.5), 10**5, 1000,
                           BASE_SEED, k_max_hist=1)


@pytest.fixture(scope="module")
def ens_a75():
    return _timed_ensemble("ens_a75", validate_params(0.75, 0.5), 10**5, 1000,
                           BASE_SEED, k_max_hist=1)


@pytest.fixture(scope="module")
def ens_enk():
    return _timed_ensemble("ens_enk", validate_params(0.5, 0.5), 10**4, 10**4,
                           BASE_SEED, k_max_hist=5)


@pytest.fixture(scope="module")
def ens_big():
    return _timed_ensemble("ens_big", validate_params(0.5, 0.5), 10**6, 100,
                           BASE_SEED, k_max_hist=35)


@pytest.fixture(scope="module")
def oracle_eq():
    """Criterion-2 data: per parameter set, TVs and chi-square p-values for
    V_n and N_n(1), n = 4..8, against exhaustive enumeration (1e6 replicas)."""
    t0 = time.monotonic()
    out = {}
    n_rep = 10**6
    for alpha, theta in [(0.5, 0.5), (0.25, 1.0), (0.75, -0.25)]:
        p = validate_params(alpha, theta)
        seeds = np.array(
            [derive_replica_seed(BASE_SEED, r) for r in range(n_rep)],
            dtype=np.uint64,
        )
        out_v = np.zeros((n_rep, 8), dtype=np.int16)
        out_n1 = np.zeros((n_rep, 8), dtype=np.int16)
        _kernels.sim_small_batch(alpha, theta, 0, 8, seeds, out_v, out_n1)
        laws = enumerate_laws(p, 8)
        rows = []
        for n in range(4, 9):
            cmp = compare_to_mc(
                laws[n],
                dict(Counter(out_v[:, n - 1].tolist())),
                dict(Counter(out_n1[:, n - 1].tolist())),
                n_rep,
            )
            rows.append(cmp)
        out[(alpha, theta)] = rows
    _build_times["oracle_eq"] = time.monotonic() - t0
    return out


def test_criterion_1_exact_identities(tracked_grid):
    """50 mixed-grid paths: all identity residuals <= 1e-9 relative."""
    t0 = time.monotonic()
    worst = max(tr.max_residual() for tr in tracked_grid)
    elapsed = time.monotonic() - t0 + _build_times["tracked_grid"]
    _report("1 exact-identities", worst <= 1e-9,
            f"max residual {worst:.2e} over 50 paths, k <= 10", elapsed, 30)
    assert worst <= 1e-9
    assert elapsed < 30


def test_criterion_2_oracle_equivalence(oracle_eq):
    """Simulator marginals match exhaustive enumeration within TV 0.005."""
    t0 = time.monotonic()
    worst = 0.0
    for rows in oracle_eq.values():
        for cmp in rows:
            worst = max(worst, cmp.tv_v, cmp.tv_n1)
    elapsed = time.monotonic() - t0 + _build_times["oracle_eq"]
    _report("2 oracle-equivalence", worst <= 0.005,
            f"worst TV {worst:.4f} over 3 parameter sets, n=4..8", elapsed, 120)
    assert worst <= 0.005
    assert elapsed < 120


def test_criterion_2_chi_square_consistency(oracle_eq):
    """Distribution-level agreement: chi-square p-values above 1e-3."""
    worst = min(
        min(c.chi_square_p_v, c.chi_square_p_n1)
        for rows in oracle_eq.values()
        for c in rows
    )
    assert worst > 1e-3


def test_criterion_3_martingale_audits(tracked_grid):
    """Per-step increment/variance bound audits: zero violations."""
    t0 = time.monotonic()
    total = np.zeros(5, dtype=np.int64)
    margin = np.zeros(5)
    for tr in tracked_grid:
        total += tr.viol_counts
        margin = np.maximum(margin, tr.viol_margin)
    elapsed = time.monotonic() - t0
    _report("3 martingale-audits", int(total.sum()) == 0,
            f"violations {total.tolist()}, worst margins "
            f"{np.round(margin, 3).tolist()}", elapsed, 30)
    assert int(total.sum()) == 0
    assert np.all(margin <= 1.0)


def test_criterion_4_envelope_exponent(ens_a25, ens_a5, ens_a75):
    """Fitted decay slope of std(V_m/phi_m - vhat) equals -alpha/2 +- 0.15."""
    t0 = time.monotonic()
    results = []
    ok = True
    for ens in (ens_a25, ens_a5, ens_a75):
        slope = harness.envelope_decay_slope(ens, 100, 10_000)
        target = -ens.params.alpha / 2.0
        results.append((ens.params.alpha, slope, target))
        ok &= abs(slope - target) <= 0.15
    elapsed = (time.monotonic() - t0 + _build_times["ens_a25"]
               + _build_times["ens_a5"] + _build_times["ens_a75"])
    detail = "; ".join(f"a={a}: {s:.3f} vs {t:.3f}" for a, s, t in results)
    _report("4 envelope-exponent", ok, detail, elapsed, 300)
    for a, s, t in results:
        assert abs(s - t) <= 0.15, (a, s, t)
    assert elapsed < 300


def test_criterion_5_tail_bounds(ens_a5, ens_enk, ens_big):
    """Empirical frequencies never exceed theoretical bounds + Wilson margin
    for the envelope, sup-tail, size-class events and main concentration."""
    t0 = time.monotonic()
    p = ens_a5.params
    c = nz.compute_constants(p)
    reports = []
    reports.append(harness.check_thm_V(ens_a5, math.exp(-c.K) / 2, constants=c))
    reports.append(harness.check_vm_tail(ens_a5, constants=c))
    for a_lvl in (0.0, 1.0, 2.0):
        reports.append(harness.check_enk_events(ens_enk, a_lvl, 5, constants=c))
    main5 = harness.check_main(ens_a5, 0.3, 1.0, constants=c)
    reports.append(main5)
    reports.append(harness.check_corollary(ens_big, constants=c))
    ok = all(r.verdict == "PASS" for r in reports)

    # stability of the fitted constant across one decade of n (the theorem
    # asserts an n-free constant)
    main6 = harness.check_main(ens_big, 0.3, 1.0, constants=c)
    ratio = main5.details["C_emp"] / main6.details["C_emp"]
    ok &= 0.3 <= ratio <= 3.0

    # k=1 dominance: counts over c g_1 n^alpha track vhat within 5% (median)
    g1 = math.exp(gammaln(1 - p.alpha) - gammaln(2.0))
    na = float(ens_big.horizon) ** p.alpha
    gap = np.abs(
        ens_big.final_hist[:, 0] / (c.c_main * g1 * na) / ens_big.vhat_star - 1.0
    )
    dom = float(np.median(gap))
    ok &= dom <= 0.05

    elapsed = (time.monotonic() - t0 + _build_times["ens_a5"]
               + _build_times["ens_enk"] + _build_times["ens_big"])
    detail = (
        "; ".join(f"{r.name}:{r.verdict}" for r in reports)
        + f"; C_emp ratio {ratio:.2f}; k=1 dominance gap {dom:.3f}"
    )
    _report("5 tail-bounds", ok, detail, elapsed, 600)
    for r in reports:
        assert r.verdict == "PASS", (r.name, r.violations, r.trials, r.bound)
    assert 0.3 <= ratio <= 3.0
    assert dom <= 0.05
    assert elapsed < 600


def test_criterion_6a_power_law_slope(ens_big):
    """Slope of ln median N_n(k) vs ln k equals -(1+alpha) +- 0.1."""
    t0 = time.monotonic()
    slope = harness.power_law_slope(ens_big, 2, 30)
    elapsed = time.monotonic() - t0 + _build_times["ens_big"]
    ok = abs(slope + 1.5) <= 0.1
    _report("6a power-law-slope", ok, f"slope {slope:.3f} vs -1.5 +- 0.1",
            elapsed, 600)
    assert ok
    assert elapsed < 600


def test_criterion_6c_lln_classical_normalization(ens_big):
    """Companion: the ratios match the main-theorem-consistent (classical)
    constant alpha/Gamma(1-alpha) * Gamma(k-alpha)/Gamma(k+1) within 5%."""
    rep = harness.check_lln_ratio(ens_big, 5, rel_tol=0.05)
    gaps = np.asarray(rep.details["classical_gaps"])
    print(f"\nACCEPTANCE 6c lln-classical: "
          f"{'PASS' if np.all(gaps <= 0.05) else 'FAIL'} - gaps "
          f"{np.round(gaps, 4).tolist()}")
    assert np.all(gaps <= 0.05)


@pytest.mark.xfail(
    strict=True,
    reason="stated target c(alpha,theta) Gamma(k-alpha)/Gamma(k+1) for "
           "N_n(k)/V_n is inconsistent with the main concentration statement "
           "by the factor Gamma(1+alpha+theta)/Gamma(1+theta) ~= 1.128; the "
           "chain converges to the classical theta-free limit instead "
           "(see decisions log)",
)
def test_criterion_6b_lln_ratio_as_stated(ens_big):
    rep = harness.check_lln_ratio(ens_big, 5, rel_tol=0.05)
    gaps = np.asarray(rep.details["gaps"])
    print(f"\nACCEPTANCE 6b lln-as-stated: "
          f"{'PASS' if rep.verdict == 'PASS' else 'FAIL'} - gaps vs stated "
          f"target {np.round(gaps, 4).tolist()} (deterministic offset "
          f"{rep.details['normalization_factor']:.4f})")
    assert rep.verdict == "PASS"


def test_criterion_7_gamma_audit():
    """Zero violations across all inequality sweeps; fitted constants finite."""
    from gcrp.gamma_audit import run_all

    t0 = time.monotonic()
    results = run_all(validate_params(0.5, 0.5))
    elapsed = time.monotonic() - t0
    ok = all(r.passed for r in results)
    fitted = {
        f"{r.lemma_id}.{k}": round(v, 4)
        for r in results for k, v in r.fitted.items()
    }
    _report("7 gamma-audit", ok,
            f"{len(results)} sweeps, fitted {fitted}", elapsed, 10)
    assert ok
    assert all(math.isfinite(v) for v in fitted.values())
    assert elapsed < 10


def _bounded_run(n_replicas: int, horizon: int) -> np.ndarray:
    p = validate_params(-0.5, 1.5)
    cps = np.array([horizon], dtype=np.int64)
    vs = np.zeros(n_replicas, dtype=np.int64)
    for r in range(n_replicas):
        counts = np.zeros(horizon + 2, dtype=np.int64)
        tree = np.zeros(horizon + 2)
        cp_v = np.zeros(1, dtype=np.int64)
        cp_h = np.zeros((1, 1), dtype=np.int64)
        cp_t = np.zeros(1, dtype=np.int64)
        _kernels.sim_kernel(p.alpha, p.theta, p.m, horizon,
                            np.uint64(derive_replica_seed(BASE_SEED, r)),
                            cps, 1, counts, tree, cp_v, cp_h, cp_t)
        vs[r] = cp_v[0]
    return vs


def _exact_bounded_prob(horizon: int) -> float:
    """Exact P(V_horizon = 3): the part count alone is a Markov chain."""
    a, t = -0.5, 1.5
    probs = {1: 1.0, 2: 0.0, 3: 0.0}
    for n in range(1, horizon):
        nxt = {1: 0.0, 2: 0.0, 3: 0.0}
        for v, pr in probs.items():
            w = 0.0 if v == 3 else (a * v + t) / (n + t)
            nxt[v] += pr * (1.0 - w)
            if v < 3:
                nxt[v + 1] += pr * w
        probs = nxt
    return probs[3]


@pytest.fixture(scope="module")
def bounded_vs():
    t0 = time.monotonic()
    vs = _bounded_run(100, 10**4)
    _build_times["bounded"] = time.monotonic() - t0
    return vs


def test_criterion_8a_bounded_cap_and_log_regime(bounded_vs):
    """Bounded regime never exceeds m; logarithmic regime tracks theta ln n."""
    t0 = time.monotonic()
    assert int(bounded_vs.max()) <= 3  # V is nondecreasing below the cap

    ratios = []
    for r in range(100):
        counts = np.zeros(10**6 + 2, dtype=np.int64)
        tree = np.zeros(10**6 + 2)
        cps = np.array([10**6], dtype=np.int64)
        cp_v = np.zeros(1, dtype=np.int64)
        cp_h = np.zeros((1, 1), dtype=np.int64)
        cp_t = np.zeros(1, dtype=np.int64)
        _kernels.sim_kernel(0.0, 2.0, 0, 10**6,
                            np.uint64(derive_replica_seed(BASE_SEED + 1, r)),
                            cps, 1, counts, tree, cp_v, cp_h, cp_t)
        ratios.append(cp_v[0] / math.log(10**6))
    med = float(np.median(ratios))
    ok = abs(med / 2.0 - 1.0) <= 0.25
    elapsed = time.monotonic() - t0 + _build_times["bounded"]
    _report("8a regimes", ok and int(bounded_vs.max()) <= 3,
            f"bounded max V {int(bounded_vs.max())} <= 3; "
            f"log-regime median V/ln n = {med:.3f} vs theta=2", elapsed, 600)
    assert ok


def test_criterion_8c_bounded_frequency_matches_exact_law():
    """Companion: the simulated convergence frequency agrees with the exact
    three-state chain law P(V_{1e4} = 3) = 0.97356 within 4 sigma."""
    vs = _bounded_run(2000, 10**4)
    freq = float(np.mean(vs == 3))
    exact = _exact_bounded_prob(10**4)
    sigma = math.sqrt(exact * (1 - exact) / len(vs))
    print(f"\nACCEPTANCE 8c bounded-exact: "
          f"{'PASS' if abs(freq - exact) <= 4 * sigma else 'FAIL'} - "
          f"freq {freq:.4f} vs exact {exact:.5f} (4 sigma = {4*sigma:.4f})")
    assert abs(freq - exact) <= 4 * sigma


@pytest.mark.xfail(
    strict=True,
    reason="P(V = m at horizon 1e4) is exactly 0.97356 for "
           "(alpha,theta)=(-0.5,1.5) (three-state chain law), below the "
           "stated 0.99; the 0.99 level is reached near horizon 1e5 "
           "(see decisions log)",
)
def test_criterion_8b_bounded_frequency_as_stated(bounded_vs):
    freq = float(np.mean(bounded_vs == 3))
    print(f"\nACCEPTANCE 8b bounded-as-stated: "
          f"{'PASS' if freq >= 0.99 else 'FAIL'} - V=3 frequency {freq:.3f} "
          f"vs stated 0.99 (exact law: {_exact_bounded_prob(10**4):.5f})")
    assert freq >= 0.99


def test_criterion_9_reproducibility(tmp_path):
    """Byte-identical outputs for identical manifests, end to end."""
    t0 = time.monotonic()
    sim_args = ["simulate", "--alpha", "0.5", "--theta", "0.5", "--n", "20000",
                "--replicas", "5", "--seed", str(BASE_SEED)]
    ver_args = ["verify", "vm", "--alpha", "0.5", "--theta", "0.5",
                "--n", "20000", "--replicas", "300", "--seed", str(BASE_SEED)]
    trees = []
    for tag in ("x", "y"):
        d_sim = tmp_path / f"sim_{tag}"
        d_ver = tmp_path / f"ver_{tag}"
        assert cli.main(sim_args + ["--out", str(d_sim)]) == 0
        assert cli.main(ver_args + ["--out", str(d_ver)]) == 0
        tree = {}
        for kind, d in (("sim", d_sim), ("ver", d_ver)):
            for f in sorted(Path(d).iterdir()):
                tree[f"{kind}/{f.name}"] = f.read_bytes()
        trees.append(tree)
    ok = trees[0] == trees[1]
    elapsed = time.monotonic() - t0
    _report("9 reproducibility", ok,
            f"{len(trees[0])} files byte-identical across reruns", elapsed, 120)
    assert ok
