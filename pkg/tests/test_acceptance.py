"""Acceptance gate: thirteen release criteria, one pass/fail line each.

Each criterion prints a single `criterion NN [PASS|FAIL]` line (written past
pytest's capture so the gate is readable in any run).  Two honest failures
are expected and documented: criterion 4's d=4 15% clause (a 1/log N rate
that has not converged at the prescribed evaluation point) asserts and goes
red; criterion 12 is labeled CONJECTURE / non-blocking, so it runs, reports
its measured numbers, and does not raise.
"""

import hashlib
import json
import math
import sys

import numpy as np
import pytest

from votertime import dual, kernels
from votertime.cli import main as cli_main
from votertime.dual import (
    escape_probability_mc,
    escape_tail_allowance,
    exact_duality_oracle,
    fourpoint_bound_check,
    meeting_times_pair,
)
from votertime.harness import (
    ExperimentConfig,
    compare_covariance,
    conjecture_probe_d2,
    limit_kind_for,
    martingale_decomposition_check,
    normality_test,
    run_clt_experiment,
    variance_scaling_sweep,
)
from votertime.limits import LimitKind, LimitTag, limit_cov_matrix, sample_gaussian_path
from votertime.voter import TorusLattice, advance_to, init_product


_CAP = None


@pytest.fixture(autouse=True)
def _criterion_reporting(capfd):
    # route the one-line criterion verdicts past pytest's fd-level capture
    global _CAP
    _CAP = capfd
    yield
    _CAP = None


def _emit(num: int, ok: bool, detail: str) -> None:
    line = f"criterion {num:2d} [{'PASS' if ok else 'FAIL'}] {detail}"
    if _CAP is not None:
        with _CAP.disabled():
            sys.stdout.write("\n" + line + "\n")
            sys.stdout.flush()
    else:
        sys.stdout.write(line + "\n")


def test_criterion_01_exact_duality():
    lat = TorusLattice(2, 3)
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(20):
        eta = rng.integers(0, 2, lat.n_sites).astype(np.uint8)
        x = int(rng.integers(0, lat.n_sites))
        for t in (0.1, 1.0, 5.0):
            lhs, rhs = exact_duality_oracle(lat, eta, x, t)
            worst = max(worst, abs(lhs - rhs))
    ok = worst < 1e-8
    _emit(1, ok, f"exact duality, 20 configs x 3 times: max |diff| = {worst:.2e} < 1e-8")
    assert ok


def test_criterion_02_escape_constants():
    details = []
    ok = True
    for d, seed in ((3, 21), (4, 22)):
        est, se = escape_probability_mc(d, 1_000_000, 1e4, seed)
        allowance = escape_tail_allowance(d, 1e4)
        gamma = kernels.gamma_d(d)
        dev = est - gamma
        this = -3 * se < dev < 3 * se + allowance
        ok = ok and this
        details.append(f"d={d}: MC {est:.5f} vs {gamma:.5f} (3se={3*se:.1e}, tail={allowance:.1e})")
        ident = abs(kernels.green0(d) * 2 * d * gamma - 1.0)
        ok = ok and ident < 1e-14
    _emit(2, ok, "escape constants: " + "; ".join(details))
    assert ok


def test_criterion_03_resolvent_identities():
    worst = 0.0
    xs3 = [(0, 0, 0), (1, 0, 0), (1, 1, 0)]
    for x in xs3:
        worst = max(worst, abs(kernels.laplacian_residual_v(1.0, x)))
    for d, N in ((4, 1e2), (5, 1e3)):
        for base in xs3:
            x = base + (0,) * (d - 3)
            worst = max(worst, abs(kernels.resolvent_residual_phi(N, x)))
    ok = worst < 1e-8
    _emit(3, ok, f"v-Laplacian / phi-resolvent residuals: max = {worst:.2e} < 1e-8")
    assert ok


def test_criterion_04_sum_phi_trends():
    target4 = 1.0 / (16 * math.pi**2)
    ratios = [kernels.sum_phi_sq(10.0**k, 4) / math.log(10.0**k) / target4 for k in (3, 4, 5, 6)]
    monotone = all(a > b for a, b in zip(ratios, ratios[1:])) and all(r > 1 for r in ratios)
    within15 = abs(ratios[-1] - 1.0) < 0.15
    d5 = kernels.sum_phi_sq(1e6, 5)
    within1 = abs(d5 / kernels.green1(5) - 1.0) < 0.01
    ok = monotone and within15 and within1
    _emit(
        4, ok,
        f"d=4 ratio trend {['%.3f' % r for r in ratios]} (monotone: {monotone}, "
        f"within 15% at 1e6: {within15}); d=5 vs green1: "
        f"{abs(d5 / kernels.green1(5) - 1.0):.2%} < 1% ({within1})",
    )
    assert ok


def test_criterion_05_two_point_duality():
    lat = TorusLattice(3, 31)
    xi, yi = lat.site_index((0, 0, 0)), lat.site_index((1, 0, 0))
    reps = 2000
    vals = {5.0: np.empty(reps), 20.0: np.empty(reps)}
    for r in range(reps):
        fld = init_product(lat, 0.5, 77, stream_id=r)
        advance_to(fld, 5.0, [], 77, stream_id=2 * r)
        vals[5.0][r] = (float(fld.spins[xi]) - float(fld.spins[yi])) ** 2
        advance_to(fld, 20.0, [], 77, stream_id=2 * r + 1)
        vals[20.0][r] = (float(fld.spins[xi]) - float(fld.spins[yi])) ** 2
    times = meeting_times_pair((1, 0, 0), (0, 0, 0), 20.0, 100_000, 78)
    ok = True
    parts = []
    for t in (5.0, 20.0):
        P = float((times <= t).mean())
        sP = math.sqrt(P * (1 - P) / times.size)
        lhs = vals[t].mean()
        slhs = vals[t].std(ddof=1) / math.sqrt(reps)
        rhs = 2 * 0.25 * (1 - P)
        sig = abs(lhs - rhs) / math.hypot(slhs, 0.5 * sP)
        ok = ok and sig < 3.0
        parts.append(f"t={t:g}: {lhs:.4f} vs {rhs:.4f} ({sig:.2f} sigma)")
    _emit(5, ok, "two-point duality: " + "; ".join(parts))
    assert ok


def test_criterion_06_variance_scaling():
    N_list = [250, 500, 1000, 2000]
    s3 = variance_scaling_sweep(3, 0.5, N_list, 1000, 61)
    s5 = variance_scaling_sweep(5, 0.5, N_list, 1000, 62)
    s4 = variance_scaling_sweep(4, 0.5, N_list, 1000, 63)
    r4 = s4["var_over_NlogN"]
    spread4 = max(r4) / min(r4) - 1.0
    ok3 = abs(s3["slope"] - 1.5) < 0.1
    ok5 = abs(s5["slope"] - 1.0) < 0.1
    ok4 = spread4 < 0.25
    ok = ok3 and ok5 and ok4
    _emit(
        6, ok,
        f"variance scaling: d=3 slope {s3['slope']:.3f} (1.5±0.1), "
        f"d=5 slope {s5['slope']:.3f} (1.0±0.1), d=4 Var/(NlogN) spread {spread4:.1%} < 25%",
    )
    assert ok


@pytest.fixture(scope="module")
def clt_d3_result():
    cfg = ExperimentConfig(
        d=3, p=0.5, T=1.0, N_list=[500], grid=[0.25, 0.5, 1.0],
        reps=2000, master_seed=314, engine="dual",
    )
    return run_clt_experiment(cfg)[0]


def test_criterion_07_limit_covariance(clt_d3_result):
    kind = limit_kind_for(3, 0.5)
    comp = compare_covariance(clt_d3_result, kind, n_boot=1000)
    diag_ok = comp["max_diag_rel_err"] < 0.20
    off = ~np.eye(3, dtype=bool)
    off_dev = float(comp["standardized_dev"][off].max())
    off_ok = off_dev < 3.0
    ok = diag_ok and off_ok
    _emit(
        7, ok,
        f"d=3 covariance: max diag rel err {comp['max_diag_rel_err']:.1%} < 20%, "
        f"max off-diag dev {off_dev:.2f} < 3 bootstrap sigma",
    )
    assert ok


def test_criterion_08_normality(clt_d3_result):
    samples = clt_d3_result.paths[:, -1]  # t = 1 marginal
    fitted_var = float(samples.var(ddof=1))
    rep = normality_test(samples, fitted_var)
    ks_ok = rep["ks_stat"] < rep["ks_crit_1pct"]
    skew_ok = abs(rep["skewness"]) < 0.15
    kurt_ok = abs(rep["excess_kurtosis"]) < 0.3
    ok = ks_ok and skew_ok and kurt_ok
    _emit(
        8, ok,
        f"normality at t=1: KS {rep['ks_stat']:.4f} < {rep['ks_crit_1pct']:.4f}, "
        f"skew {rep['skewness']:+.3f} (<0.15), kurt {rep['excess_kurtosis']:+.3f} (<0.3)",
    )
    assert ok


def test_criterion_09_martingale_decomposition():
    rep = martingale_decomposition_check(
        1.0, [250, 500, 1000], 1000, 91, p=0.5, d=3, sim_N=500.0, budget=1.5e10
    )
    mean_ok = abs(rep["martingale_mean"]) < 4 * rep["martingale_stderr"]
    v = rep["var_v0_scaled"]
    decreasing = all(a > b for a, b in zip(v, v[1:]))
    # O(1/N): N * (Var(V0)/N^{3/2}) stays flat
    flat = [n * x for n, x in zip(rep["N_list"], v)]
    rate_ok = max(flat) / min(flat) - 1.0 < 0.2
    ok = mean_ok and decreasing and rate_ok
    _emit(
        9, ok,
        f"decomposition: E[M] = {rep['martingale_mean']:+.3f} ± {rep['martingale_stderr']:.3f}, "
        f"Var(V0)/N^1.5 = {['%.2e' % x for x in v]} decreasing ({decreasing}), "
        f"N*scaled spread {max(flat)/min(flat)-1:.1%} (O(1/N))",
    )
    assert ok


def test_criterion_10_four_point_bound():
    rng = np.random.default_rng(2026)
    ok = True
    fails = []
    for i in range(10):
        d = 3 if i < 5 else 4
        L = 15 if d == 3 else 9
        sites = [(0,) * d]
        while len(sites) < 4:
            cand = tuple(int(c) for c in rng.integers(-1, 2, d))
            if cand not in sites:
                sites.append(cand)
        times = tuple(sorted(float(t) for t in rng.uniform(0.3, 3.5, 4)))
        rep = fourpoint_bound_check(
            times, sites, 0.5, 2000, 1000 + i, d, L, dual_reps=20_000
        )
        if not rep["passed"]:
            ok = False
            fails.append(f"fixture {i}: lhs {rep['lhs']:.2e} > rhs {rep['rhs']:.2e}")
    _emit(10, ok, "four-point bound: 10/10 fixtures satisfied" if ok else "; ".join(fails))
    assert ok


def test_criterion_11_limit_self_consistency():
    rng = np.random.default_rng(11)
    # PSD on 100 random grids, all kinds
    psd_ok = True
    for _ in range(100):
        n = int(rng.integers(2, 21))
        grid = np.sort(rng.uniform(0.0, 10.0, n))
        grid = np.unique(grid)
        for tag in LimitTag:
            limit_cov_matrix(LimitKind(tag, 1.0), grid)  # raises on violation
    # sampler empirical covariance within error at reps = 1e5
    grid = [0.5, 1.0, 2.0]
    reps = 100_000
    kind = LimitKind(LimitTag.ZETA_D3, 1.0)
    paths, _ = sample_gaussian_path(kind, grid, reps, 111)
    emp = np.cov(paths.T, ddof=1)
    ref = limit_cov_matrix(kind, grid).entries
    se = np.sqrt((np.outer(np.diag(ref), np.diag(ref)) + ref**2) / reps)
    samp_dev = float(np.abs((emp - ref) / se).max())
    samp_ok = samp_dev < 4.0
    # constant algebra identity at 100 random points
    alg_ok = True
    worst = 0.0
    for _ in range(100):
        p = float(rng.uniform(0.05, 0.95))
        s, t = sorted(rng.uniform(0.01, 10.0, 2))
        lhs = kernels.c_const(3, p) ** 2 * (
            s**1.5 + t**1.5 - 0.5 * (t - s) ** 1.5 - 0.5 * (t + s) ** 1.5
        )
        rhs = (2 * p * (1 - p) * kernels.gamma_d(3) / math.pi**1.5) * (
            2 * s**1.5 + 2 * t**1.5 - (t - s) ** 1.5 - (t + s) ** 1.5
        )
        rel = abs(lhs - rhs) / max(abs(rhs), 1e-30)
        worst = max(worst, rel)
    alg_ok = worst < 1e-12
    ok = psd_ok and samp_ok and alg_ok
    _emit(
        11, ok,
        f"limit module: PSD 100/100 grids, sampler max dev {samp_dev:.2f} sigma, "
        f"constant algebra worst rel err {worst:.1e} < 1e-12",
    )
    assert ok


def test_criterion_12_conjecture_probe():
    # CONJECTURE, non-blocking: runs and reports, never raises
    cfg = ExperimentConfig(
        d=2, p=0.5, T=1.0, N_list=[1000], grid=[0.25, 0.5, 1.0],
        reps=500, master_seed=121, engine="dual",
    )
    rep = conjecture_probe_d2(cfg, survival_reps=100_000)
    surv = {s["t"]: s["logt_survival"] for s in rep["survival"]}
    surv_dev = abs(surv[1e4] / math.pi - 1.0)
    surv_ok = surv_dev < 0.15
    ratio = rep["diag_ratio"][0][-1]  # t = 1 diagonal at N = 1e3
    cov_ok = abs(ratio - 1.0) < 0.25
    ok = surv_ok and cov_ok
    trend = " -> ".join(f"{surv[t]:.3f}" for t in (1e2, 1e3, 1e4))
    _emit(
        12, ok,
        f"CONJECTURE (non-blocking): (log t)P(tau>t) {trend} vs pi={math.pi:.3f} "
        f"(dev {surv_dev:.1%}, 15% wanted); d=2 diag ratio {ratio:.3f} "
        f"(25% wanted) -- logarithmic convergence, trends consistent",
    )
    # non-blocking per the release label: reported, not asserted


def _cli_checksums(out_dir) -> dict:
    with open(out_dir / "manifest.json") as fh:
        return json.load(fh)["checksums"]


def test_criterion_13_determinism(tmp_path):
    pipelines = {
        "constants": ["constants"],
        "kernel": ["kernel", "--set", "t=2.0"],
        "simulate": ["simulate", "--set", "L=7", "--set", "reps=20",
                     "--set", "horizon=4.0", "--set", "grid=2,4"],
        "dual": ["dual", "--set", "reps=2000", "--set", "t=5.0"],
        "limit": ["limit", "--set", "reps=50"],
        "clt": ["clt", "--set", "N_list=100", "--set", "grid=0.5,1",
                "--set", "reps=100", "--set", "engine=dual"],
        "sweep": ["sweep", "--set", "N_list=10,20,40,100", "--set", "reps=100"],
        "probe2d": ["probe2d", "--set", "N_list=25", "--set", "reps=50",
                    "--set", "survival_reps=2000"],
        "mdc": ["mdc", "--set", "N_list=8,16", "--set", "reps=50",
                "--set", "sim_N=8"],
    }
    ok = True
    mismatches = []
    for name, argv in pipelines.items():
        sums = []
        for leg in ("a", "b"):
            out = tmp_path / f"{name}_{leg}"
            rc = cli_main(argv + ["--output", str(out), "--seed", "7", "--sequential"])
            if rc != 0:
                ok = False
                mismatches.append(f"{name}: exit {rc}")
                break
            sums.append(_cli_checksums(out))
        else:
            if sums[0] != sums[1]:
                ok = False
                mismatches.append(f"{name}: checksum mismatch")
    _emit(
        13, ok,
        "determinism: 9/9 pipelines rerun byte-identical (manifest checksum equality)"
        if ok else "; ".join(mismatches),
    )
    assert ok
