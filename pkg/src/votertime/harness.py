"""Experiment orchestration: scaled occupation-path ensembles vs limit laws.

Confronts Monte-Carlo samples of the scaled centered occupation time
Lambda^N_t = (xi_{tN} - p t N) / h_d(N) with the limit Gaussian processes:
variance-scaling sweeps, covariance comparison with bootstrap errors,
normality tests, the martingale/potential decomposition check, the d=2
conjecture probe, and the finite-size torus advisor.

Engines: "torus" runs the forward voter model on a torus of side L (advisor
or explicit, budget-guarded); "dual" samples the same law on the infinite
lattice through backward dual lineages, with no torus wrap bias and far
fewer events at large horizons.  Variance sweeps default to the dual
double-integral estimator, which is the only route that reaches the
prescribed N range at desk scale.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import kernels, dual
from ._rng import generator
from .limits import LimitKind, LimitTag, limit_cov_matrix
from .voter import TorusLattice, OccupationRecorder, init_product, advance_to

DEFAULT_BUDGET = 2e10  # expected voter copy events per operation


class BudgetExceededError(RuntimeError):
    """Estimated event count above the configured budget."""

    def __init__(self, estimate: float, budget: float, suggestion: str):
        self.estimate = estimate
        self.budget = budget
        super().__init__(
            f"estimated {estimate:.3e} events exceeds budget {budget:.3e}; {suggestion}"
        )


@dataclass
class ExperimentConfig:
    d: int
    p: float
    T: float
    N_list: list
    grid: list  # macroscopic times in (0, T]
    L: int = 0  # 0 = auto via advisor (torus engine only)
    reps: int = 500
    master_seed: int = 0
    engine: str = "torus"  # "torus" | "dual"
    budget: float = DEFAULT_BUDGET
    safety_k: float = 6.0
    output_dir: str | None = None

    def __post_init__(self) -> None:
        if self.d < 2:
            raise ValueError("dimension must be >= 2")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("density must lie in [0, 1]")
        g = list(self.grid)
        if any(b <= a for a, b in zip(g, g[1:])) or not g:
            raise ValueError("grid must be nonempty and strictly increasing")
        if g[0] <= 0 or g[-1] > self.T:
            raise ValueError("grid must lie in (0, T]")
        if any(n < 4 for n in self.N_list) or not self.N_list:
            raise ValueError("every N must be >= 4")
        if self.engine not in ("torus", "dual"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")


@dataclass
class RunResult:
    N: float
    grid: np.ndarray  # macroscopic times
    paths: np.ndarray  # reps x grid, scaled centered occupation paths
    mean: np.ndarray
    mean_stderr: np.ndarray
    cov: np.ndarray
    events: int
    wall_time: float
    manifest: dict = field(default_factory=dict)


def finite_size_advisor(
    d: int,
    N: float,
    T: float,
    safety_k: float = 6.0,
    budget: float | None = None,
    reps: int = 1,
) -> dict:
    """Torus side for a horizon-NT run: L = smallest odd >= k*sqrt(2NT).

    The per-coordinate displacement variance of the walk over time t is 2t;
    the wrap bound is the union Gaussian tail over d coordinates of reaching
    L/2.  If a budget is given, L is capped so 2d L^d T N reps stays within
    it (never below 3).
    """
    if safety_k < 1:
        raise ValueError("safety factor must be >= 1")
    sigma = math.sqrt(2.0 * N * T)
    L = int(math.ceil(safety_k * sigma))
    if L % 2 == 0:
        L += 1
    L = max(L, 3)
    capped = False
    if budget is not None:
        while L > 3 and 2 * d * L**d * T * N * reps > budget:
            L -= 2
            capped = True
    z = (L / 2.0) / sigma
    wrap_bound = min(2.0 * d * math.exp(-0.5 * z * z), 1.0)
    return {"L": L, "wrap_bound": wrap_bound, "capped": capped}


def _torus_paths(config: ExperimentConfig, N: float, L: int) -> tuple[np.ndarray, int]:
    lat = TorusLattice(config.d, L)
    tgrid = np.asarray(config.grid, dtype=np.float64) * N
    raw = np.empty((config.reps, tgrid.size))
    events = 0
    for rep in range(config.reps):
        fld = init_product(lat, config.p, config.master_seed, stream_id=rep)
        rec = OccupationRecorder(site=0, grid=tgrid, density_p=config.p)
        events += advance_to(
            fld, float(config.T * N), [rec], config.master_seed, stream_id=rep
        )
        raw[rep] = rec.values
    return raw, events


def run_clt_experiment(config: ExperimentConfig) -> list[RunResult]:
    """One RunResult per N: scaled centered occupation paths at the grid."""
    results = []
    for N in config.N_list:
        t0 = time.time()
        tgrid = np.asarray(config.grid, dtype=np.float64) * N
        if config.engine == "torus":
            if config.L:
                L = config.L
            else:
                L = finite_size_advisor(
                    config.d, N, config.T, config.safety_k,
                    budget=config.budget, reps=config.reps,
                )["L"]
            estimate = 2 * config.d * L**config.d * config.T * N * config.reps
            if estimate > config.budget:
                raise BudgetExceededError(
                    estimate, config.budget,
                    "reduce N, reps, T, or L, or raise --budget",
                )
            raw, events = _torus_paths(config, N, L)
        else:
            L = 0
            raw, events = dual.occupation_paths_dual(
                config.d, float(config.T * N), tgrid, config.p,
                config.reps, config.master_seed,
            )
        h = kernels.h_scale(config.d, float(N))
        paths = (raw - config.p * tgrid[None, :]) / h
        mean = paths.mean(axis=0)
        mean_stderr = paths.std(axis=0, ddof=1) / math.sqrt(config.reps)
        cov = np.cov(paths.T, ddof=1).reshape(tgrid.size, tgrid.size)
        results.append(
            RunResult(
                N=float(N),
                grid=np.asarray(config.grid, dtype=np.float64),
                paths=paths,
                mean=mean,
                mean_stderr=mean_stderr,
                cov=cov,
                events=events,
                wall_time=time.time() - t0,
                manifest={
                    "config": {k: v for k, v in asdict(config).items() if k != "output_dir"},
                    "N": float(N),
                    "L": L,
                    "engine": config.engine,
                    "events": events,
                },
            )
        )
    return results


def limit_kind_for(d: int, p: float) -> LimitKind:
    """The limit process (with its C_d multiplier) for dimension d."""
    if d == 2:
        return LimitKind(LimitTag.VARTHETA_D2, math.sqrt(2.0 * p * (1.0 - p)))
    if d == 3:
        return LimitKind(LimitTag.ZETA_D3, kernels.c_const(3, p))
    return LimitKind(LimitTag.BROWNIAN, kernels.c_const(d, p))


def compare_covariance(
    result: RunResult, kind: LimitKind, n_boot: int = 1000, boot_seed: int = 0
) -> dict:
    """Empirical path covariance vs scale_c^2 * cov_kind, bootstrap errors."""
    grid = result.grid
    if grid.size < 3:
        raise ValueError("need a grid of >= 3 points for the comparison")
    ref = limit_cov_matrix(kind, grid).entries
    paths = result.paths
    reps = paths.shape[0]
    rng = generator(0, boot_seed, "clt")
    boots = np.empty((n_boot, grid.size, grid.size))
    for b in range(n_boot):
        idx = rng.integers(0, reps, reps)
        boots[b] = np.cov(paths[idx].T, ddof=1)
    stderr = boots.std(axis=0, ddof=1)
    dev = np.abs(result.cov - ref) / np.where(stderr > 0, stderr, np.inf)
    diag_rel = np.abs(np.diag(result.cov) - np.diag(ref)) / np.where(
        np.diag(ref) != 0, np.abs(np.diag(ref)), np.inf
    )
    return {
        "empirical": result.cov,
        "reference": ref,
        "stderr": stderr,
        "max_standardized_dev": float(dev.max()),
        "max_diag_rel_err": float(diag_rel.max()) if np.diag(ref).any() else 0.0,
        "diag_rel_err": diag_rel,
        "standardized_dev": dev,
    }


def normality_test(samples, ref_var: float) -> dict:
    """One-sample KS against N(0, ref_var), plus skewness/excess kurtosis."""
    from scipy import stats

    samples = np.asarray(samples, dtype=np.float64)
    n = samples.size
    if n < 500:
        raise ValueError("need >= 500 samples")
    if ref_var == 0.0:
        degenerate = bool(np.any(samples != 0.0))
        return {
            "ks_stat": 0.0 if not degenerate else 1.0,
            "ks_crit_1pct": 1.63 / math.sqrt(n),
            "skewness": 0.0,
            "skewness_se": math.sqrt(6.0 / n),
            "excess_kurtosis": 0.0,
            "kurtosis_se": math.sqrt(24.0 / n),
            "degenerate_reference": degenerate,
            "n": n,
        }
    ks = stats.kstest(samples, "norm", args=(0.0, math.sqrt(ref_var)))
    return {
        "ks_stat": float(ks.statistic),
        "ks_pvalue": float(ks.pvalue),
        "ks_crit_1pct": 1.63 / math.sqrt(n),
        "skewness": float(stats.skew(samples)),
        "skewness_se": math.sqrt(6.0 / n),
        "excess_kurtosis": float(stats.kurtosis(samples)),
        "kurtosis_se": math.sqrt(24.0 / n),
        "degenerate_reference": False,
        "n": n,
    }


def variance_scaling_sweep(
    d: int,
    p: float,
    N_list,
    reps: int,
    master_seed: int,
    engine: str = "dual_integral",
    budget: float = DEFAULT_BUDGET,
) -> dict:
    """Fitted log-log slope of Var(xi_N - pN) against N.

    engine "dual_integral" evaluates each variance by the dual double
    integral (exact infinite-lattice law); "torus" runs forward ensembles
    with the advisor torus, subject to the budget.  For d=4 the report also
    carries Var/(N log N) for the constancy check.
    """
    N_list = sorted(float(n) for n in N_list)
    if len(N_list) < 4 or N_list[-1] < 8 * N_list[0]:
        raise ValueError("need >= 4 values of N spanning >= 8x range")
    if p in (0.0, 1.0):
        return {"degenerate": True, "variances": [0.0] * len(N_list), "N_list": N_list}
    variances = []
    stderrs = []
    for i, N in enumerate(N_list):
        if engine == "dual_integral":
            v, se = dual.occupation_var_dual(N, p, reps, master_seed, d=d, n_offsets=160)
        elif engine == "torus":
            cfg = ExperimentConfig(
                d=d, p=p, T=1.0, N_list=[N], grid=[1.0], reps=reps,
                master_seed=master_seed, engine="torus", budget=budget,
            )
            res = run_clt_experiment(cfg)[0]
            h2 = kernels.h_scale(d, N) ** 2
            v = float(res.paths[:, -1].var(ddof=1)) * h2
            se = v * math.sqrt(2.0 / reps)
        else:
            raise ValueError(f"unknown engine {engine!r}")
        variances.append(v)
        stderrs.append(se)
    logN = np.log(N_list)
    logV = np.log(variances)
    slope, intercept = np.polyfit(logN, logV, 1)
    report = {
        "degenerate": False,
        "N_list": N_list,
        "variances": variances,
        "stderrs": stderrs,
        "slope": float(slope),
        "intercept": float(intercept),
        "engine": engine,
    }
    if d == 4:
        report["var_over_NlogN"] = [
            v / (n * math.log(n)) for v, n in zip(variances, N_list)
        ]
    return report


def v_torus_table(t: float, L: int, d: int) -> np.ndarray:
    """v^L(t, x) = integral_0^t p^L_s(O, x) ds on the torus, via FFT.

    Spectral form: v = (1/n) sum_theta e^{i theta x} (1 - e^{-t lam}) / lam
    with lam(theta) = sum_j 2(1 - cos theta_j); the lam = 0 mode contributes
    t/n.  Shape (L,) * d, origin at index (0,) * d.
    """
    k = 2.0 * math.pi * np.arange(L) / L
    lam1 = 2.0 * (1.0 - np.cos(k))
    lam = np.zeros((L,) * d)
    for j in range(d):
        shape = [1] * d
        shape[j] = L
        lam = lam + lam1.reshape(shape)
    spec = np.empty_like(lam)
    nz = lam > 0
    spec[nz] = (1.0 - np.exp(-t * lam[nz])) / lam[nz]
    spec[~nz] = t
    v = np.fft.ifftn(spec).real
    return v


def martingale_decomposition_check(
    t: float,
    N_list,
    reps: int,
    master_seed: int,
    p: float = 0.5,
    d: int = 3,
    L_list=None,
    sim_N: float | None = None,
    budget: float = DEFAULT_BUDGET,
) -> dict:
    """Decomposition xi_{tN} - p t N = M + V_0 with the wrapped potential.

    V_0 = sum_x (eta_0(x) - p) v^L(tN, x) depends only on the initial field,
    so its variance trend across N (advisor torus side, exact p(1-p) sum v^2
    plus a sampled check) costs no dynamics.  The martingale residual
    M = xi_{tN} - p t N - V_0 is simulated at sim_N (default: the middle N)
    on a budget-capped torus; the decomposition is exact on the torus for
    any L, so the capped side does not bias E[M] = 0.
    """
    N_list = sorted(float(n) for n in N_list)
    if p in (0.0, 1.0):
        return {"degenerate": True}
    var_v0 = []
    var_v0_mc = []
    L_used = []
    for i, N in enumerate(N_list):
        L = int(L_list[i]) if L_list is not None else finite_size_advisor(d, N, t, 6.0)["L"]
        v = v_torus_table(t * N, L, d)
        exact = p * (1.0 - p) * float(np.sum(v * v))
        rng = generator(master_seed, 50_000 + i, "mdc")
        flat = v.ravel()
        samples = np.empty(reps)
        for rep in range(reps):
            eta0 = (rng.random(flat.size) < p).astype(np.float64)
            samples[rep] = float((eta0 - p) @ flat)
        var_v0.append(exact / N**1.5)
        var_v0_mc.append(float(samples.var(ddof=1)) / N**1.5)
        L_used.append(L)
    # martingale residual at one N on a modest torus (E[M] = 0 for any L)
    if sim_N is None:
        sim_N = N_list[len(N_list) // 2]
    adv = finite_size_advisor(d, sim_N, t, 6.0, budget=budget / reps, reps=1)
    L_sim = adv["L"]
    lat = TorusLattice(d, L_sim)
    v = v_torus_table(t * sim_N, L_sim, d)
    flat = v.ravel()
    m_vals = np.empty(reps)
    events = 0
    for rep in range(reps):
        fld = init_product(lat, p, master_seed, stream_id=100_000 + rep)
        v0 = float((fld.spins.astype(np.float64) - p) @ flat)
        rec = OccupationRecorder(
            site=0, grid=np.array([t * sim_N]), density_p=p
        )
        events += advance_to(fld, t * sim_N, [rec], master_seed, stream_id=100_000 + rep)
        m_vals[rep] = rec.values[0] - p * t * sim_N - v0
    m_mean = float(m_vals.mean())
    m_stderr = float(m_vals.std(ddof=1) / math.sqrt(reps))
    report = {
        "degenerate": False,
        "N_list": N_list,
        "L_list": L_used,
        "var_v0_scaled": var_v0,  # Var(V_0)/N^{3/2}, exact p(1-p) sum v^2
        "var_v0_scaled_mc": var_v0_mc,
        "sim_N": float(sim_N),
        "sim_L": L_sim,
        "martingale_mean": m_mean,
        "martingale_stderr": m_stderr,
        "martingale_var_scaled": float(m_vals.var(ddof=1)) / sim_N**1.5,
        "events": events,
    }
    if d == 3:
        from .limits import cov_zeta

        report["reference_var_scaled"] = kernels.c_const(3, p) ** 2 * cov_zeta(t, t)
    return report


def conjecture_probe_d2(
    config: ExperimentConfig,
    survival_t=(1e2, 1e3, 1e4),
    survival_reps: int = 100_000,
) -> dict:
    """d=2 probe of the conjectural limit; all outputs labeled CONJECTURE.

    Runs the scaled experiment with h_2(N) = N/sqrt(log N) against
    C_2^2 cov_vartheta, and estimates (log t) P(tau_xy > t) for neighbours
    against pi.
    """
    if config.d != 2:
        raise ValueError("the conjecture probe requires d = 2")
    results = run_clt_experiment(config)
    kind = limit_kind_for(2, config.p)
    ratios = []
    for res in results:
        ref = np.array([kind.scale_c**2 * kind.cov(s, s) for s in res.grid])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios.append(np.where(ref > 0, np.diag(res.cov) / ref, np.nan))
    survival = []
    for i, tt in enumerate(survival_t):
        est, se = dual.survival_logt(
            (0, 0), (1, 0), float(tt), survival_reps, config.master_seed, stream_id=700 + i
        )
        survival.append({"t": float(tt), "logt_survival": est, "stderr": se})
    return {
        "label": "CONJECTURE",
        "results": results,
        "diag_ratio": [r.tolist() for r in ratios],
        "survival": survival,
        "pi": math.pi,
    }
