"""Command-line entry point: config resolution, dispatch, persistence.

Config resolution order: built-in defaults < JSON config file (--config) <
inline overrides (--set key=value, repeatable).  Unknown keys are rejected
with the list of valid keys.  Outputs are CSV tables (floats at 17
significant digits) plus a manifest.json with the resolved config, master
seed, per-file sha256 checksums, and event counts; every file is written to
a temp name and renamed, and the manifest is written last as the commit
marker.  Exit codes: 0 success, 1 runtime error, 2 usage error, 3 budget
guard refusal.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, kernels, dual, limits, harness
from .harness import (
    BudgetExceededError,
    ExperimentConfig,
    conjecture_probe_d2,
    finite_size_advisor,
    martingale_decomposition_check,
    run_clt_experiment,
    variance_scaling_sweep,
)
from .limits import LimitKind, LimitTag, limit_cov_matrix, sample_gaussian_path
from .voter import TorusLattice, OccupationRecorder, init_product, advance_to

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_BUDGET = 3


class UsageError(ValueError):
    pass


# per-subcommand key schema: name -> (type, default)
SCHEMAS = {
    "constants": {"d": (int, 3), "p": (float, 0.5)},
    "kernel": {"d": (int, 3), "t": (float, 1.0), "L": (int, 0), "kmax": (int, 5)},
    "simulate": {
        "d": (int, 3), "L": (int, 11), "p": (float, 0.5),
        "horizon": (float, 10.0), "reps": (int, 100),
        "grid": (list, [5.0, 10.0]),
    },
    "dual": {
        "d": (int, 3), "p": (float, 0.5), "mode": (str, "meeting"),
        "t": (float, 20.0), "s": (float, 10.0), "reps": (int, 10000),
        "x": (list, [1, 0, 0]), "y": (list, [0, 0, 0]),
        "resolution": (int, 8), "torus_L": (int, 3),
    },
    "limit": {
        "kind": (str, "ZETA_D3"), "scale_c": (float, -1.0),
        "d": (int, 3), "p": (float, 0.5),
        "grid": (list, [0.25, 0.5, 1.0]), "reps": (int, 0),
    },
    "clt": {
        "d": (int, 3), "p": (float, 0.5), "T": (float, 1.0),
        "N_list": (list, [100]), "grid": (list, [0.25, 0.5, 1.0]),
        "L": (int, 0), "reps": (int, 500), "engine": (str, "torus"),
        "samples": (int, 0), "safety_k": (float, 6.0),
    },
    "sweep": {
        "d": (int, 3), "p": (float, 0.5),
        "N_list": (list, [250, 500, 1000, 2000]), "reps": (int, 1000),
        "engine": (str, "dual_integral"),
    },
    "probe2d": {
        "p": (float, 0.5), "N_list": (list, [1000]),
        "grid": (list, [0.25, 0.5, 1.0]), "reps": (int, 500),
        "survival_reps": (int, 100000),
    },
    "mdc": {
        "d": (int, 3), "p": (float, 0.5), "t": (float, 1.0),
        "N_list": (list, [250, 500, 1000]), "reps": (int, 500),
        "sim_N": (float, 0.0),
    },
}

REQUIRED = {"clt": ("d", "p", "N_list")}


def _coerce(key: str, raw, target_type):
    if target_type is list:
        if isinstance(raw, list):
            return [float(v) for v in raw]
        parts = [s for s in str(raw).replace("[", "").replace("]", "").split(",") if s]
        return [float(s) for s in parts]
    try:
        if target_type is int:
            v = int(str(raw))
        elif target_type is float:
            v = float(str(raw))
        else:
            v = str(raw)
    except ValueError as exc:
        raise UsageError(f"key {key!r} expects {target_type.__name__}, got {raw!r}") from exc
    return v


def parse_config(argv):
    """Resolve (namespace, params dict) or raise UsageError."""
    parser = argparse.ArgumentParser(
        prog="votertime",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"votertime {__version__}")
    parser.add_argument("subcommand", choices=sorted(SCHEMAS))
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="inline override, repeatable; applied after the file")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker count (0 = auto); falls back to $VOTERPATH_THREADS")
    parser.add_argument("--seed", type=int, default=0, help="master seed (uint64)")
    parser.add_argument("--output", default=None, help="output directory")
    parser.add_argument("--overwrite", action="store_true",
                        help="allow writing into a directory with existing results")
    parser.add_argument("--sequential", action="store_true",
                        help="strict sequential reduction (bit-exact mode)")
    parser.add_argument("--budget", type=float, default=harness.DEFAULT_BUDGET,
                        help="event-count budget for the guard")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code not in (0, None):
            raise UsageError("argument parsing failed") from exc
        raise
    if args.threads is None:
        args.threads = int(os.environ.get("VOTERPATH_THREADS", "0"))
    schema = SCHEMAS[args.subcommand]
    params = {k: default for k, (_, default) in schema.items()}
    if args.config:
        try:
            with open(args.config) as fh:
                file_vals = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file {args.config}: {exc}") from exc
        if not isinstance(file_vals, dict):
            raise UsageError("config file must hold a JSON object")
        for key, raw in file_vals.items():
            if key not in schema:
                raise UsageError(
                    f"unknown key {key!r} for {args.subcommand}; valid: {sorted(schema)}"
                )
            params[key] = _coerce(key, raw, schema[key][0])
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        if key not in schema:
            raise UsageError(
                f"unknown key {key!r} for {args.subcommand}; valid: {sorted(schema)}"
            )
        params[key] = _coerce(key, raw, schema[key][0])
    for key in REQUIRED.get(args.subcommand, ()):
        if params.get(key) in (None, []):
            raise UsageError(f"{args.subcommand} requires key {key!r}")
    _validate(args.subcommand, params)
    return args, params


def _validate(sub, params):
    p = params.get("p")
    if p is not None and not 0.0 <= p <= 1.0:
        raise UsageError(f"key 'p' must lie in [0, 1], got {p}")
    d = params.get("d")
    if d is not None and d < 1:
        raise UsageError(f"key 'd' must be >= 1, got {d}")
    for key in ("reps", "survival_reps", "samples"):
        if key in params and params[key] < 0:
            raise UsageError(f"key {key!r} must be nonnegative")


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class ResultWriter:
    """Atomic CSV/JSON persistence with a trailing manifest."""

    def __init__(self, out_dir: str, overwrite: bool):
        self.out_dir = out_dir
        self.files: list[str] = []
        os.makedirs(out_dir, exist_ok=True)
        existing = [f for f in os.listdir(out_dir) if not f.startswith(".")]
        if existing and not overwrite:
            raise UsageError(
                f"output directory {out_dir} is not empty; pass --overwrite to reuse it"
            )

    def _commit(self, name: str, payload: str) -> str:
        final = os.path.join(self.out_dir, name)
        tmp = final + ".tmp"
        try:
            with open(tmp, "w") as fh:
                fh.write(payload)
            os.replace(tmp, final)
        except OSError:
            if os.path.exists(tmp):
                os.remove(tmp)
            raise
        self.files.append(final)
        return final

    def write_csv(self, name: str, header: list, rows) -> str:
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(_fmt(v) for v in row))
        return self._commit(name, "\n".join(lines) + "\n")

    def write_json(self, name: str, obj) -> str:
        return self._commit(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def write_manifest(self, manifest: dict) -> str:
        manifest = dict(manifest)
        manifest["checksums"] = {
            os.path.basename(f): _sha256(f) for f in self.files
        }
        return self._commit("manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _run_constants(params, args, writer):
    d, p = params["d"], params["p"]
    if d < 3:
        raise UsageError("constants require d >= 3 (no finite Green value below)")
    gamma = kernels.gamma_d(d)
    green = kernels.green0(d)
    report = {
        "d": d,
        "p": p,
        "gamma_d": gamma,
        "green0": green,
        "c_d": kernels.c_const(d, p),
        "est_error": abs(green * 2 * d * gamma - 1.0),
    }
    if d >= 5:
        report["green1"] = kernels.green1(d)
    if writer:
        writer.write_json("constants.json", report)
    return report, 0


def _run_kernel(params, args, writer):
    d, t, L, kmax = params["d"], params["t"], params["L"], params["kmax"]
    rows = []
    for k in range(-kmax, kmax + 1):
        val = kernels.p1_torus(k, t, L) if L else kernels.p1_kernel(k, t)
        rows.append((k, t, val))
    if writer:
        writer.write_csv("kernel.csv", ["k", "t", "p1"], rows)
    return {"rows": len(rows)}, 0


def _run_simulate(params, args, writer):
    lat = TorusLattice(params["d"], params["L"])
    grid = np.asarray(params["grid"], dtype=np.float64)
    rows = []
    events = 0
    for rep in range(params["reps"]):
        fld = init_product(lat, params["p"], args.seed, stream_id=rep)
        rec = OccupationRecorder(site=0, grid=grid, density_p=params["p"])
        events += advance_to(fld, params["horizon"], [rec], args.seed, stream_id=rep)
        rows.append((rep, *rec.values))
    if writer:
        writer.write_csv(
            "occupation.csv", ["rep"] + [f"xi_{g:g}" for g in grid], rows
        )
    return {"events": events}, events


def _run_dual(params, args, writer):
    d, p, mode = params["d"], params["p"], params["mode"]
    if mode == "meeting":
        x = tuple(int(v) for v in params["x"])
        y = tuple(int(v) for v in params["y"])
        times = np.linspace(params["t"] / 10, params["t"], 10)
        rows = []
        for i, tt in enumerate(times):
            est = dual.meeting_prob_pair(x, y, float(tt), params["reps"], args.seed, stream_id=i)
            rows.append((tt, est.prob, est.stderr))
        if writer:
            writer.write_csv("meeting.csv", ["t", "prob", "stderr"], rows)
        return {"rows": len(rows)}, 0
    if mode == "cov":
        s_grid = np.linspace(0.0, params["s"], 5)
        rows = []
        for i, r in enumerate(s_grid):
            cov, se = dual.cov_eta_dual(
                float(r), params["t"], p, params["reps"], args.seed, d=d, stream_id=i
            )
            rows.append((r, params["t"], cov, se))
        if writer:
            writer.write_csv("cov.csv", ["r", "theta", "cov", "stderr"], rows)
        return {"rows": len(rows)}, 0
    if mode == "oracle":
        lat = TorusLattice(2, params["torus_L"])
        rng = np.random.default_rng(args.seed)
        eta = rng.integers(0, 2, lat.n_sites).astype(np.uint8)
        lhs, rhs = dual.exact_duality_oracle(lat, eta, 0, params["t"])
        report = {"lhs": lhs, "rhs": rhs, "abs_diff": abs(lhs - rhs)}
        if writer:
            writer.write_json("oracle.json", report)
        return report, 0
    raise UsageError(f"dual mode must be meeting|cov|oracle, got {mode!r}")


def _limit_kind(params) -> LimitKind:
    try:
        tag = LimitTag(params["kind"])
    except ValueError as exc:
        raise UsageError(
            f"kind must be one of {[t.value for t in LimitTag]}, got {params['kind']!r}"
        ) from exc
    scale = params["scale_c"]
    if scale < 0:
        d, p = params["d"], params["p"]
        scale = math.sqrt(2 * p * (1 - p)) if tag is LimitTag.VARTHETA_D2 else kernels.c_const(d, p)
    return LimitKind(tag, scale)


def _run_limit(params, args, writer):
    kind = _limit_kind(params)
    grid = np.asarray(params["grid"], dtype=np.float64)
    cm = limit_cov_matrix(kind, grid)
    rows = [
        (grid[i], grid[j], cm.entries[i, j])
        for i in range(grid.size)
        for j in range(grid.size)
    ]
    if writer:
        writer.write_csv("cov_table.csv", ["s", "t", "cov"], rows)
    if params["reps"]:
        paths, jitter = sample_gaussian_path(kind, grid, params["reps"], args.seed)
        if writer:
            writer.write_csv(
                "paths.csv",
                [f"t_{g:g}" for g in grid],
                (tuple(row) for row in paths),
            )
        return {"jitter": jitter, "reps": params["reps"]}, 0
    return {"rows": len(rows)}, 0


def _result_rows(results):
    rows = []
    for res in results:
        for i, s in enumerate(res.grid):
            for j, t in enumerate(res.grid):
                rows.append(
                    (res.N, s, t, res.mean[i], res.mean_stderr[i], res.cov[i, j])
                )
    return rows


def _run_clt(params, args, writer):
    cfg = ExperimentConfig(
        d=params["d"], p=params["p"], T=params["T"],
        N_list=[float(n) for n in params["N_list"]],
        grid=[float(g) for g in params["grid"]],
        L=params["L"], reps=params["reps"], master_seed=args.seed,
        engine=params["engine"], budget=args.budget, safety_k=params["safety_k"],
    )
    results = run_clt_experiment(cfg)
    events = sum(r.events for r in results)
    if writer:
        writer.write_csv(
            "results.csv", ["N", "s", "t", "mean_s", "mean_stderr_s", "cov_st"],
            _result_rows(results),
        )
        if params["samples"]:
            res = results[-1]
            writer.write_csv(
                "samples.csv",
                [f"t_{g:g}" for g in res.grid],
                (tuple(row) for row in res.paths[: params["samples"]]),
            )
    return {"runs": len(results), "events": events}, events


def _run_sweep(params, args, writer):
    report = variance_scaling_sweep(
        params["d"], params["p"], params["N_list"], params["reps"], args.seed,
        engine=params["engine"], budget=args.budget,
    )
    if writer:
        if report.get("degenerate"):
            writer.write_csv("sweep.csv", ["N", "variance"], [])
            writer.write_json("sweep.json", report)
        else:
            rows = list(zip(report["N_list"], report["variances"], report["stderrs"]))
            writer.write_csv("sweep.csv", ["N", "variance", "stderr"], rows)
            writer.write_json(
                "sweep.json",
                {k: v for k, v in report.items() if k not in ("variances", "stderrs", "N_list")},
            )
    return report, 0


def _run_probe2d(params, args, writer):
    cfg = ExperimentConfig(
        d=2, p=params["p"], T=float(max(params["grid"])),
        N_list=[float(n) for n in params["N_list"]],
        grid=[float(g) for g in params["grid"]],
        reps=params["reps"], master_seed=args.seed, engine="dual",
        budget=args.budget,
    )
    report = conjecture_probe_d2(cfg, survival_reps=params["survival_reps"])
    events = sum(r.events for r in report["results"])
    if writer:
        writer.write_csv(
            "probe2d_results.csv",
            ["label", "N", "s", "t", "mean_s", "mean_stderr_s", "cov_st"],
            (("CONJECTURE", *row) for row in _result_rows(report["results"])),
        )
        writer.write_csv(
            "probe2d_survival.csv",
            ["label", "t", "logt_survival", "stderr", "pi"],
            (
                ("CONJECTURE", r["t"], r["logt_survival"], r["stderr"], math.pi)
                for r in report["survival"]
            ),
        )
    return {"label": "CONJECTURE", "events": events}, events


def _run_mdc(params, args, writer):
    report = martingale_decomposition_check(
        params["t"], params["N_list"], params["reps"], args.seed,
        p=params["p"], d=params["d"],
        sim_N=params["sim_N"] or None, budget=args.budget,
    )
    if writer:
        if report.get("degenerate"):
            writer.write_json("mdc.json", report)
        else:
            rows = list(
                zip(report["N_list"], report["L_list"], report["var_v0_scaled"],
                    report["var_v0_scaled_mc"])
            )
            writer.write_csv(
                "mdc_v0.csv", ["N", "L", "var_v0_scaled_exact", "var_v0_scaled_mc"], rows
            )
            writer.write_json("mdc.json", {k: v for k, v in report.items() if k != "N_list"})
    return report, report.get("events", 0)


RUNNERS = {
    "constants": _run_constants,
    "kernel": _run_kernel,
    "simulate": _run_simulate,
    "dual": _run_dual,
    "limit": _run_limit,
    "clt": _run_clt,
    "sweep": _run_sweep,
    "probe2d": _run_probe2d,
    "mdc": _run_mdc,
}


def _emit_error(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


def dispatch(args, params) -> int:
    writer = None
    start = time.time()
    try:
        if args.output:
            writer = ResultWriter(args.output, args.overwrite)
        report, events = RUNNERS[args.subcommand](params, args, writer)
        if writer:
            writer.write_manifest(
                {
                    "subcommand": args.subcommand,
                    "config": params,
                    "config_hash": hashlib.sha256(
                        json.dumps(params, sort_keys=True).encode()
                    ).hexdigest(),
                    "master_seed": args.seed,
                    "threads": args.threads,
                    "sequential": bool(args.sequential),
                    "version": __version__,
                    "started": start,
                    "finished": time.time(),
                    "events": int(events),
                }
            )
        elif args.subcommand in ("constants", "dual") and isinstance(report, dict):
            print(json.dumps(report, indent=2, sort_keys=True, default=float))
        return EXIT_OK
    except UsageError as exc:
        _emit_error("usage", str(exc))
        return EXIT_USAGE
    except BudgetExceededError as exc:
        _emit_error("budget", str(exc))
        return EXIT_BUDGET
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        _emit_error("runtime", f"{type(exc).__name__}: {exc}")
        return EXIT_RUNTIME


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if not argv:
        print("usage: votertime SUBCOMMAND [flags]; see --help", file=sys.stderr)
        return EXIT_USAGE
    try:
        args, params = parse_config(argv)
    except UsageError as exc:
        _emit_error("usage", str(exc))
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return 0 if exc.code in (0, None) else EXIT_USAGE
    return dispatch(args, params)


if __name__ == "__main__":
    sys.exit(main())
