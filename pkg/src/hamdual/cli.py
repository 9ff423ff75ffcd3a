"""Command line entry point: verify, solve, spectrum, basis, conjugate-table."""

import argparse
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import errors
from .config import RunConfig, check_config, load_config
from .conjugate import conjugate_arrays, validate
from .decomposition import build_basis, gap_constants, positivity_constant
from .discretization import write_fields_csv
from .pipeline import Solver, mark_distinct
from .verify import report, run_checks

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_CONVERGENCE = 0, 1, 2, 3

_CONFIG_ERRORS = (errors.ConfigError, errors.MissingRun, errors.BadSpec, errors.RegimeMismatch,
                  errors.TooManyModes, errors.BadExponent, errors.MeshMismatch)
_INVARIANT_ERRORS = (errors.InvalidHamiltonian, errors.H3Violation, errors.NonPositive)

SPECTRUM_COLUMNS = ["n", "m", "J", "I", "identity_gap", "residual_u", "residual_v",
                    "level_estimate", "galerkin_level", "distinct_from_previous", "certified"]


def exit_code(exc):
    if isinstance(exc, _CONFIG_ERRORS):
        return EXIT_CONFIG
    if isinstance(exc, _INVARIANT_ERRORS) or type(exc).__name__ == "InvariantFailure":
        return EXIT_INVARIANT
    return EXIT_CONVERGENCE


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def _write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _finite(x):
    x = float(x)
    return x if np.isfinite(x) else None


def _config(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    check_config(cfg)
    return cfg


def _out_dir(args, cfg):
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- commands

def cmd_verify(args):
    cfg = _config(args)
    out = _out_dir(args, cfg)
    results = run_checks(cfg.spec, cfg.mesh, seed=cfg.seed, m_max=cfg.m_max)
    rep = report(results)
    rep["config"] = cfg.to_dict()
    _write_json(out / "verify_report.json", rep)
    for r in results:
        print(f"{r.status.upper():7s} {r.name}")
    if rep["first_failure"]:
        first = next(r for r in results if r.status == "failed")
        print(f"first failing invariant: {first.name} ({first.detail.get('message', '')})",
              file=sys.stderr)
        return EXIT_INVARIANT
    print(f"{rep['passed']} invariant groups passed")
    return EXIT_OK


def _level_entry(res):
    cfg, b, out = res.config, res.bounds, res.outcome
    return {
        "n": cfg.n, "m": res.record.galerkin_m, "regime": cfg.regime,
        "k": cfg.k, "l": cfg.l, "r_n": cfg.r_n, "rho_n": cfg.rho_n, "gamma_n": cfg.gamma,
        "C_lower": cfg.C_lower, "C_upper": cfg.C_upper,
        "lower_bound": _finite(b.lower), "upper_bound": _finite(b.upper),
        "d_tilde": _finite(b.d_tilde),
        "level_estimate": _finite(out.level_estimate), "galerkin_level": out.level_value,
        "level_estimate_kind": ("upper-bound level estimate" if cfg.regime == "superlinear"
                                else "lower-bound level estimate"),
        "resampled": bool(out.extra.get("resampled", False)),
        "sample_count": cfg.sample_count,
        "iterations": out.iterations, "galerkin_converged": bool(out.converged),
        "galerkin_grad_norm": out.galerkin_grad_norm, "polish": res.polish,
        "certified": res.certified, "status": "converged" if res.certified else "uncertified",
    }


def cmd_solve(args):
    cfg = _config(args)
    out = _out_dir(args, cfg)
    manifest = {"config": cfg.to_dict(), "regime": cfg.resolved_regime, "levels": [],
                "status": "running"}
    for stale in ("spectrum.csv",):
        (out / stale).unlink(missing_ok=True)
    if not cfg.levels:
        manifest["status"] = "ok"
        _write_json(out / "manifest.json", manifest)
        return EXIT_OK
    try:
        validate(cfg.spec, seed=cfg.seed)
        solver = Solver(cfg.spec, cfg.mesh, m_max=cfg.m_max, seed=cfg.seed,
                        regime=cfg.resolved_regime, tolerances=cfg.tolerances)
    except errors.HamdualError as exc:
        manifest.update(status="failed", failed_stage="setup", error=str(exc))
        _write_json(out / "manifest.json", manifest)
        print(f"setup failed: {exc}", file=sys.stderr)
        return exit_code(exc)

    def run_one(level):
        try:
            return solver.level(*level)
        except errors.HamdualError as exc:
            return exc

    threads = max(1, args.threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        outcomes = list(pool.map(run_one, cfg.levels))
    # all writing happens here, on one thread, in level order
    done = [r for r in outcomes if not isinstance(r, Exception)]
    mark_distinct(done)
    code = EXIT_OK
    for (n, _), res in zip(cfg.levels, outcomes):
        if isinstance(res, Exception):
            stage = type(res).__name__
            manifest["levels"].append({"n": n, "status": "failed", "failed_stage": stage,
                                       "error": str(res)})
            print(f"level {n} failed ({stage}): {res}", file=sys.stderr)
            code = max(code, exit_code(res))
            continue
        entry = _level_entry(res)
        manifest["levels"].append(entry)
        write_fields_csv(out / f"solution_n{n}.csv", cfg.mesh, res.record.field_columns())
        if not res.certified:
            print(f"level {n} failed certification (identity gap or residual)", file=sys.stderr)
            code = max(code, EXIT_INVARIANT)
    write_csv(out / "spectrum.csv", SPECTRUM_COLUMNS, [r.row() for r in done])
    manifest["status"] = "ok" if code == EXIT_OK else "failed"
    _write_json(out / "manifest.json", manifest)
    for r in done:
        print(f"level {r.record.level_index}: I = {r.record.I_value:.12g}"
              f"  certified={r.certified}")
    return code


def read_run(run_dir):
    run = Path(run_dir)
    spec_path, man_path = run / "spectrum.csv", run / "manifest.json"
    if not (spec_path.is_file() and man_path.is_file()):
        raise errors.MissingRun(f"{run} has no spectrum.csv and manifest.json")
    with open(spec_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    manifest = json.loads(man_path.read_text())
    return rows, manifest


def spectrum_table(run_dir):
    rows, manifest = read_run(run_dir)
    sched = {e["n"]: e for e in manifest["levels"] if e.get("status") != "failed"}
    out = []
    for r in rows:
        n = int(r["n"])
        e = sched.get(n, {})
        out.append({"n": n, "energy": float(r["I"]), "gamma_n": e.get("gamma_n", float("nan")),
                    "rho_n": e.get("rho_n", float("nan")), "r_n": e.get("r_n", float("nan"))})
    return out


def cmd_spectrum(args):
    if not args.run_dir:
        raise errors.ConfigError("spectrum needs a run directory")
    table = spectrum_table(args.run_dir)
    cols = ["n", "energy", "gamma_n", "rho_n", "r_n"]
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_csv(Path(args.out) / "spectrum_plot.csv", cols, table)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(cols)
        for r in table:
            w.writerow([_fmt(r[c]) for c in cols])
    return EXIT_OK


def basis_table(cfg, n_max):
    basis = build_basis(cfg.mesh, cfg.m_max)
    p, q = cfg.spec.p, cfg.spec.q
    rows = []
    for j in range(1, basis.m_max + 1):
        row = {"j": j, "lambda": float(basis.eigenvalues[j - 1]), "alpha": "", "beta": "",
               "gamma": "", "C": ""}
        if j <= n_max and j < basis.m_max:
            gc = gap_constants(basis, j, p, q, seed=cfg.seed)
            row.update(alpha=gc.alpha, beta=gc.beta, gamma=gc.gamma,
                       C=positivity_constant(basis, j, p, q, seed=cfg.seed))
        rows.append(row)
    return rows


def cmd_basis(args):
    cfg = _config(args)
    out = _out_dir(args, cfg)
    write_csv(out / "basis.csv", ["j", "lambda", "alpha", "beta", "gamma", "C"],
              basis_table(cfg, args.n_max))
    print(out / "basis.csv")
    return EXIT_OK


def cmd_conjugate_table(args):
    cfg = _config(args)
    out = _out_dir(args, cfg)
    validate(cfg.spec, seed=cfg.seed)
    ax = np.linspace(-args.radius, args.radius, args.size)
    F, G = np.meshgrid(ax, ax, indexing="ij")
    val, u, v = conjugate_arrays(cfg.spec, F.ravel(), G.ravel())
    rows = [{"f": a, "g": b, "Hstar": c, "u": d, "v": e}
            for a, b, c, d, e in zip(F.ravel(), G.ravel(), val, u, v)]
    write_csv(out / "conjugate_table.csv", ["f", "g", "Hstar", "u", "v"], rows)
    print(out / "conjugate_table.csv")
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--threads", type=int, default=1, help="parallel level workers")

    ap = argparse.ArgumentParser(prog="hamdual", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("verify", parents=[common], help="run the invariant suite")
    sub.add_parser("solve", parents=[common], help="compute the configured levels")
    sp = sub.add_parser("spectrum", parents=[common], help="plot data from a run directory")
    sp.add_argument("run_dir", nargs="?")
    bp = sub.add_parser("basis", parents=[common], help="eigenvalues and gap constants")
    bp.add_argument("--n-max", type=int, default=10)
    cp = sub.add_parser("conjugate-table", parents=[common], help="H* on a grid")
    cp.add_argument("--radius", type=float, default=3.0)
    cp.add_argument("--size", type=int, default=61)
    return ap


COMMANDS = {"verify": cmd_verify, "solve": cmd_solve, "spectrum": cmd_spectrum,
            "basis": cmd_basis, "conjugate-table": cmd_conjugate_table}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except errors.HamdualError as exc:
        print(f"{args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
