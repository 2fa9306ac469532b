"""Command-line front end: ``cavispec solve|oracle|study|fit``.

Exit status: 0 on success, 1 when a solve (or any study row) fails, 2 for
usage and configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

from . import io as cio
from .analysis import (UnderdeterminedFit, cavity_metrics, fit_convergence, min_interpolant_slope,
                       sweep_lambda)
from .oracle import OracleError, radial_reference
from .problem import ConfigError, ProblemConfig, solve_problem

log = logging.getLogger("cavispec")

OUT_ENV = "CAVISPEC_OUT"
DEFAULT_OUT = "cavispec-out"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SECTIONS = ("study", "oracle")
STUDY_AXES = ("N", "M", "Nq_ratio", "Mq_ratio", "lambda", "lambda1", "domains", "check_interp")


class UsageError(Exception):
    pass


# --- configuration ----------------------------------------------------------------------------

def _key_line(text: str, key: str) -> Optional[int]:
    pattern = re.compile(r'"' + re.escape(key) + r'"\s*:')
    for lineno, line in enumerate(text.splitlines(), start=1):
        if pattern.search(line):
            return lineno
    return None


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``KEY=VALUE`` strings; dotted keys address nested sections, values parse as JSON."""
    data = json.loads(json.dumps(data))
    for item in overrides or ():
        if "=" not in item:
            raise UsageError(f"--override expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = data
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise UsageError(f"--override {key}: {part} is not a section")
        node[parts[-1]] = _parse_value(raw)
    return data


def load_config(path, overrides=()):
    """Parse a JSON config file; returns ``(ProblemConfig, sections)``.

    Errors are raised as :class:`UsageError` with a ``path:line:`` prefix
    pointing at the offending key where it can be located.
    """
    path = str(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"{path}: cannot read config: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    if not isinstance(data, dict):
        raise UsageError(f"{path}:1: config must be a JSON object")
    data = apply_overrides(data, overrides)
    sections = {name: data.pop(name) for name in SECTIONS if name in data}
    try:
        config = ProblemConfig.from_dict(data)
    except ConfigError as exc:
        line = _key_line(text, exc.field)
        where = f"{path}:{line}" if line else path
        raise UsageError(f"{where}: invalid field {exc}") from None
    except TypeError as exc:
        raise UsageError(f"{path}: {exc}") from None
    return config, sections


def out_dir(args) -> Path:
    path = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    path.mkdir(parents=True, exist_ok=True)
    return path


# --- solve ------------------------------------------------------------------------------------

def solution_summary(sol) -> dict:
    metrics = cavity_metrics(sol.field)
    return {
        "energy": sol.energy,
        "energy_discrete": sol.report.energy,
        "cavity": metrics.as_dict(),
    }


def cmd_solve(args) -> int:
    config, _ = load_config(args.config, args.override)
    out = out_dir(args)
    try:
        sol = solve_problem(config)
    except ValueError as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        cio.write_json(out / "report.json", {"config": config.to_dict(), "error": str(exc)})
        return EXIT_FAIL
    summary = solution_summary(sol)
    cio.write_snapshot(out / "snapshot.json", config, sol.y)
    cio.write_history_csv(out / "history.csv", sol.report.history)
    cio.write_report(out / "report.json", sol.report, config, **summary)
    cav = summary["cavity"]
    print(f"status={sol.report.status} |f|={sol.report.fnorm:.3e} E={sol.energy:.10f} "
          f"R={cav['radius']:.10f} a={cav['semi_major']:.10f} b={cav['semi_minor']:.10f}")
    return EXIT_OK if sol.report.success else EXIT_FAIL


# --- oracle -----------------------------------------------------------------------------------

def cmd_oracle(args) -> int:
    config, sections = load_config(args.config, args.override)
    if config.lambda1 != config.lambda2:
        raise UsageError("oracle is radial only: lambda1 must equal lambda2")
    opts = sections.get("oracle", {})
    try:
        prof = radial_reference(config.eps, config.gamma, config.lambda1, config.build_material(), **opts)
    except TypeError as exc:
        raise UsageError(f"oracle section: {exc}") from None
    except OracleError as exc:
        print(f"oracle failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    out = out_dir(args)
    cio.write_profile_csv(out / "profile.csv", prof)
    cio.write_json(out / "summary.json", {"config": config.to_dict(), **prof.summary()})
    print(f"E={prof.energy:.10f} R={prof.cavity_radius:.10f} n_grid={prof.n_grid}")
    return EXIT_OK


# --- study ------------------------------------------------------------------------------------

ROW_COLUMNS = ("eps", "gamma", "lambda1", "lambda2", "N", "M", "Nq", "Mq", "status", "energy",
               "radius", "semi_major", "semi_minor", "residual_norm", "min_D")


def _row_from_solution(config: ProblemConfig, sol) -> dict:
    m = cavity_metrics(sol.field)
    return {
        "eps": config.eps, "gamma": config.gamma, "lambda1": config.lambda1, "lambda2": config.lambda2,
        "N": config.N, "M": config.M, "Nq": config.quad_N, "Mq": config.quad_M,
        "status": sol.report.status, "energy": sol.energy, "radius": m.radius,
        "semi_major": m.semi_major, "semi_minor": m.semi_minor,
        "residual_norm": sol.report.fnorm, "min_D": sol.report.min_det,
    }


def _failed_row(config: ProblemConfig, reason: str) -> dict:
    nan = float("nan")
    return {
        "eps": config.eps, "gamma": config.gamma, "lambda1": config.lambda1, "lambda2": config.lambda2,
        "N": config.N, "M": config.M, "Nq": config.quad_N, "Mq": config.quad_M,
        "status": f"failed: {reason}", "energy": nan, "radius": nan, "semi_major": nan,
        "semi_minor": nan, "residual_norm": nan, "min_D": nan,
    }


def study_point(config_dict: dict) -> dict:
    """Solve one cold-started study point; module level so it can run in a worker process."""
    config = ProblemConfig.from_dict(config_dict)
    try:
        sol = solve_problem(config)
    except ValueError as exc:
        return _failed_row(config, str(exc))
    return _row_from_solution(config, sol)


def _study_configs(base: ProblemConfig, study: dict) -> list:
    axis, values = study["axis"], study["values"]
    if axis == "N":
        return [base.replace(N=int(v), Nq=None) for v in values]
    if axis == "M":
        return [base.replace(M=int(v), Mq=None) for v in values]
    if axis == "Nq_ratio":
        return [base.replace(Nq=int(round(v * base.N))) for v in values]
    if axis == "Mq_ratio":
        return [base.replace(Mq=int(round(v * base.M))) for v in values]
    if axis == "domains":
        Ms = study.get("M_values", [base.M])
        lam_gamma = study.get("lambda_gamma")
        out = []
        for eps, gamma in values:
            lam = lam_gamma / gamma if lam_gamma is not None else None
            changes = {"eps": float(eps), "gamma": float(gamma)}
            if lam is not None:
                changes.update(lambda1=lam, lambda2=lam)
            for M in Ms:
                out.append(base.replace(M=int(M), Mq=None, **changes))
        return out
    raise UsageError(f"study axis {axis!r} is not a cold-start axis")


def _reference(config: ProblemConfig, cache: dict):
    """Oracle energy and radius for a symmetric configuration (cached per eps, gamma, lambda)."""
    if config.lambda1 != config.lambda2:
        return None
    key = (config.eps, config.gamma, config.lambda1)
    if key not in cache:
        try:
            prof = radial_reference(config.eps, config.gamma, config.lambda1, config.build_material())
            cache[key] = (prof.energy, prof.cavity_radius)
        except OracleError as exc:
            log.warning("no oracle reference for %s: %s", key, exc)
            cache[key] = None
    return cache[key]


def _run_rows(configs, threads: int) -> list:
    payloads = [c.to_dict() for c in configs]
    if threads > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(study_point, payloads))
    return [study_point(p) for p in payloads]


def _check_interp(study: dict, base: ProblemConfig) -> list:
    lam = study.get("lambda", base.lambda1)
    rows = []
    for M in study["values"]:
        slope = min_interpolant_slope(base.eps, base.gamma, lam, int(M))
        rows.append({"eps": base.eps, "gamma": base.gamma, "lambda": lam, "M": int(M),
                     "min_slope": slope, "status": "converged" if slope > 0 else "not orientation preserving"})
    return rows


def cmd_study(args) -> int:
    config, sections = load_config(args.config, args.override)
    study = sections.get("study")
    if not isinstance(study, dict) or "axis" not in study or "values" not in study:
        raise UsageError(f"{args.config}: a 'study' section with 'axis' and 'values' is required")
    axis = study["axis"]
    if axis not in STUDY_AXES:
        raise UsageError(f"{args.config}: study axis must be one of {STUDY_AXES}, got {axis!r}")
    name = study.get("name", f"study_{axis}")
    out = out_dir(args) / name
    threads = max(1, int(args.threads or 1))

    if axis == "check_interp":
        rows = _check_interp(study, config)
        cio.write_table(out / f"{name}.dat", ("M", "min_slope"), [(r["M"], r["min_slope"]) for r in rows],
                        comments=[f"minimum rho-derivative of the interpolated incompressible map",
                                  f"eps={config.eps} gamma={config.gamma} lambda={rows[0]['lambda'] if rows else ''}"])
        cio.write_json(out / f"{name}.json", {"config": config.to_dict(), "study": study, "rows": rows})
        for r in rows:
            print(f"M={r['M']:3d} min slope={r['min_slope']:+.3e}")
        return EXIT_OK

    try:
        if axis in ("lambda", "lambda1"):
            ratio = study.get("ratio") if axis == "lambda1" else None
            if axis == "lambda1" and ratio is None:
                raise UsageError(f"{args.config}: lambda1 study needs 'ratio' (lambda1 / lambda2)")
            sweep = sweep_lambda(config, study["values"], ratio=ratio, warm_start=study.get("warm_start", True))
            rows = []
            for r in sweep.rows:
                cfg = config.replace(lambda1=r.lambda1, lambda2=r.lambda2)
                row = _failed_row(cfg, r.status) if r.metrics is None else {
                    **_failed_row(cfg, ""), "status": r.status, "energy": r.energy,
                    "residual_norm": r.residual_norm, **r.metrics.as_dict()}
                if r.metrics is not None:
                    row["min_D"] = float("nan") if r.y is None else _min_det(cfg, r.y)
                rows.append(row)
        else:
            rows = _run_rows(_study_configs(config, study), threads)
    except ConfigError as exc:
        raise UsageError(f"{args.config}: study produces an invalid configuration: {exc}") from None

    columns = list(ROW_COLUMNS)
    if study.get("reference", True):
        cache = {}
        for row in rows:
            ref = _reference(config.replace(eps=row["eps"], gamma=row["gamma"], lambda1=row["lambda1"],
                                            lambda2=row["lambda2"]), cache)
            row["energy_error"] = abs(row["energy"] - ref[0]) if ref else float("nan")
            row["radius_error"] = abs(row["radius"] - ref[1]) if ref else float("nan")
        columns += ["energy_error", "radius_error"]

    for i, row in enumerate(rows):
        cio.write_json(out / "rows" / f"row_{i:03d}.json", row)
    numeric = [c for c in columns if c != "status"]
    cio.write_table(out / f"{name}.dat", numeric + ["ok"],
                    [[row[c] for c in numeric] + [int(row["status"] == "converged")] for row in rows],
                    comments=[f"study {name}: axis {axis}", f"values {study['values']}"])
    cio.write_csv(out / f"{name}.csv", columns, ({c: row[c] for c in columns} for row in rows))
    result = {"config": config.to_dict(), "study": study, "rows": rows}

    if axis in ("N", "M"):
        result["fit"] = _study_fits(rows)
    cio.write_json(out / f"{name}.json", result)

    failed = [r for r in rows if r["status"] != "converged"]
    for row in rows:
        print(" ".join(f"{c}={row[c]}" for c in ("N", "M", "lambda1", "lambda2", "status", "energy", "radius")))
    if failed:
        print(f"{len(failed)} of {len(rows)} rows failed", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _min_det(config: ProblemConfig, y) -> float:
    from .problem import build_discretization

    return build_discretization(config).min_det(y)


def _study_fits(rows) -> dict:
    from .analysis import ConvergenceSample

    fits = {}
    good = [r for r in rows if r["status"] == "converged"]
    for q in ("energy", "radius", "semi_major", "semi_minor"):
        samples = [ConvergenceSample(r["N"], r["M"], r[q]) for r in good]
        try:
            fits[q] = fit_convergence(samples).as_dict()
        except UnderdeterminedFit as exc:
            fits[q] = {"error": str(exc)}
    return fits


# --- fit --------------------------------------------------------------------------------------

def cmd_fit(args) -> int:
    try:
        samples = cio.read_samples_csv(args.samples)
    except OSError as exc:
        raise UsageError(f"{args.samples}: {exc.strerror}") from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    try:
        model = fit_convergence(samples, model=args.model)
    except UnderdeterminedFit as exc:
        raise UsageError(f"{args.samples}: under-determined fit: {exc}") from None
    out = out_dir(args)
    cio.write_json(out / "fit.json", {"samples": len(samples), **model.as_dict()})
    print(f"{'q_inf':>18} {'c1':>12} {'nu1':>7} {'c2':>12} {'nu2':>7}")
    print(f"{model.q_inf:18.10f} {model.c1:12.3e} {model.nu1:7.2f} {model.c2:12.3e} {model.nu2:7.2f}")
    return EXIT_OK


# --- entry point ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    common.add_argument("--threads", type=int, default=1, help="worker processes for cold-started study rows")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry; dotted keys reach sections, values parse as JSON")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="cavispec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, help_ in (("solve", cmd_solve, "solve one problem"),
                              ("oracle", cmd_oracle, "radial reference solution"),
                              ("study", cmd_study, "parameter study from a sweep spec")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--config", required=True, help="JSON problem configuration")
        p.set_defaults(func=func)
    p = sub.add_parser("fit", parents=[common], help="fit the convergence model to (N, M, q) samples")
    p.add_argument("samples", help="CSV file with columns N, M, q")
    p.add_argument("--model", choices=("full", "M"), default=None)
    p.set_defaults(func=cmd_fit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
