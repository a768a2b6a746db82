"""Command-line front end.

Subcommands: ``simulate``, ``estimate``, ``moments``, ``replicate``, ``qq``,
``kernel-info``.  Every run writes a ``manifest.json`` provenance record
(config hash, seeds, package and library versions, emitted files) into the
output directory, which defaults to ``$DRIFTGP_OUT`` or the working
directory.  Report-style subcommands render QQ figures as PNG files next to
the delimited output.

Exit codes: 0 success, 2 configuration problems, 3 numerical failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import fisher_blocks, standard_errors
from .config import (
    config_sha256,
    drift_from_config,
    kernel_from_config,
    load_config,
    scheme_from_config,
)
from .contrast import (
    EstimateReport,
    RATE_DRIFT,
    RATE_KERNEL,
    estimate_gaussian_kernel_model,
    least_squares_drift,
    minimize_contrast,
    mollified_ou_beta,
    rq_estimate,
)
from .errors import ConfigError, DriftGPError
from .experiments import (
    RepRecord,
    case_preset,
    qq_correlation,
    qq_data,
    run_case,
    summarize,
    write_qq_csv,
    write_records_csv,
    write_summary_csv,
)
from .kernels import kernel_d2_at_zero, kernel_d4_at_zero, kernel_eval
from .moments import (
    detrend,
    empirical_increment_moment,
    estimate_k4,
    g_functional,
    g_functional_limit,
    increment_moment_limit,
    moment_alpha,
    moment_beta,
)
from .simulate import SamplingScheme, read_path_csv, simulate_model, write_path_csv


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("DRIFTGP_OUT") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(out: Path, args, outputs: list[str], extra: dict | None = None) -> None:
    manifest = {
        "command": args.command,
        "argv": sys.argv[1:],
        "config": str(args.config) if getattr(args, "config", None) else None,
        "config_sha256": config_sha256(args.config) if getattr(args, "config", None) else None,
        "seed": getattr(args, "seed", None),
        "versions": {
            "driftgp": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "outputs": outputs,
    }
    if extra:
        manifest.update(extra)
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _save_qq_figure(theoretical, empirical, title: str, file: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4.2, 4.2))
    ax.plot(theoretical, empirical, "o", ms=2.5, alpha=0.7)
    lim = [min(theoretical.min(), empirical.min()), max(theoretical.max(), empirical.max())]
    ax.plot(lim, lim, "k--", lw=0.8)
    ax.set_xlabel("theoretical quantiles")
    ax.set_ylabel("empirical quantiles")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(file, dpi=150)
    plt.close(fig)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.set)
    kernel = kernel_from_config(cfg)
    drift = drift_from_config(cfg, Path(args.config).parent)
    scheme = scheme_from_config(cfg)
    seed = args.seed if args.seed is not None else int(cfg.get("experiment", {}).get("seed", 0))
    path = simulate_model(kernel, drift, scheme, seed)
    out = _out_dir(args)
    csv_file = out / "path.csv"
    sidecar = out / "path.json"
    write_path_csv(path, csv_file, sidecar)
    _write_manifest(out, args, [csv_file.name, sidecar.name], {"method": path.method})
    print(f"wrote {csv_file} ({scheme.n + 1} points, method={path.method})")
    return 0


def _estimate_report(path, kernel, drift) -> EstimateReport:
    fam = kernel.family
    if fam == "gaussian":
        xi_hat, gamma_hat = estimate_gaussian_kernel_model(path, drift)
        series = detrend(path, drift, xi_hat)
        alpha_hat = moment_alpha(series)
        if alpha_hat <= 0.0 or gamma_hat <= 0.0:
            from .errors import DegenerateVarianceError

            raise DegenerateVarianceError(
                "degenerate level/increment variance; cannot form beta = gamma/alpha"
            )
        report = EstimateReport(
            theta_hat={
                "xi": xi_hat,
                "gamma": gamma_hat,
                "alpha": alpha_hat,
                "beta": gamma_hat / alpha_hat,
            },
            rates={"xi": RATE_DRIFT, "gamma": RATE_KERNEL, "alpha": RATE_KERNEL, "beta": RATE_KERNEL},
            diagnostics={"method": "closed_form_plus_moments"},
        )
        info = fisher_blocks(
            kernel.with_params(alpha=alpha_hat, beta=max(gamma_hat / alpha_hat, 1e-12)),
            drift,
            sigma_params=("alpha", "beta"),
        )
        return standard_errors(report, info, path.scheme)
    if fam == "rational_quadratic":
        report = rq_estimate(path, drift)
        theta = report.theta_hat
        info = fisher_blocks(
            kernel.with_params(alpha=theta["alpha"], beta=max(theta["beta"], 1e-12)),
            drift,
            sigma_params=("alpha", "beta"),
        )
        return standard_errors(report, info, path.scheme)
    if fam in ("exponential_ou", "mollified_ou"):
        theta: dict[str, float] = {}
        rates = {"alpha": RATE_KERNEL, "beta": RATE_KERNEL}
        if drift.n_params:
            theta["xi"] = least_squares_drift(path, drift)
            rates["xi"] = RATE_DRIFT
        series = detrend(path, drift, theta.get("xi"))
        alpha_hat = moment_alpha(series)
        eps = kernel.epsilon if fam == "mollified_ou" else path.h / 2.0
        theta["alpha"] = alpha_hat
        theta["beta"] = mollified_ou_beta(path, alpha_hat, eps)
        return EstimateReport(
            theta_hat=theta,
            rates=rates,
            diagnostics={"method": "smoothed_kernel_moments", "epsilon": eps},
        )
    return minimize_contrast(path, drift, kernel)


def _cmd_estimate(args) -> int:
    cfg = load_config(args.config, args.set)
    kernel = kernel_from_config(cfg)
    drift = drift_from_config(cfg, Path(args.config).parent)
    sidecar = args.sidecar
    if sidecar is None:
        guess = Path(args.path).with_suffix(".json")
        sidecar = guess if guess.exists() else None
    path = read_path_csv(args.path, sidecar)
    report = _estimate_report(path, kernel, drift)
    out = _out_dir(args)
    report_file = out / "report.json"
    payload = report.to_dict()
    payload["asymptotics"] = {
        "rates": payload.pop("rates"),
        "std_errors": payload.pop("std_errors"),
    }
    with open(report_file, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(out, args, [report_file.name])
    print(json.dumps(payload["theta_hat"], sort_keys=True))
    return 0


def _cmd_moments(args) -> int:
    cfg = load_config(args.config, args.set)
    kernel = kernel_from_config(cfg)
    drift = drift_from_config(cfg, Path(args.config).parent)
    path = read_path_csv(args.path, args.sidecar)
    series = detrend(path, drift)
    stats: dict = {
        "alpha_hat": moment_alpha(series),
        "beta_hat": moment_beta(series),
        "k4_hat": estimate_k4(path, drift),
    }
    for kappa in args.kappa:
        stats[f"increment_moment_k{kappa}"] = empirical_increment_moment(path, kappa)
        stats[f"increment_moment_k{kappa}_limit"] = increment_moment_limit(kappa, kernel)
    for name in args.g:
        stats[f"g[{name}]"] = g_functional(series, name)
        stats[f"g[{name}]_limit"] = g_functional_limit(name, kernel)
    out = _out_dir(args)
    stats_file = out / "moments.json"
    with open(stats_file, "w") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(out, args, [stats_file.name])
    print(json.dumps(stats, sort_keys=True))
    return 0


def _cmd_replicate(args) -> int:
    seed = args.seed
    reps = args.reps
    n_values = args.n
    if args.config:
        cfg = load_config(args.config, args.set)
        exp = cfg.get("experiment", {})
        seed = seed if seed is not None else exp.get("seed")
        reps = reps or exp.get("reps")
        n_values = n_values or exp.get("n_values")
        case = args.case or exp.get("case")
    else:
        case = args.case
    if not case:
        raise ConfigError("replicate needs --case (or experiment.case in the config)")
    preset_kwargs = {}
    if n_values:
        preset_kwargs["n_values"] = tuple(int(v) for v in n_values)
    if reps:
        preset_kwargs["reps"] = int(reps)
    if seed is not None:
        preset_kwargs["master_seed"] = int(seed)
    config = case_preset(case, **preset_kwargs)
    records = run_case(config, jobs=args.jobs)
    table = summarize(records, config)
    out = _out_dir(args)
    outputs = ["summary.csv", "records.csv"]
    write_summary_csv(table, out / "summary.csv")
    write_records_csv(records, out / "records.csv")
    qq_info = {}
    for n in config.n_values:
        scheme = SamplingScheme.from_rule(n, config.a)
        for est in ("xi", "alpha", "beta"):
            theo, emp = qq_data(records, est, n, config.truth_dict, scheme)
            stem = f"qq_{est}_{n}"
            write_qq_csv(theo, emp, out / f"{stem}.csv")
            _save_qq_figure(theo, emp, f"case {config.case}: {est}, n={n}", out / f"{stem}.png")
            outputs += [f"{stem}.csv", f"{stem}.png"]
            qq_info[stem] = qq_correlation(theo, emp)
    diagnostics = {
        f"{case},{n}": diag for (case, n), diag in table.cell_diagnostics.items()
    }
    _write_manifest(
        out,
        args,
        outputs,
        {
            "experiment": {
                "case": config.case,
                "n_values": list(config.n_values),
                "reps": config.reps,
                "master_seed": config.master_seed,
                "truth": dict(table.truth),
            },
            "qq_correlation": qq_info,
            "cells": diagnostics,
        },
    )
    for row in table.rows:
        print(
            f"case {row['case']} n={row['n']} {row['estimator']}: "
            f"{row['mean']:.4f} ({row['sd']:.4f}) [reps_ok={row['reps_ok']}]"
        )
    return 0


def _read_records_csv(file) -> list[RepRecord]:
    import csv as _csv

    records = []
    with open(file, newline="") as fh:
        for row in _csv.DictReader(fh):
            ok = row["ok"] in ("True", "true", "1")
            records.append(
                RepRecord(
                    case=row["case"],
                    n=int(row["n"]),
                    rep=int(row["rep"]),
                    seed=int(row["seed"]),
                    ok=ok,
                    xi_hat=float(row["xi_hat"]) if row["xi_hat"] else None,
                    alpha_hat=float(row["alpha_hat"]) if row["alpha_hat"] else None,
                    beta_hat=float(row["beta_hat"]) if row["beta_hat"] else None,
                    error=row.get("error") or None,
                )
            )
    return records


def _cmd_qq(args) -> int:
    records = _read_records_csv(args.records)
    cases = {r.case for r in records}
    case = args.case or (cases.pop() if len(cases) == 1 else None)
    if case is None:
        raise ConfigError("records contain several cases; pass --case")
    config = case_preset(case)
    scheme = SamplingScheme.from_rule(args.n, config.a)
    theo, emp = qq_data(records, args.estimator, args.n, config.truth_dict, scheme)
    out = _out_dir(args)
    stem = f"qq_{args.estimator}_{args.n}"
    write_qq_csv(theo, emp, out / f"{stem}.csv")
    _save_qq_figure(theo, emp, f"case {case}: {args.estimator}, n={args.n}", out / f"{stem}.png")
    corr = qq_correlation(theo, emp)
    _write_manifest(out, args, [f"{stem}.csv", f"{stem}.png"], {"qq_correlation": corr})
    print(f"{stem}: correlation {corr:.5f}")
    return 0


def _cmd_kernel_info(args) -> int:
    cfg = load_config(args.config, args.set)
    kernel = kernel_from_config(cfg)
    start, stop, step = args.lags
    lags = np.arange(start, stop + 1e-12, step)
    out = _out_dir(args)
    info_file = out / "kernel_info.csv"
    with open(info_file, "w", newline="") as fh:
        import csv as _csv

        writer = _csv.writer(fh)
        writer.writerow(["t", "K"])
        for t, v in zip(lags, np.atleast_1d(kernel_eval(kernel, lags))):
            writer.writerow([repr(float(t)), repr(float(v))])
    summary = {"family": kernel.family, **kernel.params, "K0": kernel_eval(kernel, 0.0)}
    for label, fn in (("d2_at_zero", kernel_d2_at_zero), ("d4_at_zero", kernel_d4_at_zero)):
        try:
            summary[label] = fn(kernel)
        except DriftGPError as exc:
            summary[label] = f"unavailable: {exc}"
    _write_manifest(out, args, [info_file.name], {"kernel": summary})
    print(json.dumps(summary, sort_keys=True, default=str))
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _lag_triplet(text: str):
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("lags must be start:stop:step")
    return tuple(float(p) for p in parts)


def _int_list(text: str):
    return [int(p) for p in text.split(",") if p]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftgp",
        description="Simulate and estimate drifted stationary Gaussian processes.",
    )
    parser.add_argument("--version", action="version", version=f"driftgp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="TOML config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory (default $DRIFTGP_OUT or .)")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="config override, repeatable")

    p = sub.add_parser("simulate", help="sample one path, write CSV + provenance sidecar")
    common(p)

    p = sub.add_parser("estimate", help="estimate parameters from a path CSV")
    common(p)
    p.add_argument("--path", required=True, help="path CSV (columns t,x)")
    p.add_argument("--sidecar", default=None, help="provenance JSON written by simulate")

    p = sub.add_parser("moments", help="moment statistics of a path CSV")
    common(p)
    p.add_argument("--path", required=True)
    p.add_argument("--sidecar", default=None)
    p.add_argument("--kappa", type=_int_list, default=[1, 2])
    p.add_argument("--g", type=lambda s: s.split(","), default=["(y-x)^2"])

    p = sub.add_parser("replicate", help="run a preset replication study")
    common(p, config_required=False)
    p.add_argument("--case", default=None, choices=["I", "II", "III"])
    p.add_argument("--n", type=_int_list, default=None, help="comma-separated n values")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("qq", help="QQ data/figure from a records.csv")
    common(p, config_required=False)
    p.add_argument("--records", required=True)
    p.add_argument("--estimator", required=True, choices=["xi", "alpha", "beta"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--case", default=None, choices=["I", "II", "III"])

    p = sub.add_parser("kernel-info", help="tabulate kernel values and origin derivatives")
    common(p)
    p.add_argument("--lags", type=_lag_triplet, default=(0.0, 2.0, 0.05),
                   metavar="START:STOP:STEP")
    return parser


_DISPATCH = {
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "moments": _cmd_moments,
    "replicate": _cmd_replicate,
    "qq": _cmd_qq,
    "kernel-info": _cmd_kernel_info,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _DISPATCH[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DriftGPError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
