"""Command-line harness for the simulation studies and the CSV workflow.

Subcommands: null-calibration, overestimation, power, miscalibration, test.
Every run resolves its options from defaults, then an optional INI config
file ([run] section), then explicit flags, and writes a manifest.json
recording the resolved configuration so results are auditable. Outputs are
deterministic in (config, seed) and independent of --jobs.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .covmodels import (
    AR1,
    CompoundSymmetry,
    Dense,
    Diagonal,
    Identity,
    SpdMatrix,
    Toeplitz,
)
from .errors import ParseError, PostclustError
from .experiments import (
    KMEANS_SEED_NOTE,
    PAIR_LAW_NOTE,
    SETTING_B_NOTE,
    EcdfSummary,
    ExperimentConfig,
    method_label,
    run_miscalibration,
    run_null_calibration,
    run_overestimation,
    run_pairwise_tests,
    run_power,
)
from .inference import HacSpec, KMeansSpec, estimate_sigma
from .serialize import (
    _fmt,
    read_matrix_csv,
    write_assignment_csv,
    write_dendrogram_csv,
    write_manifest,
    write_pvalue_csv,
)
from .clustering import cut, hac_fit

LINKAGE_CHOICES = ("single", "complete", "average", "weighted", "ward", "centroid", "median")


def _read_config_file(path):
    if path is None:
        return {}
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ParseError(f"config file {path} not found or unreadable")
    out = {}
    for section in parser.sections():
        for key, val in parser.items(section):
            out[key.replace("-", "_")] = val
    return out


class _Resolver:
    """defaults < config file < explicit flags."""

    def __init__(self, args, file_values):
        self.args = vars(args)
        self.file = file_values

    def get(self, key, default, cast=str):
        cli_val = self.args.get(key)
        if cli_val is not None:
            return cli_val
        if key in self.file:
            raw = self.file[key]
            if cast is bool:
                return raw.strip().lower() in ("1", "true", "yes", "on")
            return cast(raw)
        return default


def _method_from(res: _Resolver, k: int):
    use_kmeans = res.get("kmeans", False, bool)
    linkage = res.get("linkage", "average")
    if use_kmeans:
        return KMeansSpec(k=k, seed=int(res.get("kmeans_seed", 0, int)))
    if linkage not in LINKAGE_CHOICES:
        raise ParseError(f"unknown linkage {linkage!r}")
    return HacSpec(linkage, k)


def _experiment_config(res: _Resolver, *, sigma_default="known") -> ExperimentConfig:
    k = res.get("k", 3, int)
    return ExperimentConfig(
        setting=res.get("setting", "a"),
        n=res.get("n", 100, int),
        p=res.get("p", 5, int),
        k=k,
        method=_method_from(res, k),
        delta=res.get("delta", 0.0, float),
        replicates=res.get("replicates", 100, int),
        seed=res.get("seed", 0, int),
        sigma_mode=res.get("sigma", sigma_default),
    )


def _config_dict(cfg: ExperimentConfig) -> dict:
    method = cfg.method
    spec = (
        {"kind": "hac", "linkage": method.linkage, "k": method.k}
        if isinstance(method, HacSpec)
        else {"kind": "kmeans", "k": method.k, "max_iter": method.max_iter}
    )
    return {
        "setting": cfg.setting,
        "n": cfg.n,
        "p": cfg.p,
        "k": cfg.k,
        "method": spec,
        "delta": cfg.delta,
        "replicates": cfg.replicates,
        "seed": cfg.seed,
        "sigma_mode": cfg.sigma_mode,
    }


def _notes(cfg: ExperimentConfig | None = None) -> list:
    notes = [PAIR_LAW_NOTE]
    if cfg is None or isinstance(cfg.method, KMeansSpec):
        notes.append(KMEANS_SEED_NOTE)
    if cfg is not None and cfg.setting == "b":
        notes.append(SETTING_B_NOTE)
    return notes


def _out_dir(res: _Resolver) -> Path:
    out = Path(res.get("out_dir", "postclust-out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_replicates(path, rows, extra_cols=()):
    header = list(extra_cols) + [
        "replicate", "g1", "g2", "statistic", "df", "p", "method", "kept", "reason",
    ]
    _write_rows(
        path,
        header,
        [
            [row.get(c) for c in extra_cols]
            + [
                row["replicate"], row["g1"], row["g2"], row["statistic"],
                row["df"], row["p"], row["method"], row["kept"], row["reason"],
            ]
            for row in rows
        ],
    )


def _write_ecdf(path, summary: EcdfSummary):
    m = max(summary.n_kept, 1)
    _write_rows(
        path,
        ["p", "ecdf"],
        [[p, (i + 1) / m] for i, p in enumerate(summary.pvalues)],
    )


def _summary_dict(summary: EcdfSummary) -> dict:
    return {
        "ks": summary.ks,
        "sup_pos": summary.sup_pos,
        "n_kept": summary.n_kept,
        "n_discarded": summary.n_discarded,
    }


def _cmd_calibration(args, command):
    res = _Resolver(args, _read_config_file(args.config))
    sigma_default = "known" if command == "null-calibration" else "estimate"
    cfg = _experiment_config(res, sigma_default=sigma_default)
    jobs = res.get("jobs", 1, int)
    out = _out_dir(res)
    if command == "null-calibration":
        summary, rows = run_null_calibration(cfg, n_jobs=jobs)
    else:
        summary, rows = run_overestimation(cfg, n_jobs=jobs)
    _write_replicates(out / "replicates.csv", rows)
    _write_ecdf(out / "ecdf.csv", summary)
    write_manifest(
        out / "manifest.json",
        {
            "command": command,
            "config": _config_dict(cfg),
            "version": __version__,
            "notes": _notes(cfg),
            "summary": _summary_dict(summary),
        },
    )
    print(
        f"{command}: kept {summary.n_kept}/{cfg.replicates}, "
        f"KS {summary.ks:.4f}, sup+ {summary.sup_pos:.4f} -> {out}"
    )
    return 0


def _cmd_power(args):
    res = _Resolver(args, _read_config_file(args.config))
    cfg = _experiment_config(res)
    jobs = res.get("jobs", 1, int)
    out = _out_dir(res)
    deltas = np.linspace(
        res.get("delta_min", 4.0, float),
        res.get("delta_max", 10.5, float),
        res.get("delta_points", 14, int),
    )
    single = res.get("delta", None, float)
    if single is not None:
        deltas = np.asarray([single])
    curve, rows = run_power(cfg, deltas, n_jobs=jobs)
    _write_rows(
        out / "power.csv",
        ["delta", "method", "power", "n_kept", "n_replicates"],
        [[c["delta"], c["method"], c["power"], c["n_kept"], c["n_replicates"]] for c in curve],
    )
    _write_replicates(out / "replicates.csv", rows, extra_cols=("delta",))
    write_manifest(
        out / "manifest.json",
        {
            "command": "power",
            "config": _config_dict(cfg),
            "delta_grid": [float(d) for d in deltas],
            "alpha": 0.05,
            "version": __version__,
            "notes": _notes(cfg),
        },
    )
    print(f"power: {len(curve)} grid points ({method_label(cfg.method)}) -> {out}")
    return 0


def _cmd_miscalibration(args):
    res = _Resolver(args, _read_config_file(args.config))
    n = res.get("n", 100, int)
    k = res.get("k", 3, int)
    reps = res.get("replicates", 2000, int)
    seed = res.get("seed", 0, int)
    linkage = res.get("linkage", "average")
    sigma_naive = res.get("sigma_naive", 2.0, float)
    dims_raw = res.get("dims", "5,20,50")
    dims = [int(tok) for tok in str(dims_raw).split(",") if tok.strip()]
    jobs = res.get("jobs", 1, int)
    out = _out_dir(res)
    summaries, rows = run_miscalibration(
        n, dims, reps, seed, sigma_naive=sigma_naive, linkage=linkage, k=k, n_jobs=jobs
    )
    _write_rows(
        out / "summary.csv",
        ["dim", "arm", "ks", "sup_pos", "n_kept", "n_discarded"],
        [
            [s["dim"], s["arm"], s["ks"], s["sup_pos"], s["n_kept"], s["n_discarded"]]
            for s in summaries
        ],
    )
    _write_rows(
        out / "replicates.csv",
        ["replicate", "dim", "g1", "g2", "p_naive", "p_correct", "kept", "reason"],
        [
            [
                r["replicate"], r["dim"], r["g1"], r["g2"],
                r["p_naive"], r["p_correct"], r["kept"], r["reason"],
            ]
            for r in rows
        ],
    )
    write_manifest(
        out / "manifest.json",
        {
            "command": "miscalibration",
            "config": {
                "n": n, "k": k, "dims": dims, "replicates": reps, "seed": seed,
                "linkage": linkage, "sigma_naive": sigma_naive,
            },
            "version": __version__,
            "notes": _notes() + [
                "naive arm assumes U=I and Sigma = sigma_naive * I on dependent draws"
            ],
            "summary": summaries,
        },
    )
    print(f"miscalibration: dims {dims} -> {out}")
    return 0


def parse_cov_arg(text: str):
    """Covariance model flag: identity[:scale], ar1:sigma,rho, cs:a,b, csv:path."""
    name, _, rest = text.partition(":")
    name = name.strip().lower()
    if name == "identity":
        return Identity(float(rest)) if rest else Identity()
    if name == "ar1":
        sigma, rho = (float(tok) for tok in rest.split(","))
        return AR1(sigma, rho)
    if name == "cs":
        a, b = (float(tok) for tok in rest.split(","))
        return CompoundSymmetry(a, b)
    if name == "diag":
        return Diagonal(tuple(float(tok) for tok in rest.split(",")))
    if name == "toeplitz":
        return Toeplitz(tuple(float(tok) for tok in rest.split(",")))
    if name == "csv":
        return Dense(SpdMatrix(read_matrix_csv(rest)))
    raise ParseError(f"cannot parse covariance spec {text!r}")


def _cmd_test(args):
    res = _Resolver(args, _read_config_file(args.config))
    out = _out_dir(res)
    x = read_matrix_csv(args.data)
    n, p = x.shape
    k = res.get("k", 2, int)
    method = _method_from(res, k)
    u = parse_cov_arg(res.get("u", "identity"))
    sigma_mode = res.get("sigma", "known")

    if sigma_mode == "estimate":
        if args.copy is not None:
            y = read_matrix_csv(args.copy)
        elif args.sigma_from_clustered:
            # Explicit opt-in: reusing the clustered data for estimation has
            # no selective guarantee (the estimate is not independent).
            y = x
        else:
            raise ParseError(
                "--sigma estimate needs --copy CSV (or --sigma-from-clustered "
                "to knowingly reuse the clustered data)"
            )
        sigma = estimate_sigma(y, u)
    else:
        if args.sigma_csv is None:
            raise ParseError("--sigma known needs --sigma-csv with a p x p matrix")
        sigma = read_matrix_csv(args.sigma_csv)

    mc_seed = res.get("seed", 0, int)
    results, adjusted = run_pairwise_tests(
        x, method, u, sigma,
        mc_draws=res.get("mc_draws", 2000, int), mc_seed=mc_seed,
    )
    write_pvalue_csv(out / "pvalues.csv", results, adjusted)
    if isinstance(method, HacSpec):
        dend = hac_fit(x, method.linkage)
        write_dendrogram_csv(out / "dendrogram.csv", dend)
        write_assignment_csv(out / "assignment.csv", cut(dend, k))
    write_manifest(
        out / "manifest.json",
        {
            "command": "test",
            "config": {
                "data": str(args.data),
                "copy": str(args.copy) if args.copy else None,
                "n": n, "p": p, "k": k,
                "method": _config_dict_method(method),
                "u": res.get("u", "identity"),
                "sigma_mode": sigma_mode,
                "seed": mc_seed,
            },
            "version": __version__,
            "notes": ["all k(k-1)/2 cluster pairs tested; Holm adjustment applied"],
            "n_rejections_0.05": int(np.sum(adjusted <= 0.05)),
        },
    )
    print(f"test: {len(results)} pairwise tests -> {out}")
    return 0


def _config_dict_method(method):
    if isinstance(method, HacSpec):
        return {"kind": "hac", "linkage": method.linkage, "k": method.k}
    return {"kind": "kmeans", "k": method.k, "seed": method.seed,
            "max_iter": method.max_iter}


def _add_common(sp):
    sp.add_argument("--config", help="INI file with a [run] section of key = value pairs")
    sp.add_argument("--setting", choices=("a", "b", "c"))
    sp.add_argument("--n", type=int)
    sp.add_argument("--p", type=int)
    sp.add_argument("--k", type=int)
    sp.add_argument("--linkage", choices=LINKAGE_CHOICES)
    sp.add_argument("--kmeans", action="store_const", const=True)
    sp.add_argument("--kmeans-seed", type=int, dest="kmeans_seed")
    sp.add_argument("--delta", type=float)
    sp.add_argument("--replicates", "-M", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--sigma", choices=("known", "estimate"))
    sp.add_argument("--out-dir", dest="out_dir")
    sp.add_argument("--jobs", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="postclust",
        description="Selective tests for differences in cluster means "
        "under matrix-normal dependence.",
    )
    ap.add_argument("--version", action="version", version=f"postclust {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    for name in ("null-calibration", "overestimation"):
        sp = sub.add_parser(name, help=f"{name} simulation study")
        _add_common(sp)

    sp = sub.add_parser("power", help="rejection-rate curve over a separation grid")
    _add_common(sp)
    sp.add_argument("--delta-min", type=float, dest="delta_min")
    sp.add_argument("--delta-max", type=float, dest="delta_max")
    sp.add_argument("--delta-points", type=int, dest="delta_points")

    sp = sub.add_parser(
        "miscalibration", help="naive spherical analysis vs the correct model"
    )
    _add_common(sp)
    sp.add_argument("--dims", help="comma-separated feature dimensions, default 5,20,50")
    sp.add_argument("--sigma-naive", type=float, dest="sigma_naive")

    sp = sub.add_parser("test", help="run the test on a CSV dataset")
    sp.add_argument("data", help="n x p CSV matrix, optional header")
    sp.add_argument("--copy", help="independent copy CSV for Sigma estimation")
    sp.add_argument("--sigma-csv", dest="sigma_csv", help="known p x p Sigma CSV")
    sp.add_argument(
        "--sigma-from-clustered",
        action="store_true",
        help="estimate Sigma from the clustered data itself "
        "(voids the selective guarantee; requires explicit opt-in)",
    )
    sp.add_argument("--u", help="row covariance spec, e.g. identity, ar1:1,0.5, csv:U.csv")
    sp.add_argument("--mc-draws", type=int, dest="mc_draws")
    _add_common(sp)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("null-calibration", "overestimation"):
            return _cmd_calibration(args, args.command)
        if args.command == "power":
            return _cmd_power(args)
        if args.command == "miscalibration":
            return _cmd_miscalibration(args)
        if args.command == "test":
            return _cmd_test(args)
        raise ParseError(f"unknown command {args.command!r}")
    except (PostclustError, ValueError, OSError) as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
