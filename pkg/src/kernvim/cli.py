"""Command line interface: ``kernvim test``, ``kernvim band`` and ``kernvim simulate``."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import InputError, KernvimError
from .inference import DEFAULT_B, bh_adjust, confidence_band
from .nuisance import Dataset, load_external_nuisances
from .pipeline import MEASURES, ImportanceAnalysis, PipelineConfig, report_dict

EXPERIMENT_ALIASES = {"exp1": "exp1_d5", "exp2": "exp2_d10", "exp3": "exp3_d3"}


@dataclass
class RunConfig:
    input: str
    outcome: str
    treatment: Optional[str] = None
    covariates: Optional[List[str]] = None
    measures: List[str] = field(default_factory=lambda: ["koi"])
    targets: Optional[List[str]] = None
    subset: Optional[List[str]] = None
    baseline_subset: Optional[List[str]] = None
    bandwidth: Optional[float] = None
    lam: Optional[float] = None
    B: int = DEFAULT_B
    alpha: float = 0.05
    seed: int = 0
    mode: str = "cate"
    clip: float = 0.01
    shapley_m: int = 40
    split: bool = False
    varsigma: str = "bootstrap"
    nuisances: Optional[str] = None
    threads: int = 1
    out: Optional[str] = None
    csv_out: Optional[str] = None

    def validate(self):
        if not 0 < self.alpha <= 0.5:
            raise InputError(f"--alpha must lie in (0, 0.5], got {self.alpha}")
        if self.B < 100:
            raise InputError(f"--bootstrap must be at least 100, got {self.B}")
        for m in self.measures:
            if m not in MEASURES:
                raise InputError(f"unknown measure {m!r}; choose from {', '.join(MEASURES)}")
        if self.mode == "cate" and not self.treatment:
            raise InputError("--treatment is required in cate mode")


@dataclass
class Table:
    """A parsed CSV: covariate matrix plus variable groups for categorical columns."""

    data: Dataset
    groups: List[tuple]
    group_names: List[str]
    numeric_columns: List[str]


def _split_list(value: Optional[str]) -> Optional[List[str]]:
    if value is None:
        return None
    return [v.strip() for v in value.split(",") if v.strip()]


def read_table(cfg: RunConfig) -> Table:
    """Read a headered UTF-8 CSV; non-numeric covariates are one-hot encoded as a group."""
    try:
        fh = open(cfg.input, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {cfg.input}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{cfg.input}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not v.strip() for v in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{cfg.input}:{lineno}: expected {len(header)} fields, got {len(row)}")
            rows.append((lineno, [v.strip() for v in row]))
    if not rows:
        raise InputError(f"{cfg.input}: no data rows")

    def column(name):
        if name not in header:
            raise InputError(f"{cfg.input}: no column named {name!r}")
        return header.index(name)

    def numeric(name):
        j = column(name)
        out = np.empty(len(rows))
        for k, (lineno, row) in enumerate(rows):
            if row[j] == "":
                raise InputError(f"{cfg.input}:{lineno}: missing value in column {name!r}")
            try:
                out[k] = float(row[j])
            except ValueError:
                raise InputError(f"{cfg.input}:{lineno}: non-numeric value {row[j]!r} "
                                 f"in column {name!r}") from None
        return out

    y = numeric(cfg.outcome)
    a = numeric(cfg.treatment) if cfg.treatment else None
    covariates = cfg.covariates or [h for h in header if h not in (cfg.outcome, cfg.treatment)]
    if not covariates:
        raise InputError("no covariate columns")

    cols, names, groups, group_names = [], [], [], []
    for name in covariates:
        j = column(name)
        values = [row[j] for _, row in rows]
        for (lineno, _), v in zip(rows, values):
            if v == "":
                raise InputError(f"{cfg.input}:{lineno}: missing value in column {name!r}")
        try:
            cols.append(np.array([float(v) for v in values]))
            groups.append((len(names),))
            names.append(name)
        except ValueError:
            levels = sorted(set(values))
            start = len(names)
            for level in levels:
                cols.append(np.array([1.0 if v == level else 0.0 for v in values]))
                names.append(f"{name}={level}")
            groups.append(tuple(range(start, len(names))))
        group_names.append(name)
    numeric_cols = [n for n, g in zip(group_names, groups) if len(g) == 1 and names[g[0]] == n]
    data = Dataset(np.column_stack(cols), y, a, names)
    return Table(data, groups, group_names, numeric_cols)


def pipeline_config(cfg: RunConfig, n: int) -> PipelineConfig:
    external = load_external_nuisances(cfg.nuisances, n) if cfg.nuisances else None
    return PipelineConfig(alpha=cfg.alpha, B=cfg.B, lam=cfg.lam, bandwidth=cfg.bandwidth,
                          clip=cfg.clip, mode=cfg.mode, shapley_m=cfg.shapley_m,
                          split=cfg.split, varsigma=cfg.varsigma, threads=cfg.threads,
                          external_nuisances=external)


def _analysis(cfg: RunConfig):
    cfg.validate()
    table = read_table(cfg)
    pcfg = pipeline_config(cfg, table.data.n)
    analysis = ImportanceAnalysis(table.data, pcfg, cfg.seed, table.groups, table.group_names)
    return table, analysis


def _config_echo(cfg: RunConfig) -> dict:
    from dataclasses import asdict

    return asdict(cfg)


def cmd_test(cfg: RunConfig) -> dict:
    """Run every (measure, target) test and return the report (also written to ``cfg.out``)."""
    table, analysis = _analysis(cfg)
    targets = cfg.targets or table.group_names
    results = []
    for measure in cfg.measures:
        block = []
        if measure == "loco":
            if not cfg.subset:
                raise InputError("--measure loco needs --subset")
            report, boot, _ = analysis.run("loco", subset=cfg.subset,
                                           baseline=cfg.baseline_subset or [])
            label = ",".join(cfg.subset) + "|" + ",".join(cfg.baseline_subset or [])
            block.append((label, report))
        else:
            for t in targets:
                report, boot, _ = analysis.run(measure, t)
                block.append((t, report))
        adjusted = bh_adjust([r.p_value for _, r in block])
        for (variable, report), p_bh in zip(block, adjusted):
            entry = report_dict(report)
            entry["weights"] = entry.pop("measure")
            entry.update(variable=variable, measure=measure)
            entry["p_value_bh"] = float(p_bh)
            results.append(entry)
    out = {"config": _config_echo(cfg), "resolved": analysis.resolved(), "results": results}
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            json.dump(out, fh, indent=2, sort_keys=True)
            fh.write("\n")
    if cfg.csv_out:
        cols = ["variable", "measure", "norm", "ci_triangle_lo", "ci_triangle_hi", "ci_delta_lo",
                "ci_delta_hi", "xi_hat", "p_value", "p_value_bh", "reject"]
        with open(cfg.csv_out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for e in results:
                w.writerow([e["variable"], e["measure"], repr(e["norm"]),
                            repr(e["ci_triangle"][0]), repr(e["ci_triangle"][1]),
                            repr(e["ci_delta"][0]), repr(e["ci_delta"][1]), repr(e["xi_hat"]),
                            repr(e["p_value"]), repr(e["p_value_bh"]), e["reject"]])
    return out


def band_grid(table: Table, grid_var: str, points: int) -> np.ndarray:
    """Query rows: ``grid_var`` on an equispaced grid over its range, others at medians."""
    X = table.data.covariates
    names = table.data.column_names
    if grid_var not in names:
        raise InputError(f"grid variable {grid_var!r} must be a numeric covariate")
    if points < 1:
        raise InputError("--grid-points must be at least 1")
    j = names.index(grid_var)
    query = np.tile(np.median(X, axis=0), (points, 1))
    lo, hi = X[:, j].min(), X[:, j].max()
    query[:, j] = np.linspace(lo, hi, points) if points > 1 else [np.median(X[:, j])]
    return query


def cmd_band(cfg: RunConfig, grid_var: Optional[str] = None, points: int = 100) -> np.ndarray:
    """Confidence band for the first measure/target on a one-axis grid; CSV to ``cfg.out``."""
    table, analysis = _analysis(cfg)
    measure = cfg.measures[0]
    if measure == "loco":
        if not cfg.subset:
            raise InputError("--measure loco needs --subset")
        report, boot, est = analysis.run("loco", subset=cfg.subset,
                                         baseline=cfg.baseline_subset or [])
        default_var = cfg.subset[0]
    else:
        target = (cfg.targets or table.group_names)[0]
        report, boot, est = analysis.run(measure, target)
        default_var = target
    grid_var = grid_var or default_var
    query = band_grid(table, grid_var, points)
    values, lower, upper = confidence_band(est, boot.xi_hat, analysis.kernel_sections(query))
    rows = np.column_stack([query, values, lower, upper])
    if cfg.out:
        with open(cfg.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(list(table.data.column_names) + ["estimate", "lower", "upper"])
            for row in rows:
                w.writerow([repr(float(v)) for v in row])
    return rows


def cmd_simulate(experiments, ns, sigmas, betas, alternatives, measures, reps: int,
                 B: int = 999, alpha: float = 0.05, seed: int = 0, threads: int = 1,
                 shapley_m: int = 40, out: Optional[str] = None, oracle: bool = False):
    """Monte Carlo table over the cartesian grid; writes ``out.csv`` and ``out.json``."""
    from .simulate import DgpConfig, monte_carlo, oracle_embedded_norm, write_table

    rows = []
    pcfg = PipelineConfig(alpha=alpha, B=B, shapley_m=shapley_m)
    for exp in experiments:
        exp = EXPERIMENT_ALIASES.get(exp, exp)
        for n in ns:
            for sigma in sigmas:
                for beta in betas:
                    for alt in alternatives:
                        cfg = DgpConfig(exp, int(n), float(sigma), float(beta), alt, seed)
                        truth = None
                        if oracle and exp == "exp3_d3":
                            value = oracle_embedded_norm(cfg)
                            truth = {m: value for m in measures}
                        rows.extend(monte_carlo(cfg, pcfg, reps, measures=measures,
                                                oracle=truth, workers=threads))
    if out:
        meta = {"experiments": list(experiments), "reps": reps, "B": B, "alpha": alpha,
                "seed": seed, "shapley_m": shapley_m}
        write_table(rows, f"{out}.csv", f"{out}.json", meta)
    return rows


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--input", required=True, help="headered UTF-8 CSV")
    p.add_argument("--outcome", required=True)
    p.add_argument("--treatment", help="binary 0/1 column (cate mode)")
    p.add_argument("--covariates", help="comma-separated; default: all other columns")
    p.add_argument("--measure", default="koi",
                   help=f"comma-separated from {{{','.join(MEASURES)}}}")
    p.add_argument("--targets", help="comma-separated variables; default: every covariate")
    p.add_argument("--subset", help="loco: comma-separated larger variable set")
    p.add_argument("--baseline-subset", help="loco: comma-separated nested variable set")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--bootstrap", type=int, default=DEFAULT_B, help="bootstrap replicates B")
    p.add_argument("--seed", type=int, default=None, help="default: $KERNVIM_SEED or 0")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="KRR ridge; default sqrt(log n / n) for d <= 5, log(n)^2/sqrt(n) above")
    p.add_argument("--bandwidth", type=float, default=None,
                   help="Gaussian length scale on standardized covariates; default: median "
                        "of pairwise Euclidean distances")
    p.add_argument("--clip", type=float, default=0.01, help="propensity clipping level")
    p.add_argument("--permutations", type=int, default=40, help="shapley-mc permutation count")
    p.add_argument("--mode", choices=["cate", "prediction"], default="cate")
    p.add_argument("--split", action="store_true",
                   help="fit CATE/CME on one fold and average the estimator over the other")
    p.add_argument("--varsigma", choices=["bootstrap", "halfnormal"], default="bootstrap")
    p.add_argument("--nuisances", help="CSV with header g1,mu1,mu0 aligned with the input rows")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", help="output path")


def _seed(value: Optional[int]) -> int:
    if value is not None:
        return value
    env = os.environ.get("KERNVIM_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise InputError(f"KERNVIM_SEED must be an integer, got {env!r}") from None
    return 0


def _run_config(args) -> RunConfig:
    return RunConfig(
        input=args.input, outcome=args.outcome, treatment=args.treatment,
        covariates=_split_list(args.covariates), measures=_split_list(args.measure) or ["koi"],
        targets=_split_list(args.targets), subset=_split_list(args.subset),
        baseline_subset=_split_list(args.baseline_subset), bandwidth=args.bandwidth,
        lam=args.lam, B=args.bootstrap, alpha=args.alpha, seed=_seed(args.seed),
        mode=args.mode, clip=args.clip, shapley_m=args.permutations, split=args.split,
        varsigma=args.varsigma, nuisances=args.nuisances, threads=args.threads, out=args.out,
        csv_out=getattr(args, "csv", None),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kernvim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="test no importance and report norm intervals")
    _add_common(p)
    p.add_argument("--csv", help="optional flat CSV table")

    p = sub.add_parser("band", help="export a sup-norm confidence band on a grid")
    _add_common(p)
    p.add_argument("--grid-var", help="covariate varied along the grid (default: target)")
    p.add_argument("--grid-points", type=int, default=100)

    p = sub.add_parser("simulate", help="Monte Carlo rejection-rate tables")
    p.add_argument("--experiment", default="exp3", help="comma list of exp1,exp2,exp3")
    p.add_argument("--n", default="500")
    p.add_argument("--sigma", default="0")
    p.add_argument("--beta", default="0")
    p.add_argument("--alternative", default="smooth")
    p.add_argument("--measure", default="koi")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--bootstrap", type=int, default=999)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--permutations", type=int, default=40)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--oracle", action="store_true",
                   help="exp3 only: compute the true embedded norm and report delta-CI coverage")
    p.add_argument("--out", default="simulation", help="output prefix for .csv and .json")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "test":
            out = cmd_test(_run_config(args))
            if not args.out:
                json.dump(out, sys.stdout, indent=2, sort_keys=True)
                sys.stdout.write("\n")
        elif args.command == "band":
            rows = cmd_band(_run_config(args), args.grid_var, args.grid_points)
            if not args.out:
                np.savetxt(sys.stdout, rows, delimiter=",")
        else:
            def floats(s):
                return [float(v) for v in _split_list(s)]

            rows = cmd_simulate(
                _split_list(args.experiment), [int(v) for v in _split_list(args.n)],
                floats(args.sigma), floats(args.beta), _split_list(args.alternative),
                _split_list(args.measure), args.reps, args.bootstrap, args.alpha,
                _seed(args.seed), args.threads, args.permutations, args.out, args.oracle)
            for row in rows:
                print(json.dumps(row, sort_keys=True))
    except KernvimError as exc:
        print(f"kernvim: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"kernvim: error: {exc}", file=sys.stderr)
        return InputError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
