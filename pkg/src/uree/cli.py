"""Command-line entry point: ``uree {analyze,simulate,density,report}``.

Exit codes: 0 success, 2 validation failure, 3 sampler failure, 4 I/O failure.
Settings come from flags, then an optional ``--config`` JSON file, then defaults.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import shutil
import sys
import tempfile
import warnings
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from . import errors as err
from .augment import build_plan, write_ee_table
from .classical import dsl_fit, effects_from_events, ml_fit
from .reading import density_grid
from .reporting import (MetaResult, ess_table, forest_plot, format_table3, l1_from_draws, load_results,
                        save_results, write_table3)
from .sampler import ChainConfig, PosteriorDraws, Priors, parameter_table, run_naive, run_uree, summarize
from .simulation import SimConfig, generate_dataset, truths_to_json
from .study import (ARMS, MetaDataset, bundled_path, dataset_to_json, load_dataset, validate)

EXIT_OK, EXIT_VALIDATION, EXIT_SAMPLER, EXIT_IO = 0, 2, 3, 4

METHOD_NAMES = {"dsl": "DSL", "ml": "ML", "naive-bayes": "NaiveBayes", "ur-ee": "UREE"}
BUNDLED = {"ulmca": "ulmca.json", "simulated": "simulated.json"}

_VALIDATION_ERRORS = (err.DatasetFormatError, err.NoUsableData, err.DegenerateCell, err.InvalidMeasurement,
                      err.InvalidSummary, err.NoDonorStudies, err.InconsistentBounds, err.DomainViolation,
                      json.JSONDecodeError, ValueError)
_SAMPLER_ERRORS = (err.EmptySupport, err.NonFiniteLikelihood, err.InsufficientChains, err.GridTooCoarse)


class CliFailure(Exception):
    def __init__(self, code: int, kind: str, message: str, details=None):
        super().__init__(message)
        self.code, self.kind, self.details = code, kind, details


@dataclass(frozen=True)
class RunConfig:
    input: str | None = None
    dataset: str | None = None
    methods: tuple[str, ...] = ("dsl", "ml", "naive-bayes", "ur-ee")
    d_sd: float = 2.35
    m_sd: float = 1.98
    prior_ig_shape: float = 3.0
    prior_ig_scale: float = 2.0
    chains: int = 3
    burn_in: int = 2_000
    iterations: int = 100_000
    thin: int = 10
    seed: int = 20240101
    threads: int = 1
    horizon_days: float | None = None
    exact_ratio: bool = False
    strict: bool = False
    output: str = "uree-out"

    def __post_init__(self):
        if not self.methods:
            raise ValueError("method set must be non-empty")
        unknown = [m for m in self.methods if m not in METHOD_NAMES]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {sorted(METHOD_NAMES)}")

    def priors(self) -> Priors:
        return replace(Priors.with_variance_prior(self.prior_ig_shape, self.prior_ig_scale),
                       d_sd=self.d_sd, m_sd=self.m_sd)

    def chain_config(self) -> ChainConfig:
        return ChainConfig(chains=self.chains, burn_in=self.burn_in, iterations=self.iterations,
                           thin=self.thin, seed=self.seed, threads=self.threads)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["methods"] = list(self.methods)
        return out


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _metadata(command: str, cfg: dict) -> dict:
    cfg = {k: v for k, v in cfg.items() if k != "output"}  # location does not affect content
    return {"command": command, "version": __version__, "config": cfg, "config_hash": config_hash(cfg),
            "seed": cfg.get("seed")}


def _merge(defaults_cls, args: argparse.Namespace, config_path: str | None, keys):
    """Flags > config file > dataclass defaults."""
    values = {}
    if config_path:
        try:
            with open(config_path, encoding="utf-8") as fh:
                values.update(json.load(fh))
        except OSError as exc:
            raise CliFailure(EXIT_IO, "io", f"cannot read config {config_path}: {exc}") from exc
    for key in keys:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    allowed = {f.name for f in fields(defaults_cls)}
    bad = set(values) - allowed
    if bad:
        raise CliFailure(EXIT_VALIDATION, "validation", f"unknown config keys {sorted(bad)}")
    if "methods" in values and isinstance(values["methods"], list):
        values["methods"] = tuple(values["methods"])
    try:
        return defaults_cls(**values)
    except (TypeError, ValueError) as exc:
        raise CliFailure(EXIT_VALIDATION, "validation", str(exc)) from exc


# --------------------------------------------------------------------------- #
# helpers
# --------------------------------------------------------------------------- #

def _load_input(cfg) -> MetaDataset:
    if cfg.input and cfg.dataset:
        raise CliFailure(EXIT_VALIDATION, "validation", "give --input or --dataset, not both")
    if cfg.dataset:
        if cfg.dataset not in BUNDLED:
            raise CliFailure(EXIT_VALIDATION, "validation", f"unknown bundled dataset {cfg.dataset!r}")
        path = bundled_path(BUNDLED[cfg.dataset])
    elif cfg.input:
        path = Path(cfg.input)
    else:
        raise CliFailure(EXIT_VALIDATION, "validation", "no input: pass --input PATH or --dataset NAME")
    try:
        ds = load_dataset(path)
    except OSError as exc:
        raise CliFailure(EXIT_IO, "io", f"cannot read {path}: {exc}") from exc
    violations = validate(ds)
    if violations:
        raise CliFailure(EXIT_VALIDATION, "validation", f"{len(violations)} validation problems",
                         [asdict(v) for v in violations])
    return ds


def _with_horizon(ds: MetaDataset, horizon_days: float | None) -> MetaDataset:
    if horizon_days is None:
        return ds
    if horizon_days <= 0:
        raise CliFailure(EXIT_VALIDATION, "validation", "--horizon-days must be positive")
    studies = tuple(replace(s, horizon=horizon_days / s.time_unit.days) for s in ds.studies)
    return replace(ds, studies=studies)


class _Staging:
    """Writes into a temporary sibling directory and moves files into place on success."""

    def __init__(self, target: str):
        self.target = Path(target)

    def __enter__(self) -> Path:
        parent = self.target.resolve().parent
        try:
            parent.mkdir(parents=True, exist_ok=True)
            self.tmp = Path(tempfile.mkdtemp(prefix=".uree-", dir=parent))
        except OSError as exc:
            raise CliFailure(EXIT_IO, "io", f"cannot create output directory: {exc}") from exc
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                self.target.mkdir(parents=True, exist_ok=True)
                for f in sorted(self.tmp.iterdir()):
                    os.replace(f, self.target / f.name)
        finally:
            shutil.rmtree(self.tmp, ignore_errors=True)
        return False


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _announce(command: str, cfg: dict) -> None:
    print(f"uree {__version__} {command}: " + " ".join(f"{k}={v}" for k, v in sorted(cfg.items())),
          file=sys.stderr)


# --------------------------------------------------------------------------- #
# commands
# --------------------------------------------------------------------------- #

def cmd_analyze(cfg: RunConfig) -> int:
    cfg_dict = cfg.to_dict()
    _announce("analyze", cfg_dict)
    ds = _with_horizon(_load_input(cfg), cfg.horizon_days)
    priors, chain = cfg.priors(), cfg.chain_config()

    results: list[MetaResult] = []
    draws: dict[str, PosteriorDraws] = {}
    plans = None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        effects = effects_from_events(ds) if {"dsl", "ml"} & set(cfg.methods) else []
        for method in cfg.methods:
            if method == "dsl":
                results.append(MetaResult.from_pooled(dsl_fit(effects), effects))
            elif method == "ml":
                results.append(MetaResult.from_pooled(ml_fit(effects), effects))
            elif method == "naive-bayes":
                draws[method] = run_naive(ds, priors=priors, config=chain)
                results.append(summarize(draws[method]))
            else:
                plans = build_plan(ds, exact_ratio=cfg.exact_ratio)
                draws[method] = run_uree(ds, priors=priors, config=chain, plans=plans,
                                         exact_ratio=cfg.exact_ratio, strict=cfg.strict)
                results.append(summarize(draws[method]))
    notes = sorted({str(w.message) for w in caught})

    with _Staging(cfg.output) as out:
        save_results(results, out / "results.json")
        for method, dr in draws.items():
            dr.to_csv(out / f"draws_{method}.csv")
        svg, text = forest_plot(results)
        (out / "forest.svg").write_text(svg, encoding="utf-8")
        (out / "forest.txt").write_text(text, encoding="utf-8")
        extra = {}
        if "naive-bayes" in draws and "ur-ee" in draws:
            naive_t, uree_t = parameter_table(draws["naive-bayes"]), parameter_table(draws["ur-ee"])
            write_table3(naive_t, uree_t, out / "table3.csv")
            by = {r.method: r for r in results}
            extra["ess"] = ess_table(by["NaiveBayes"], by["UREE"], ds.total_n())
            print(format_table3(naive_t, uree_t))
        if plans is not None:
            write_ee_table(plans, out / "ee_table.csv")
        meta = _metadata("analyze", cfg_dict)
        meta.update({"n_total": ds.total_n(), "study_ids": ds.ids, "warnings": notes, **extra,
                     "acceptance": {m: d.acceptance for m, d in draws.items()}})
        _write_json(out / "run.json", meta)
    print(text, end="")
    return EXIT_OK


@dataclass(frozen=True)
class SimulateConfig:
    preset: str = "appendix-b-config"
    seed: int = 7
    k: int = 10
    literal_d: bool = False
    output: str = "uree-sim"


def cmd_simulate(cfg: SimulateConfig) -> int:
    cfg_dict = asdict(cfg)
    _announce("simulate", cfg_dict)
    if cfg.preset != "appendix-b-config":
        raise CliFailure(EXIT_VALIDATION, "validation", f"unknown preset {cfg.preset!r}")
    sim = SimConfig(k=cfg.k, seed=cfg.seed, literal_d=cfg.literal_d)
    ds, truths = generate_dataset(sim)
    with _Staging(cfg.output) as out:
        _write_json(out / "dataset.json", dataset_to_json(ds))
        _write_json(out / "truth.json", truths_to_json(truths))
        meta = _metadata("simulate", cfg_dict)
        meta["sim_config"] = asdict(sim)
        _write_json(out / "run.json", meta)
    print(f"wrote {ds.k} simulated studies to {cfg.output}")
    return EXIT_OK


@dataclass(frozen=True)
class DensityConfig:
    input: str | None = None
    dataset: str | None = None
    study: str = ""
    arm: str = "treatment"
    exact_ratio: bool = False
    points: int = 401
    horizon_days: float | None = None
    output: str = "uree-density"


def cmd_density(cfg: DensityConfig) -> int:
    cfg_dict = asdict(cfg)
    _announce("density", cfg_dict)
    if cfg.arm not in ARMS:
        raise CliFailure(EXIT_VALIDATION, "validation", f"--arm must be one of {ARMS}")
    if cfg.input is None and cfg.dataset is None:
        cfg = replace(cfg, dataset="ulmca")
    ds = _with_horizon(_load_input(cfg), cfg.horizon_days)
    if cfg.study not in ds.ids:
        raise CliFailure(EXIT_VALIDATION, "validation", f"unknown study {cfg.study!r}; have {ds.ids}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        plans = build_plan(ds, exact_ratio=cfg.exact_ratio)
    plan = next(p for p in plans if p.study_id == cfg.study and p.arm == cfg.arm)
    with _Staging(cfg.output) as out:
        with open(out / "ur_density.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["s_plus", "density"])
            if plan.ur.is_degenerate:
                w.writerow([f"{plan.ur.center:.10g}", "inf"])
            else:
                grid, dens = density_grid(plan.ur, cfg.points)
                w.writerows([f"{g:.10g}", f"{v:.10g}"] for g, v in zip(grid, dens))
        with open(out / "ee_density.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "density"])
            ee = plan.ee
            if ee.is_point_mass:
                w.writerow([f"{ee.center:.10g}", "inf"])
            else:
                grid = np.linspace(ee.lb_sym, ee.ub_sym, cfg.points)
                w.writerows([f"{g:.10g}", f"{v:.10g}"] for g, v in zip(grid, ee.pdf(grid)))
        write_ee_table([plan], out / "ee_table.csv")
        meta = _metadata("density", cfg_dict)
        meta["notes"] = list(plan.notes)
        _write_json(out / "run.json", meta)
    print(f"{plan.label}: s*={plan.s_star:.3f} UR={plan.ur.kind.value} EE=[{plan.ee.lb_sym:.3f}, "
          f"{plan.ee.ub_sym:.3f}] B={plan.ee.B:.4g}")
    return EXIT_OK


@dataclass(frozen=True)
class ReportConfig:
    input: str = "uree-out"
    compare: tuple[str, ...] = ("naive-bayes", "ur-ee")
    output: str | None = None


def cmd_report(cfg: ReportConfig) -> int:
    cfg_dict = asdict(cfg)
    cfg_dict["compare"] = list(cfg.compare)
    _announce("report", cfg_dict)
    if len(cfg.compare) != 2 or any(c not in METHOD_NAMES for c in cfg.compare):
        raise CliFailure(EXIT_VALIDATION, "validation", "--compare needs two methods, e.g. naive,ur-ee")
    src = Path(cfg.input)
    try:
        results = load_results(src / "results.json")
        with open(src / "run.json", encoding="utf-8") as fh:
            run = json.load(fh)
    except OSError as exc:
        raise CliFailure(EXIT_IO, "io", f"cannot read analysis outputs in {src}: {exc}") from exc
    by = {r.method: r for r in results}
    a_name, b_name = (METHOD_NAMES[c] for c in cfg.compare)
    missing = [m for m in (a_name, b_name) if m not in by]
    if missing:
        raise CliFailure(EXIT_VALIDATION, "validation", f"results lack methods {missing}")
    table = ess_table(by[a_name], by[b_name], run["n_total"])
    table.update({"baseline": a_name, "compared": b_name})
    l1 = {}
    paths = [src / f"draws_{c}.csv" for c in cfg.compare]
    if all(p.exists() for p in paths):
        da, db = (PosteriorDraws.from_csv(p) for p in paths)
        for name in ["d", *(f"delta_{sid}" for sid in da.study_ids)]:
            value, bw = l1_from_draws(da.pooled(name), db.pooled(name))
            l1[name] = {"l1": value, "bandwidth": bw}
    out_dir = cfg.output or str(src)
    with _Staging(out_dir) as out:
        _write_json(out / "ess.json", table)
        with open(out / "ess.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(list(table))
            w.writerow([f"{v:.6g}" if isinstance(v, float) else v for v in table.values()])
        if l1:
            with open(out / "l1.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["parameter", "l1", "bandwidth"])
                for name, v in l1.items():
                    w.writerow([name, f"{v['l1']:.6f}", f"{v['bandwidth']:.6g}"])
        svg, text = forest_plot(results)
        (out / "forest.svg").write_text(svg, encoding="utf-8")
        (out / "forest.txt").write_text(text, encoding="utf-8")
        meta = _metadata("report", cfg_dict)
        meta["source_config_hash"] = run.get("config_hash")
        _write_json(out / "report.json", meta)
    print(f"SD {a_name} {table['sd_naive']:.4f} -> {b_name} {table['sd_uree']:.4f} "
          f"(+{100 * table['sd_inflation']:.1f}%); effective n {table['n_eff']:.1f} of {table['n_total']} "
          f"({100 * table['reduction']:.1f}% reduction)")
    return EXIT_OK


# --------------------------------------------------------------------------- #
# argument parsing
# --------------------------------------------------------------------------- #

def _csv_list(text: str) -> tuple[str, ...]:
    aliases = {"naive": "naive-bayes", "uree": "ur-ee", "bayes": "naive-bayes"}
    return tuple(aliases.get(t.strip().lower(), t.strip().lower()) for t in text.split(",") if t.strip())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uree", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="pool a dataset with classical and Bayesian methods")
    a.add_argument("--config", help="JSON file of settings (flags take precedence)")
    a.add_argument("--input", help="study-record JSON file")
    a.add_argument("--dataset", choices=sorted(BUNDLED), help="use a bundled dataset")
    a.add_argument("--method", dest="methods", type=_csv_list,
                   help="comma list of dsl, ml, naive-bayes, ur-ee (default: all)")
    a.add_argument("--chains", type=int)
    a.add_argument("--burn-in", dest="burn_in", type=int)
    a.add_argument("--iterations", type=int)
    a.add_argument("--thin", type=int)
    a.add_argument("--seed", type=int)
    a.add_argument("--threads", type=int, help="maximum worker processes for chains")
    a.add_argument("--prior-ig-shape", dest="prior_ig_shape", type=float)
    a.add_argument("--prior-ig-scale", dest="prior_ig_scale", type=float,
                   help="IG scale b, with 1/variance ~ Gamma(shape, scale b)")
    a.add_argument("--horizon-days", dest="horizon_days", type=float)
    a.add_argument("--exact-ratio", dest="exact_ratio", action="store_const", const=True,
                   help="exact ratio-of-uniforms density for measured readings")
    a.add_argument("--strict", action="store_const", const=True,
                   help="fail on incoherent reading/event supports instead of clamping")
    a.add_argument("--output")

    s = sub.add_parser("simulate", help="generate a simulated censored-trial dataset")
    s.add_argument("--config")
    s.add_argument("--preset", choices=["appendix-b-config"])
    s.add_argument("--seed", type=int)
    s.add_argument("--k", type=int)
    s.add_argument("--literal-d", dest="literal_d", action="store_const", const=True,
                   help="pooled log odds ratio 1.0 instead of 0")
    s.add_argument("--output")

    d = sub.add_parser("density", help="write the reading and events densities of one arm")
    d.add_argument("--config")
    d.add_argument("--input")
    d.add_argument("--dataset", choices=sorted(BUNDLED))
    d.add_argument("--study", required=True)
    d.add_argument("--arm", choices=ARMS)
    d.add_argument("--exact-ratio", dest="exact_ratio", action="store_const", const=True)
    d.add_argument("--points", type=int)
    d.add_argument("--horizon-days", dest="horizon_days", type=float)
    d.add_argument("--output")

    r = sub.add_parser("report", help="compare two Bayesian fits from an analyze run")
    r.add_argument("--config")
    r.add_argument("--input", help="analyze output directory")
    r.add_argument("--compare", type=_csv_list)
    r.add_argument("--output")
    return p


_COMMANDS = {
    "analyze": (RunConfig, cmd_analyze),
    "simulate": (SimulateConfig, cmd_simulate),
    "density": (DensityConfig, cmd_density),
    "report": (ReportConfig, cmd_report),
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    cls, func = _COMMANDS[args.command]
    keys = [f.name for f in fields(cls)]
    try:
        cfg = _merge(cls, args, args.config, keys)
        return func(cfg)
    except CliFailure as exc:
        return _fail(exc.code, exc.kind, str(exc), exc.details)
    except _SAMPLER_ERRORS as exc:
        return _fail(EXIT_SAMPLER, type(exc).__name__, str(exc))
    except _VALIDATION_ERRORS as exc:
        return _fail(EXIT_VALIDATION, type(exc).__name__, str(exc))
    except OSError as exc:
        return _fail(EXIT_IO, type(exc).__name__, str(exc))


def _fail(code: int, kind: str, message: str, details=None) -> int:
    report = {"error": kind, "message": message, "exit_code": code}
    if details:
        report["details"] = details
    print(json.dumps(report), file=sys.stderr)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
