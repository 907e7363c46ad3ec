"""Command-line front end.

Subcommands cover the full workflow: run the adaptive loop, draw posterior
samples with either likelihood, summarize samples into HPD boxes, reproduce
the multi-run design comparison, generate space-filling designs, and evaluate
forward models. Every run writes into a fresh directory with a manifest
listing each output file and its content hash; reruns with the same seed
reproduce the same hashes (timings.csv is the one explicitly volatile file).

Exit codes: 0 success, 2 configuration/usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .adaptive import AdaptiveResult, run_adaptive
from .designs import DesignBox, latin_hypercube, sobol
from .errors import GpinvError
from .experiments import (
    EXPERIMENTS,
    ExperimentSpec,
    load_experiment,
    surrogate_loglik_rows,
    true_loglik_rows,
)
from .forward_models import write_grid_field
from .gp import GpEnsemble, HyperParams, TrainingSet, fit_single
from .likelihood import misfit_of_outputs
from .mcmc import BoxPrior
from .posterior import hpd_region, sample_posterior

log = logging.getLogger(__name__)

MANIFEST_SCHEMA_VERSION = 1
VOLATILE_FILES = {"timings.csv"}


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    digest.update(path.read_bytes())
    return digest.hexdigest()


def write_manifest(out_dir: Path, status: str = "complete") -> Path:
    entries = []
    for path in sorted(out_dir.iterdir()):
        if path.name == "manifest.json" or path.is_dir():
            continue
        entries.append({
            "name": path.name,
            "bytes": path.stat().st_size,
            "sha256": _sha256(path),
            "volatile": path.name in VOLATILE_FILES,
        })
    manifest = {"schema_version": MANIFEST_SCHEMA_VERSION, "status": status, "files": entries}
    target = out_dir / "manifest.json"
    target.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return target


def write_csv(path: Path, header: list[str], rows: np.ndarray) -> None:
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def _theta_names(p: int) -> list[str]:
    return [f"theta_{i + 1}" for i in range(p)]


def _psi_names(p: int) -> list[str]:
    return ["sigma_c"] + [f"ell_{i + 1}" for i in range(p)]


def _prepare_out_dir(raw: str, force: bool) -> Path:
    out = Path(raw)
    if out.exists() and any(out.iterdir()) and not force:
        raise UsageError(f"output directory {out} is not empty (use --force to reuse)")
    out.mkdir(parents=True, exist_ok=True)
    return out


class UsageError(Exception):
    """Bad arguments or configuration; maps to exit code 2."""


def _load_spec(args) -> ExperimentSpec:
    if getattr(args, "config", None):
        try:
            return load_experiment(args.config)
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot load config {args.config}: {exc}") from exc
    if getattr(args, "experiment", None):
        if args.experiment not in EXPERIMENTS:
            raise UsageError(f"unknown experiment {args.experiment!r}; choose from {sorted(EXPERIMENTS)}")
        return EXPERIMENTS[args.experiment]
    raise UsageError("provide --config FILE or --experiment NAME")


def _write_run_outputs(out: Path, spec: ExperimentSpec, result: AdaptiveResult, meas) -> None:
    p = result.training.input_dim
    q = result.training.n_outputs
    write_csv(out / "design.csv",
              _theta_names(p) + [f"f_{i + 1}" for i in range(q)],
              np.hstack([result.training.inputs, result.training.raw_outputs]))
    write_csv(out / "hyperposterior.csv", _psi_names(p), result.ensemble.hyperparams_matrix())
    write_csv(out / "measurement.csv", ["z", "noise_var"],
              np.column_stack([meas.z, meas.noise_vars]))
    (out / "record.json").write_text(result.record.to_json())
    timing_rows = np.array([[it.k, it.wall_time_s] for it in result.record.iterations])
    write_csv(out / "timings.csv", ["k", "wall_time_s"], timing_rows)
    (out / "config_snapshot.json").write_text(json.dumps(
        {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(spec).items()},
        indent=1, sort_keys=True))


def cmd_run_adaptive(args) -> int:
    spec = _load_spec(args)
    out = _prepare_out_dir(args.out, args.force)
    model = spec.build_model()
    meas = spec.measurement(model)
    cfg = spec.adaptive_config(seed=args.seed)
    result = run_adaptive(model, meas, cfg)
    _write_run_outputs(out, spec, result, meas)
    status = "partial" if result.record.termination == "forward-failure" else "complete"
    write_manifest(out, status=status)
    print(f"terminated: {result.record.termination}; design size {result.training.n_train}; "
          f"forward evaluations {model.n_evals}")
    print(f"outputs in {out}")
    return 0


def load_surrogate(run_dir: Path) -> tuple[GpEnsemble, TrainingSet]:
    """Rebuild the ensemble from a run directory's design and psi samples."""
    _, design = read_csv(run_dir / "design.csv")
    header, psis = read_csv(run_dir / "hyperposterior.csv")
    p = len(header) - 1
    training = TrainingSet.from_data(design[:, :p], design[:, p:])
    fits = [fit_single(training, HyperParams.from_vector(row)) for row in psis]
    return GpEnsemble(fits, training), training


def cmd_sample_posterior(args) -> int:
    spec = _load_spec(args)
    out = _prepare_out_dir(args.out, args.force)
    model = spec.build_model()
    meas = spec.measurement(model)
    prior = BoxPrior(spec.bounds.lower, spec.bounds.upper)
    if args.likelihood == "surrogate":
        if not args.run_dir:
            raise UsageError("surrogate likelihood requires --run-dir from a previous run-adaptive")
        ensemble, _ = load_surrogate(Path(args.run_dir))
        evals_before = model.n_evals
        loglik = surrogate_loglik_rows(ensemble, meas)
    else:
        loglik = true_loglik_rows(model, meas)
    samples = sample_posterior(
        loglik, prior, n_samples=args.n, seed=args.seed,
        n_walkers=spec.posterior_walkers, source=args.likelihood,
    )
    if args.likelihood == "surrogate" and model.n_evals != evals_before:
        raise GpinvError("surrogate sampling unexpectedly invoked the forward model")
    write_csv(out / "samples.csv", _theta_names(prior.dim), samples.samples)
    (out / "sampling_metadata.json").write_text(json.dumps(
        {"source": samples.source, **samples.metadata}, indent=1, sort_keys=True))
    write_manifest(out)
    print(f"{samples.n_samples} samples ({args.likelihood}) in {out}")
    return 0


def cmd_hpd(args) -> int:
    path = Path(args.samples)
    if not path.exists():
        raise UsageError(f"samples file {path} not found")
    header, data = read_csv(path)
    summary = hpd_region(data, alpha=args.alpha)
    for name, lo, hi in zip(header, summary.lower, summary.upper):
        print(f"{name}: [{lo:.6g}, {hi:.6g}]")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        write_csv(out, ["lower", "upper"], np.column_stack([summary.lower, summary.upper]))
    return 0


def _compare_one(config_path: str | None, experiment: str | None, seed: int):
    spec = load_experiment(config_path) if config_path else EXPERIMENTS[experiment]
    model = spec.build_model()
    meas = spec.measurement(model)
    result = run_adaptive(model, meas, spec.adaptive_config(seed=seed))
    last = result.record.iterations[-1]
    return {
        "n_train": result.training.n_train,
        "g_min": min(misfit_of_outputs(r, meas) for r in result.training.raw_outputs),
        "rel_improvement": last.relative_improvement,
        "threshold_met": result.record.termination in ("threshold", "zero-improvement"),
        "record_json": result.record.to_json(),
    }


def _lhs_one(config_path: str | None, experiment: str | None, seed: int, n_points: int):
    spec = load_experiment(config_path) if config_path else EXPERIMENTS[experiment]
    model = spec.build_model()
    meas = spec.measurement(model)
    design = latin_hypercube(n_points, spec.bounds, seed=seed)
    outputs = np.array([model.evaluate(row) for row in design])
    return {"n_train": n_points,
            "g_min": min(misfit_of_outputs(row, meas) for row in outputs)}


def cmd_compare_designs(args) -> int:
    spec = _load_spec(args)
    out = _prepare_out_dir(args.out, args.force)
    seeds = [args.seed + r for r in range(args.runs)]
    n_lhs = spec.n_initial + spec.n_max
    workers = args.workers or min(args.runs, 4)
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            adaptive_rows = list(pool.map(
                _compare_one, [args.config] * args.runs, [args.experiment] * args.runs, seeds))
            lhs_rows = list(pool.map(
                _lhs_one, [args.config] * args.runs, [args.experiment] * args.runs,
                seeds, [n_lhs] * args.runs))
    else:
        adaptive_rows = [_compare_one(args.config, args.experiment, s) for s in seeds]
        lhs_rows = [_lhs_one(args.config, args.experiment, s, n_lhs) for s in seeds]

    table = np.array([
        [r + 1, row["n_train"], row["g_min"], row["rel_improvement"], float(row["threshold_met"])]
        for r, row in enumerate(adaptive_rows)
    ])
    write_csv(out / "adaptive_table.csv",
              ["run", "final_n_train", "final_g_min", "final_rel_improvement", "threshold_met"],
              table)
    lhs_table = np.array([[r + 1, row["n_train"], row["g_min"]] for r, row in enumerate(lhs_rows)])
    write_csv(out / "lhs_table.csv", ["run", "n_train", "g_min"], lhs_table)
    for r, row in enumerate(adaptive_rows):
        (out / f"record_run{r + 1:02d}.json").write_text(row["record_json"])
    write_manifest(out)
    met = sum(row["threshold_met"] for row in adaptive_rows)
    print(f"{args.runs} adaptive runs: {met} met the threshold; tables in {out}")
    return 0


def cmd_gen_design(args) -> int:
    if args.config or args.experiment:
        box = _load_spec(args).bounds
    elif args.bounds:
        pairs = [tuple(map(float, chunk.split(","))) for chunk in args.bounds.split()]
        box = DesignBox([lo for lo, _ in pairs], [hi for _, hi in pairs])
    else:
        raise UsageError("provide --config, --experiment, or --bounds")
    if args.kind == "lhs":
        points = latin_hypercube(args.n, box, seed=args.seed)
    else:
        points = sobol(args.n, box, skip=args.skip)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out, _theta_names(box.dim), points)
    print(f"{args.n} {args.kind} points in {out}")
    return 0


def cmd_eval_model(args) -> int:
    spec = _load_spec(args)
    out = _prepare_out_dir(args.out, args.force)
    model = spec.build_model()
    theta = np.array([float(v) for v in args.theta.replace(",", " ").split()])
    outputs = model.fine_evaluate(theta) if args.fine else model.evaluate(theta)
    write_csv(out / "outputs.csv", [f"f_{i + 1}" for i in range(outputs.size)], outputs[None, :])
    if args.dump_field and hasattr(model, "solve_field"):
        if spec.model_kind == "heat":
            for tm in model.measure_times:
                field = model.solve_field(theta, tm, fine=args.fine)
                write_grid_field(out / f"field_t{tm:g}.txt", field)
        else:
            cfg = model.fine_cfg if args.fine else model.cfg
            write_grid_field(out / "field.txt", model.solve_field(theta, cfg))
    write_manifest(out)
    print(f"outputs in {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpinv", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="info-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_spec_args(p):
        p.add_argument("--config", help="experiment config file (INI)")
        p.add_argument("--experiment", help=f"built-in experiment: {sorted(EXPERIMENTS)}")

    p = sub.add_parser("run-adaptive", help="run the adaptive design loop")
    add_spec_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_run_adaptive)

    p = sub.add_parser("sample-posterior", help="draw posterior samples")
    add_spec_args(p)
    p.add_argument("--likelihood", choices=("true", "surrogate"), default="surrogate")
    p.add_argument("--run-dir", help="run-adaptive output directory (surrogate mode)")
    p.add_argument("--n", type=int, default=20_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_sample_posterior)

    p = sub.add_parser("hpd", help="per-dimension HPD intervals of a sample CSV")
    p.add_argument("--samples", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out")
    p.set_defaults(func=cmd_hpd)

    p = sub.add_parser("compare-designs", help="multi-run adaptive vs LHS study")
    add_spec_args(p)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=0, help="0 = auto")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_compare_designs)

    p = sub.add_parser("gen-design", help="generate LHS or Sobol points")
    add_spec_args(p)
    p.add_argument("--bounds", help='space-separated "lo,hi" pairs, one per dimension')
    p.add_argument("--kind", choices=("lhs", "sobol"), default="lhs")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--skip", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_design)

    p = sub.add_parser("eval-model", help="evaluate a forward model at one point")
    add_spec_args(p)
    p.add_argument("--theta", required=True, help='comma- or space-separated values')
    p.add_argument("--fine", action="store_true", help="use the refined discretization")
    p.add_argument("--dump-field", action="store_true", help="write PDE solution fields")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_eval_model)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (GpinvError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


cli_main = main

if __name__ == "__main__":
    sys.exit(main())
