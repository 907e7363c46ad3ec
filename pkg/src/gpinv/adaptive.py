"""The adaptive design loop.

Each iteration refits the hyperparameter posterior from scratch, finds the
input with the largest expected improvement in fit, and either stops (the
best possible improvement is below a fraction of the incumbent misfit) or
pays for one forward-model evaluation there. The record keeps enough of the
trajectory to audit monotonicity and budget accounting afterwards.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .acquisition import AcquisitionState, expected_improvement, maximize_acquisition
from .designs import DesignBox, latin_hypercube, sobol
from .gp import GpEnsemble, TrainingSet
from .likelihood import MeasurementModel, misfit_of_outputs
from .mcmc import BoxPrior, sample_hyperposterior

log = logging.getLogger(__name__)

RECORD_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class AdaptiveConfig:
    """Knobs for one adaptive run."""

    bounds: DesignBox
    hyper_prior: BoxPrior
    initial_design: np.ndarray            # (n0, p) points inside bounds
    n_max: int                            # added-point budget (iterations)
    eps_thresh: float = 0.01
    eta: float = 1e-4
    n_walkers: int = 200
    n_steps: int = 400
    starts: str = "sobol"                 # "sobol" or "grid" multistart seeding
    n_starts: int = 50
    extra_starts: int = 100               # second sweep before accepting a stop
    confirm_before_stop: bool | None = None  # default: enabled for p >= 2
    seed: int = 0

    def __post_init__(self):
        if self.eps_thresh <= 0.0:
            raise ValueError("eps_thresh must be positive")
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")
        design = np.atleast_2d(np.asarray(self.initial_design, dtype=float))
        object.__setattr__(self, "initial_design", design)
        if design.shape[0] < 1 or not np.all(self.bounds.contains(design)):
            raise ValueError("initial design must be nonempty and inside the bounds")

    @property
    def confirm(self) -> bool:
        if self.confirm_before_stop is None:
            return self.bounds.dim >= 2
        return self.confirm_before_stop


@dataclass
class IterationRecord:
    k: int
    theta: np.ndarray
    improvement: float
    g_min: float
    psi_mean: np.ndarray
    psi_std: np.ndarray
    accepted: bool           # True when theta joined the design
    wall_time_s: float

    @property
    def relative_improvement(self) -> float:
        return self.improvement / self.g_min if self.g_min > 0 else float("inf")


@dataclass
class RunRecord:
    """Full trace of one adaptive run."""

    initial_inputs: np.ndarray
    iterations: list[IterationRecord] = field(default_factory=list)
    termination: str = "running"
    seed: int = 0
    eps_thresh: float = 0.01
    n_max: int = 0

    @property
    def g_min_history(self) -> np.ndarray:
        return np.array([it.g_min for it in self.iterations])

    @property
    def added_inputs(self) -> np.ndarray:
        rows = [it.theta for it in self.iterations if it.accepted]
        p = self.initial_inputs.shape[1]
        return np.array(rows).reshape(-1, p)

    @property
    def n_forward_evals(self) -> int:
        return self.initial_inputs.shape[0] + self.added_inputs.shape[0]

    def to_json_dict(self, include_timings: bool = False) -> dict:
        iterations = []
        for it in self.iterations:
            entry = {
                "k": it.k,
                "theta": list(map(float, it.theta)),
                "improvement": it.improvement,
                "g_min": it.g_min,
                "psi_mean": list(map(float, it.psi_mean)),
                "psi_std": list(map(float, it.psi_std)),
                "accepted": it.accepted,
            }
            if include_timings:
                entry["wall_time_s"] = it.wall_time_s
            iterations.append(entry)
        return {
            "schema_version": RECORD_SCHEMA_VERSION,
            "seed": self.seed,
            "eps_thresh": self.eps_thresh,
            "n_max": self.n_max,
            "termination": self.termination,
            "initial_inputs": [list(map(float, row)) for row in self.initial_inputs],
            "iterations": iterations,
        }

    def to_json(self, include_timings: bool = False) -> str:
        return json.dumps(self.to_json_dict(include_timings), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        doc = json.loads(text)
        if doc.get("schema_version") != RECORD_SCHEMA_VERSION:
            raise ValueError(f"unsupported record schema {doc.get('schema_version')!r}")
        record = cls(
            initial_inputs=np.array(doc["initial_inputs"], dtype=float),
            termination=doc["termination"],
            seed=doc["seed"],
            eps_thresh=doc["eps_thresh"],
            n_max=doc["n_max"],
        )
        for entry in doc["iterations"]:
            record.iterations.append(IterationRecord(
                k=entry["k"],
                theta=np.array(entry["theta"], dtype=float),
                improvement=entry["improvement"],
                g_min=entry["g_min"],
                psi_mean=np.array(entry["psi_mean"], dtype=float),
                psi_std=np.array(entry["psi_std"], dtype=float),
                accepted=entry["accepted"],
                wall_time_s=entry.get("wall_time_s", float("nan")),
            ))
        return record


@dataclass
class AdaptiveResult:
    ensemble: GpEnsemble
    training: TrainingSet
    record: RunRecord


def make_starts(cfg: AdaptiveConfig) -> np.ndarray:
    """Multistart seed points; the Sobol variant skips the degenerate corner."""
    if cfg.starts == "grid":
        if cfg.bounds.dim != 1:
            raise ValueError("grid starts are only defined for 1-D problems")
        line = np.linspace(cfg.bounds.lower[0], cfg.bounds.upper[0], cfg.n_starts)
        return line[:, None]
    if cfg.starts == "sobol":
        return sobol(cfg.n_starts, cfg.bounds, skip=1)
    raise ValueError(f"unknown start strategy {cfg.starts!r}")


def make_extra_starts(cfg: AdaptiveConfig) -> np.ndarray:
    return sobol(cfg.extra_starts, cfg.bounds, skip=1 + cfg.n_starts)


def initial_design_lhs(n: int, bounds: DesignBox, seed: int) -> np.ndarray:
    return latin_hypercube(n, bounds, seed=seed)


def _iteration_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, k]).generate_state(1)[0])


def run_adaptive(model, meas: MeasurementModel, cfg: AdaptiveConfig) -> AdaptiveResult:
    """Run the adaptive loop to termination.

    Termination reasons: "threshold" (best improvement under
    eps_thresh * g_min), "zero-improvement" (every multistart found exactly
    zero), "budget" (n_max points added), or "forward-failure" (the model
    raised at a selected input; partial record returned).
    """
    outputs = np.array([model.evaluate(row) for row in cfg.initial_design])
    training = TrainingSet.from_data(cfg.initial_design, outputs)
    record = RunRecord(
        initial_inputs=cfg.initial_design.copy(),
        seed=cfg.seed, eps_thresh=cfg.eps_thresh, n_max=cfg.n_max,
    )

    starts = make_starts(cfg)
    extra = make_extra_starts(cfg) if cfg.confirm and cfg.extra_starts > 0 else None
    ensemble = None
    for k in range(1, cfg.n_max + 1):
        tic = time.perf_counter()
        ensemble = sample_hyperposterior(
            training, cfg.hyper_prior, cfg.n_walkers, cfg.n_steps,
            seed=_iteration_seed(cfg.seed, k),
        )
        g_min = min(misfit_of_outputs(row, meas) for row in training.raw_outputs)
        state = AcquisitionState.from_ensemble(ensemble, meas, cfg.bounds, eta=cfg.eta)
        best = maximize_acquisition(state, starts)
        improvement = expected_improvement(best.theta, state)
        stop = improvement < cfg.eps_thresh * g_min
        if stop and extra is not None:
            confirm = maximize_acquisition(state, extra)
            confirm_improvement = expected_improvement(confirm.theta, state)
            if confirm_improvement > improvement:
                best, improvement = confirm, confirm_improvement
                stop = improvement < cfg.eps_thresh * g_min

        psis = ensemble.hyperparams_matrix()
        entry = IterationRecord(
            k=k, theta=best.theta.copy(), improvement=improvement, g_min=g_min,
            psi_mean=psis.mean(axis=0), psi_std=psis.std(axis=0),
            accepted=False, wall_time_s=time.perf_counter() - tic,
        )
        record.iterations.append(entry)

        if stop:
            record.termination = "zero-improvement" if improvement == 0.0 else "threshold"
            log.info("iteration %d: stopping (%s), I=%.3e, g_min=%.4f",
                     k, record.termination, improvement, g_min)
            return AdaptiveResult(ensemble, training, record)

        try:
            new_outputs = model.evaluate(best.theta)
        except Exception as exc:
            record.termination = "forward-failure"
            log.error("forward model failed at %s: %s; returning partial record",
                      best.theta, exc)
            return AdaptiveResult(ensemble, training, record)
        training = training.augmented(best.theta, new_outputs)
        entry.accepted = True
        entry.wall_time_s = time.perf_counter() - tic
        log.info("iteration %d: added %s, I=%.3e, g_min=%.4f", k, best.theta, improvement, g_min)

    record.termination = "budget"
    ensemble = sample_hyperposterior(
        training, cfg.hyper_prior, cfg.n_walkers, cfg.n_steps,
        seed=_iteration_seed(cfg.seed, cfg.n_max + 1),
    )
    return AdaptiveResult(ensemble, training, record)
