"""Posterior sampling with either likelihood, and HPD interval summaries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mcmc import BoxPrior, LogProb, run_chain

DEFAULT_N_SAMPLES = 20_000
DEFAULT_N_WALKERS = 100


@dataclass
class PosteriorSampleSet:
    """Samples from a box-supported posterior plus their provenance."""

    samples: np.ndarray      # (n, p)
    source: str              # "true-model" | "surrogate" | free-form
    metadata: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]


def sample_posterior(
    loglik: LogProb,
    prior: BoxPrior,
    n_samples: int = DEFAULT_N_SAMPLES,
    seed: int = 0,
    n_walkers: int = DEFAULT_N_WALKERS,
    source: str = "custom",
    pool_factor: int = 20,
) -> PosteriorSampleSet:
    """Ensemble-MCMC samples from p(theta) proportional to exp(loglik) in the box.

    Runs 2k sweeps of n_walkers walkers where k = ceil(n_samples / n_walkers),
    discards the first half as burn-in, and flattens the remainder. `loglik`
    follows the row-batched convention of :mod:`gpinv.mcmc`.

    Walkers start at the best of a uniform candidate pool of
    pool_factor * n_walkers points, so sharply concentrated targets do not
    leave walkers stranded behind likelihood barriers. Set pool_factor=1 to
    start at plain uniform draws.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    if pool_factor < 1:
        raise ValueError("pool_factor must be at least 1")
    kept_steps = -(-n_samples // n_walkers)
    init = _best_of_pool(loglik, prior, n_walkers, pool_factor, seed)
    chain, acceptance = run_chain(
        loglik, prior, n_walkers, 2 * kept_steps, seed=seed,
        keep_every_step=True, init_positions=init,
    )
    samples = chain[kept_steps:].reshape(-1, prior.dim)[:n_samples]
    return PosteriorSampleSet(
        samples=samples,
        source=source,
        metadata={
            "seed": seed,
            "n_walkers": n_walkers,
            "burn_in_steps": kept_steps,
            "kept_steps": kept_steps,
            "acceptance_rate": acceptance,
            "init": f"best-of-pool({pool_factor * n_walkers})",
        },
    )


def _best_of_pool(loglik: LogProb, prior: BoxPrior, n_walkers: int,
                  pool_factor: int, seed: int) -> np.ndarray:
    """Top-n_walkers points of a uniform candidate pool (stable under ties)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x9001]))
    pool = prior.sample(rng, pool_factor * n_walkers)
    values = np.asarray(loglik(pool), dtype=float)
    values = np.where(np.isnan(values), -np.inf, values)
    order = np.argsort(-values, kind="stable")
    return pool[order[:n_walkers]]


@dataclass(frozen=True)
class HpdSummary:
    """Per-dimension shortest credible intervals at a common level."""

    alpha: float
    lower: np.ndarray   # (p,)
    upper: np.ndarray   # (p,)

    def intervals(self) -> list[tuple[float, float]]:
        return list(zip(self.lower, self.upper))

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.all((points >= self.lower) & (points <= self.upper), axis=1)


def shortest_interval(values: np.ndarray, level: float) -> tuple[float, float]:
    """Shortest window over sorted values containing ceil(level * n) of them."""
    values = np.sort(np.asarray(values, dtype=float))
    n = values.shape[0]
    m = int(np.ceil(level * n))
    m = min(max(m, 2), n)
    widths = values[m - 1:] - values[: n - m + 1]
    start = int(np.argmin(widths))
    return float(values[start]), float(values[start + m - 1])


def hpd_region(samples: PosteriorSampleSet | np.ndarray, alpha: float = 0.05) -> HpdSummary:
    """Per-dimension shortest (1 - alpha) intervals, reported as a box.

    Marginal construction: each dimension is summarized independently, which
    matches how rectangular credible regions are usually reported. The box
    itself covers slightly less than 1 - alpha of the joint mass when the
    dimensions are nearly independent.
    """
    values = samples.samples if isinstance(samples, PosteriorSampleSet) else np.atleast_2d(samples)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[0] < 100:
        raise ValueError(f"need at least 100 samples, got {values.shape[0]}")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    bounds = np.array([shortest_interval(values[:, j], 1.0 - alpha) for j in range(values.shape[1])])
    return HpdSummary(alpha=alpha, lower=bounds[:, 0], upper=bounds[:, 1])
