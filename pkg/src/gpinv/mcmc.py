"""Affine-invariant ensemble sampler built on the stretch move.

The walker population is split into two halves; each half is updated in turn
against the frozen complementary half. All random draws for a half-update are
taken from the ensemble generator before any density evaluation, so the
accept/reject decisions depend on the positions only through the density
values. That is what makes runs reproducible bit for bit and lets density
evaluations run in parallel without perturbing the stream.

Log-probability callables are vectorized: they receive an (m, d) array of row
points and return an (m,) array. Use :func:`vectorize_rows` to adapt a scalar
function.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InitializationError
from .gp import GpEnsemble, TrainingSet, _lml_batch, fit_single, HyperParams

log = logging.getLogger(__name__)

LogProb = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BoxPrior:
    """Uniform prior over an axis-aligned box."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", np.atleast_1d(np.asarray(self.lower, dtype=float)))
        object.__setattr__(self, "upper", np.atleast_1d(np.asarray(self.upper, dtype=float)))
        if self.lower.shape != self.upper.shape:
            raise ValueError("bound vectors must have equal length")
        if not np.all(self.lower < self.upper):
            raise ValueError("lower bounds must be strictly below upper bounds")

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.all((points >= self.lower) & (points <= self.upper), axis=1)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.lower + (self.upper - self.lower) * rng.random((n, self.dim))


@dataclass
class WalkerEnsemble:
    """Current walker positions with cached log-probabilities and RNG state."""

    positions: np.ndarray   # (n_walkers, d)
    log_probs: np.ndarray   # (n_walkers,)
    rng: np.random.Generator


def vectorize_rows(f: Callable[[np.ndarray], float]) -> LogProb:
    """Adapt a scalar log-probability f(point) to the row-batched convention."""

    def batched(points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.array([float(f(row)) for row in points])

    return batched


def stretch_step(
    ens: WalkerEnsemble,
    log_prob: LogProb,
    stretch_a: float = 2.0,
    hook: Callable[[int, np.ndarray, np.ndarray, np.ndarray], None] | None = None,
) -> int:
    """One full stretch-move sweep (both halves); returns the accepted count.

    For walker x_k in the active half, a partner x_j is drawn from the frozen
    half, z is drawn with density proportional to 1/sqrt(z) on [1/a, a], and
    the proposal y = x_j + z (x_k - x_j) is accepted with probability
    min(1, z^(d-1) exp(logp(y) - logp(x_k))).

    `hook(half_index, active_indices, partner_indices, z)` fires before each
    half's proposals are evaluated; tests use it to watch the pairing.
    """
    if stretch_a <= 1.0:
        raise ValueError("stretch parameter must exceed 1")
    n, d = ens.positions.shape
    if n % 2:
        raise ValueError("number of walkers must be even")
    half = n // 2
    accepted = 0
    for half_index, (active, frozen) in enumerate((
        (np.arange(0, half), np.arange(half, n)),
        (np.arange(half, n), np.arange(0, half)),
    )):
        m = active.size
        partners = frozen[ens.rng.integers(0, frozen.size, size=m)]
        z = ((stretch_a - 1.0) * ens.rng.random(m) + 1.0) ** 2 / stretch_a
        accept_u = ens.rng.random(m)
        if hook is not None:
            hook(half_index, active, partners, z)
        anchor = ens.positions[partners]
        proposals = anchor + z[:, None] * (ens.positions[active] - anchor)
        new_lp = np.asarray(log_prob(proposals), dtype=float)
        bad = np.isnan(new_lp)
        if np.any(bad):
            log.warning("log-probability returned NaN for %d proposals; treating as -inf", bad.sum())
            new_lp = np.where(bad, -np.inf, new_lp)
        with np.errstate(invalid="ignore", divide="ignore"):
            log_ratio = (d - 1) * np.log(z) + new_lp - ens.log_probs[active]
            take = np.log(accept_u) < log_ratio
        take &= new_lp > -np.inf  # zero-probability proposals are never taken
        idx = active[take]
        ens.positions[idx] = proposals[take]
        ens.log_probs[idx] = new_lp[take]
        accepted += int(take.sum())
    return accepted


def _restrict_to_box(log_prob: LogProb, prior: BoxPrior) -> LogProb:
    """Short-circuit rows outside the box to -inf without evaluating them."""

    def restricted(points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        out = np.full(points.shape[0], -np.inf)
        inside = prior.contains(points)
        if np.any(inside):
            out[inside] = np.asarray(log_prob(points[inside]), dtype=float)
        return out

    return restricted


def _init_ensemble(
    log_prob: LogProb,
    prior: BoxPrior,
    n_walkers: int,
    rng: np.random.Generator,
    init_positions: np.ndarray | None = None,
) -> WalkerEnsemble:
    if n_walkers % 2 or n_walkers < 2 * prior.dim:
        raise ValueError(f"need an even walker count >= {2 * prior.dim}, got {n_walkers}")
    if init_positions is not None:
        positions = np.array(init_positions, dtype=float)
        if positions.shape != (n_walkers, prior.dim):
            raise ValueError(f"init_positions must be ({n_walkers}, {prior.dim})")
        if not np.all(prior.contains(positions)):
            raise ValueError("init_positions must lie inside the prior box")
    else:
        positions = prior.sample(rng, n_walkers)
    log_probs = np.asarray(log_prob(positions), dtype=float)
    log_probs = np.where(np.isnan(log_probs), -np.inf, log_probs)
    if not np.any(log_probs > -np.inf):
        raise InitializationError("every initial walker has zero probability")
    # Walkers stuck at -inf would poison acceptance ratios; restart them on
    # the best initial position so every cached log_prob is finite.
    stuck = log_probs == -np.inf
    if np.any(stuck):
        best = int(np.argmax(log_probs))
        positions[stuck] = positions[best]
        log_probs[stuck] = log_probs[best]
        log.warning("re-seeded %d walkers that started at zero probability", stuck.sum())
    return WalkerEnsemble(positions, log_probs, rng)


def run_chain(
    log_prob: LogProb,
    prior: BoxPrior,
    n_walkers: int,
    n_steps: int,
    seed: int,
    stretch_a: float = 2.0,
    keep_every_step: bool = False,
    init_positions: np.ndarray | None = None,
) -> tuple[np.ndarray, float]:
    """Drive the sampler for n_steps sweeps from a uniform start in the box.

    Returns (samples, acceptance_rate). With keep_every_step the samples have
    shape (n_steps, n_walkers, d) — the position after every sweep — otherwise
    just the final (n_walkers, d) states. `init_positions` overrides the
    uniform-in-box walker initialization.
    """
    rng = np.random.default_rng(seed)
    target = _restrict_to_box(log_prob, prior)
    ens = _init_ensemble(target, prior, n_walkers, rng, init_positions)
    history = np.empty((n_steps, n_walkers, prior.dim)) if keep_every_step else None
    accepted = 0
    for step in range(n_steps):
        accepted += stretch_step(ens, target, stretch_a)
        if keep_every_step:
            history[step] = ens.positions
    rate = accepted / max(1, n_steps * n_walkers)
    log.debug("sampler finished: %d walkers, %d steps, acceptance %.3f", n_walkers, n_steps, rate)
    if keep_every_step:
        return history, rate
    return ens.positions.copy(), rate


def run_sampler(
    log_prob: LogProb,
    prior: BoxPrior,
    n_walkers: int = 200,
    n_steps: int = 400,
    seed: int = 0,
    stretch_a: float = 2.0,
) -> np.ndarray:
    """Final walker states after n_steps sweeps: an (n_walkers, d) sample set."""
    samples, _ = run_chain(log_prob, prior, n_walkers, n_steps, seed, stretch_a)
    return samples


def sample_hyperposterior(
    training: TrainingSet,
    prior: BoxPrior,
    n_walkers: int = 200,
    n_steps: int = 400,
    seed: int = 0,
) -> GpEnsemble:
    """Draw hyperparameter samples from their posterior and fit each one.

    The target is the product of the per-output marginal likelihoods times the
    box indicator. One fit per final walker; the rare fit failure is replaced
    by duplicating a uniformly chosen successful walker so the ensemble size
    stays fixed.
    """
    if prior.dim != training.input_dim + 1:
        raise ValueError(
            f"hyperparameter prior dimension {prior.dim} != p+1 = {training.input_dim + 1}"
        )

    def target(psis: np.ndarray) -> np.ndarray:
        return _lml_batch(training, psis)

    psis = run_sampler(target, prior, n_walkers, n_steps, seed)
    fits, failures = [], []
    for row in psis:
        try:
            fits.append(fit_single(training, HyperParams.from_vector(row)))
        except Exception:
            failures.append(row)
    if not fits:
        raise InitializationError("no hyperparameter sample produced a usable fit")
    if failures:
        rng = np.random.default_rng(np.random.SeedSequence([seed, len(fits)]))
        log.warning("replacing %d failed hyperparameter fits by duplication", len(failures))
        for _ in failures:
            fits.append(fits[int(rng.integers(0, len(fits)))])
    return GpEnsemble(fits, training)
