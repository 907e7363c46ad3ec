"""Squared-exponential Gaussian process regression with an ensemble of
hyperparameter samples.

A single predictor is trained by conditioning on normalized outputs; the fully
Bayesian treatment keeps many hyperparameter vectors at once and treats the
resulting predictive distribution as an equally weighted Gaussian mixture.
All outputs of a multi-output model share one covariance function and are
conditionally independent given it, which is what makes a single Cholesky
factor per hyperparameter vector sufficient.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .errors import IllConditionedKernelError

log = logging.getLogger(__name__)

# Diagonal jitter policy: start at BASE_JITTER * sigma_c^2, escalate by
# JITTER_GROWTH until MAX_JITTER * sigma_c^2, then give up.
BASE_JITTER = 1e-10
MAX_JITTER = 1e-6
JITTER_GROWTH = 10.0

# Columns whose population variance falls below VAR_FLOOR * max(1, mean^2)
# are treated as constant: scaled to zeros, variance pinned at the floor.
VAR_FLOOR = 1e-12

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class HyperParams:
    """Signal standard deviation and per-dimension length-scales."""

    sigma_c: float
    lengthscales: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lengthscales", np.atleast_1d(np.asarray(self.lengthscales, dtype=float)))
        if not self.sigma_c > 0.0:
            raise ValueError(f"sigma_c must be positive, got {self.sigma_c}")
        if not np.all(self.lengthscales > 0.0):
            raise ValueError("all length-scales must be positive")

    @property
    def input_dim(self) -> int:
        return self.lengthscales.shape[0]

    def as_vector(self) -> np.ndarray:
        """Flat (p+1,) vector: sigma_c first, then the length-scales."""
        return np.concatenate(([self.sigma_c], self.lengthscales))

    @classmethod
    def from_vector(cls, psi: np.ndarray) -> "HyperParams":
        psi = np.asarray(psi, dtype=float)
        return cls(sigma_c=float(psi[0]), lengthscales=psi[1:].copy())


def normalize_outputs(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Center and scale each output column to zero mean and unit variance.

    Uses the population (1/n) variance. Near-constant columns hit a variance
    floor and are scaled to exact zeros so the downstream fit sees a
    well-posed, if uninformative, target.

    Returns (scaled, means, vars) where scaled is (n, q).
    """
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    means = raw.mean(axis=0)
    variances = raw.var(axis=0)  # population convention
    floor = VAR_FLOOR * np.maximum(1.0, means**2)
    degenerate = variances < floor
    variances = np.where(degenerate, floor, variances)
    scaled = (raw - means) / np.sqrt(variances)
    scaled[:, degenerate] = 0.0
    return scaled, means, variances


@dataclass(frozen=True)
class TrainingSet:
    """Design inputs with raw and normalized forward-model outputs.

    Immutable; growing the design produces a new instance with freshly
    computed normalization statistics.
    """

    inputs: np.ndarray        # (n, p)
    raw_outputs: np.ndarray   # (n, q)
    out_means: np.ndarray     # (q,)
    out_vars: np.ndarray      # (q,)
    scaled_outputs: np.ndarray  # (n, q)

    @classmethod
    def from_data(cls, inputs: np.ndarray, raw_outputs: np.ndarray) -> "TrainingSet":
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        raw_outputs = np.asarray(raw_outputs, dtype=float)
        if raw_outputs.ndim == 1:
            raw_outputs = raw_outputs[:, None]
        if inputs.shape[0] != raw_outputs.shape[0]:
            raise ValueError(
                f"row mismatch: {inputs.shape[0]} inputs vs {raw_outputs.shape[0]} output rows"
            )
        if inputs.shape[0] < 1:
            raise ValueError("training set must contain at least one point")
        scaled, means, variances = normalize_outputs(raw_outputs)
        return cls(inputs, raw_outputs, means, variances, scaled)

    @property
    def n_train(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.raw_outputs.shape[1]

    def augmented(self, theta: np.ndarray, outputs: np.ndarray) -> "TrainingSet":
        """New training set with one more (theta, f(theta)) pair."""
        theta = np.asarray(theta, dtype=float).reshape(1, -1)
        if np.any(np.all(np.abs(self.inputs - theta) <= 1e-12, axis=1)):
            raise ValueError(f"duplicate training input {theta.ravel()}")
        outputs = np.asarray(outputs, dtype=float).reshape(1, -1)
        return TrainingSet.from_data(
            np.vstack([self.inputs, theta]),
            np.vstack([self.raw_outputs, outputs]),
        )


def sq_exp_cov(a: np.ndarray, b: np.ndarray, psi: HyperParams) -> float:
    """Squared-exponential covariance sigma_c^2 * exp(-sum((a-b)^2 / l^2))."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape or a.shape[0] != psi.input_dim:
        raise ValueError(
            f"dimension mismatch: a{a.shape}, b{b.shape}, lengthscales ({psi.input_dim},)"
        )
    r2 = np.sum((a - b) ** 2 / psi.lengthscales**2)
    return float(psi.sigma_c**2 * np.exp(-r2))


def _cov_matrix(inputs: np.ndarray, psi: HyperParams) -> np.ndarray:
    diff2 = (inputs[:, None, :] - inputs[None, :, :]) ** 2
    return psi.sigma_c**2 * np.exp(-np.einsum("ijp,p->ij", diff2, 1.0 / psi.lengthscales**2))


@dataclass(frozen=True)
class GpFit:
    """A single-hyperparameter predictor: Cholesky factor plus per-output weights."""

    chol: np.ndarray       # (n, n) lower triangular factor of C + jitter*I
    weights: np.ndarray    # (n, q), column i solves C v_i = scaled_outputs[:, i]
    hyperparams: HyperParams
    training: TrainingSet
    jitter: float          # absolute diagonal shift actually applied


def fit_single(training: TrainingSet, psi: HyperParams, jitter: float = BASE_JITTER) -> GpFit:
    """Factorize the training covariance and solve for the predictive weights.

    `jitter` is the relative starting value for the diagonal shift
    (absolute shift = jitter * sigma_c^2); it escalates by factors of
    10 up to MAX_JITTER before failing. Passing 0 attempts a single raw
    factorization with no safeguard.
    """
    if psi.input_dim != training.input_dim:
        raise ValueError(
            f"hyperparameter dimension {psi.input_dim} != input dimension {training.input_dim}"
        )
    C = _cov_matrix(training.inputs, psi)
    levels = [0.0] if jitter == 0.0 else _jitter_ladder(jitter)
    n = training.n_train
    for level in levels:
        shift = level * psi.sigma_c**2
        try:
            L = cholesky(C + shift * np.eye(n), lower=True)
        except np.linalg.LinAlgError:
            continue
        if level > jitter:
            log.debug("jitter escalated to %.1e for n_train=%d", level, n)
        weights = cho_solve((L, True), training.scaled_outputs)
        return GpFit(L, weights, psi, training, shift)
    cond = _condition_estimate(C)
    raise IllConditionedKernelError(
        f"covariance factorization failed after jitter escalation to {MAX_JITTER:g} "
        f"(n_train={n}, cond~{cond:.2e})",
        cond_estimate=cond,
    )


def _jitter_ladder(start: float) -> list[float]:
    levels = []
    level = start
    while level <= MAX_JITTER * (1.0 + 1e-12):
        levels.append(level)
        level *= JITTER_GROWTH
    return levels


def _condition_estimate(C: np.ndarray) -> float:
    try:
        return float(np.linalg.cond(C))
    except np.linalg.LinAlgError:
        return float("inf")


def predict(fit: GpFit, theta: np.ndarray) -> tuple[np.ndarray, float]:
    """Predictive means (per output, normalized scale) and shared variance at theta.

    mean_i = c^T C^-1 y_i, variance = c(theta,theta) - c^T C^-1 c, clamped at 0.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    psi = fit.hyperparams
    diff2 = (fit.training.inputs - theta) ** 2
    c = psi.sigma_c**2 * np.exp(-diff2 @ (1.0 / psi.lengthscales**2))
    means = c @ fit.weights
    half = solve_triangular(fit.chol, c, lower=True)
    variance = psi.sigma_c**2 - float(half @ half)
    return means, max(variance, 0.0)


def log_marginal_likelihood(training: TrainingSet, psi: HyperParams, jitter: float = BASE_JITTER) -> float:
    """Sum over outputs of log N(scaled_outputs_i | 0, C_psi), via Cholesky."""
    value = _lml_batch(training, psi.as_vector()[None, :], jitter=jitter)[0]
    if not np.isfinite(value):
        C = _cov_matrix(training.inputs, psi)
        raise IllConditionedKernelError(
            "covariance factorization failed in marginal likelihood",
            cond_estimate=_condition_estimate(C),
        )
    return float(value)


def _lml_batch(training: TrainingSet, Psi: np.ndarray, jitter: float = BASE_JITTER) -> np.ndarray:
    """Vectorized log marginal likelihood over rows of Psi = [sigma_c, l_1..l_p].

    Rows whose covariance cannot be factorized anywhere on the jitter ladder
    come back as -inf instead of raising; MCMC treats them as zero-probability
    states. Invalid (non-positive) hyperparameter rows are -inf as well.
    """
    Psi = np.atleast_2d(np.asarray(Psi, dtype=float))
    m = Psi.shape[0]
    out = np.full(m, -np.inf)
    valid = np.all(Psi > 0.0, axis=1)
    if not np.any(valid):
        return out
    sigma2 = Psi[valid, 0] ** 2
    inv_l2 = 1.0 / Psi[valid, 1:] ** 2
    X = training.inputs
    Y = training.scaled_outputs
    n, q = Y.shape
    diff2 = (X[:, None, :] - X[None, :, :]) ** 2          # (n, n, p)
    Cs = sigma2[:, None, None] * np.exp(-np.einsum("ijp,kp->kij", diff2, inv_l2))
    eye = np.eye(n)
    vals = np.full(Cs.shape[0], -np.inf)
    pending = np.arange(Cs.shape[0])
    level = jitter if jitter > 0.0 else BASE_JITTER
    while pending.size and level <= MAX_JITTER * (1.0 + 1e-12):
        shifted = Cs[pending] + (level * sigma2[pending])[:, None, None] * eye
        L, ok = _batched_cholesky(shifted)
        if np.any(ok):
            idx = pending[ok]
            half = np.linalg.solve(L[ok], np.broadcast_to(Y, (idx.size, n, q)))
            quad = np.einsum("knq,knq->k", half, half)
            logdet = 2.0 * np.sum(np.log(np.diagonal(L[ok], axis1=1, axis2=2)), axis=1)
            vals[idx] = -0.5 * quad - 0.5 * q * (logdet + n * LOG_2PI)
        pending = pending[~ok]
        level *= JITTER_GROWTH
    out[valid] = vals
    return out


def _batched_cholesky(mats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched Cholesky with a per-matrix success mask instead of a raise."""
    try:
        return np.linalg.cholesky(mats), np.ones(mats.shape[0], dtype=bool)
    except np.linalg.LinAlgError:
        pass
    ok = np.zeros(mats.shape[0], dtype=bool)
    out = np.zeros_like(mats)
    for k in range(mats.shape[0]):
        try:
            out[k] = np.linalg.cholesky(mats[k])
            ok[k] = True
        except np.linalg.LinAlgError:
            pass
    return out, ok


class EnsemblePrediction(NamedTuple):
    """Per-hyperparameter predictive summaries at one input point."""

    means: np.ndarray           # (n_psi, q), raw output scale
    norm_variances: np.ndarray  # (n_psi,), shared normalized-scale variance
    cov_diags: np.ndarray       # (n_psi, q), diagonal of the rescaled covariance


@dataclass
class GpEnsemble:
    """A bag of fitted predictors over one training set.

    The stacked arrays are read-only caches that let downstream code evaluate
    all members at once instead of looping over fits.
    """

    fits: Sequence[GpFit]
    training: TrainingSet
    _sigma2: np.ndarray = field(init=False, repr=False)
    _inv_l2: np.ndarray = field(init=False, repr=False)
    _weights: np.ndarray = field(init=False, repr=False)
    _kinv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.fits) < 1:
            raise ValueError("ensemble needs at least one fit")
        for fit in self.fits:
            if fit.training is not self.training:
                raise ValueError("all fits must share the ensemble's training set")
        n = self.training.n_train
        self._sigma2 = np.array([f.hyperparams.sigma_c**2 for f in self.fits])
        self._inv_l2 = np.array([1.0 / f.hyperparams.lengthscales**2 for f in self.fits])
        self._weights = np.array([f.weights for f in self.fits])  # (J, n, q)
        eye = np.eye(n)
        self._kinv = np.array([cho_solve((f.chol, True), eye) for f in self.fits])

    @property
    def n_psi(self) -> int:
        return len(self.fits)

    def hyperparams_matrix(self) -> np.ndarray:
        """(n_psi, p+1) matrix of [sigma_c, l_1..l_p] rows."""
        return np.array([f.hyperparams.as_vector() for f in self.fits])

    def predict_batch(self, thetas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Normalized predictive means (B, J, q) and variances (B, J) at each row."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        diff2 = (thetas[:, None, :] - self.training.inputs[None, :, :]) ** 2  # (B, n, p)
        cvec = self._sigma2[None, :, None] * np.exp(
            -np.einsum("bnp,jp->bjn", diff2, self._inv_l2)
        )  # (B, J, n)
        means = np.einsum("bjn,jnq->bjq", cvec, self._weights)
        w = np.einsum("jnm,bjm->bjn", self._kinv, cvec)
        variances = self._sigma2[None, :] - np.einsum("bjn,bjn->bj", cvec, w)
        return means, np.maximum(variances, 0.0)


def ensemble_predict_vector(ens: GpEnsemble, theta: np.ndarray) -> EnsemblePrediction:
    """All per-hyperparameter mean vectors and covariances at theta, raw scale.

    Rescaling: mean_i = sqrt(V_i) * m_norm_i + m_i and the covariance diagonal
    is V_norm * V_i per output.
    """
    means_norm, var_norm = ens.predict_batch(np.asarray(theta, dtype=float)[None, :])
    tr = ens.training
    means = means_norm[0] * np.sqrt(tr.out_vars) + tr.out_means
    cov_diags = var_norm[0][:, None] * tr.out_vars[None, :]
    return EnsemblePrediction(means, var_norm[0], cov_diags)


def mixture_moments(means: np.ndarray, variances: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Moments of an equally weighted Gaussian mixture.

    Scalar components: `means` (m,), `variances` (m,) -> (mean, variance).
    Vector components: `means` (m, q), `variances` (m, q) diagonal covariances
    -> ((q,) mean, (q, q) covariance) via the outer-product form.
    """
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    if means.shape[0] < 1:
        raise ValueError("mixture needs at least one component")
    if means.ndim == 1:
        mean = means.mean()
        var = variances.mean() + (means**2).mean() - mean**2
        return float(mean), float(var)
    mean = means.mean(axis=0)
    cov = np.diag(variances.mean(axis=0))
    cov += np.einsum("mi,mj->ij", means, means) / means.shape[0]
    cov -= np.outer(mean, mean)
    return mean, cov
