"""Misfit functions and measurement likelihoods.

The true misfit weighs squared residuals by the noise variances alone; the
surrogate misfit inflates each denominator with the predictive variance of
the emulator, so untested regions are judged more leniently. The surrogate
log-likelihood marginalizes over the hyperparameter ensemble, producing a
Gaussian-mixture likelihood evaluated through a log-sum-exp so that huge
misfits stay finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .gp import GpEnsemble


@dataclass(frozen=True)
class MeasurementModel:
    """Observed data vector and the (diagonal) noise variances."""

    z: np.ndarray           # (q,)
    noise_vars: np.ndarray  # (q,)

    def __post_init__(self):
        object.__setattr__(self, "z", np.atleast_1d(np.asarray(self.z, dtype=float)))
        object.__setattr__(self, "noise_vars", np.atleast_1d(np.asarray(self.noise_vars, dtype=float)))
        if self.z.shape != self.noise_vars.shape:
            raise ValueError("data and noise-variance vectors must have equal length")
        if not np.all(self.noise_vars > 0.0):
            raise ValueError("noise variances must be positive")

    @property
    def n_outputs(self) -> int:
        return self.z.shape[0]


def misfit_of_outputs(outputs: np.ndarray, meas: MeasurementModel) -> float:
    """Noise-weighted squared error of an already-computed output vector."""
    outputs = np.asarray(outputs, dtype=float).reshape(-1)
    if outputs.shape != meas.z.shape:
        raise ValueError(f"output length {outputs.shape[0]} != data length {meas.z.shape[0]}")
    return float(np.sum((meas.z - outputs) ** 2 / meas.noise_vars))


def true_misfit(theta: np.ndarray, forward_model, meas: MeasurementModel) -> float:
    """g(theta) = sum_i (z_i - f_i(theta))^2 / sigma_i^2."""
    return misfit_of_outputs(forward_model.evaluate(theta), meas)


def gp_misfit(mean: np.ndarray, cov_diag: np.ndarray, meas: MeasurementModel) -> float:
    """Surrogate misfit for one ensemble member's prediction at a point.

    `mean` and `cov_diag` are that member's raw-scale predictive mean vector
    and covariance diagonal (for example one row of an
    :func:`gpinv.gp.ensemble_predict_vector` result).
    """
    mean = np.asarray(mean, dtype=float).reshape(-1)
    cov_diag = np.asarray(cov_diag, dtype=float).reshape(-1)
    return float(np.sum((meas.z - mean) ** 2 / (meas.noise_vars + cov_diag)))


def gp_misfits(theta: np.ndarray, ens: GpEnsemble, meas: MeasurementModel) -> np.ndarray:
    """Surrogate misfit of every ensemble member at theta, shape (n_psi,)."""
    return _misfit_batch(np.asarray(theta, dtype=float)[None, :], ens, meas)[0]


def _misfit_batch(thetas: np.ndarray, ens: GpEnsemble, meas: MeasurementModel) -> np.ndarray:
    """(B, n_psi) surrogate misfits at each row of thetas."""
    means_norm, var_norm = ens.predict_batch(thetas)
    tr = ens.training
    means = means_norm * np.sqrt(tr.out_vars) + tr.out_means           # (B, J, q)
    denom = meas.noise_vars[None, None, :] + var_norm[:, :, None] * tr.out_vars[None, None, :]
    return np.sum((meas.z[None, None, :] - means) ** 2 / denom, axis=2)


def gp_misfit_dense(mean: np.ndarray, cov: np.ndarray, noise_cov: np.ndarray, z: np.ndarray) -> float:
    """Reference quadratic form (z-m)^T (Sigma_E + Sigma_GP)^-1 (z-m).

    Slow dense-covariance variant kept for validating the diagonal fast path.
    """
    resid = np.asarray(z, dtype=float) - np.asarray(mean, dtype=float)
    total = np.asarray(noise_cov, dtype=float) + np.asarray(cov, dtype=float)
    return float(resid @ np.linalg.solve(total, resid))


def true_loglik(theta: np.ndarray, forward_model, meas: MeasurementModel) -> float:
    """Gaussian log-likelihood of the data given exact forward outputs."""
    return loglik_of_outputs(forward_model.evaluate(theta), meas)


def loglik_of_outputs(outputs: np.ndarray, meas: MeasurementModel) -> float:
    g = misfit_of_outputs(outputs, meas)
    return -0.5 * (g + float(np.sum(np.log(2.0 * np.pi * meas.noise_vars))))


def d_restricted_loglik(theta: np.ndarray, ens: GpEnsemble, meas: MeasurementModel) -> float:
    """Log-likelihood under the surrogate's Gaussian-mixture predictive law.

    log L = -g*/2 + log sum_j (k_j / n_psi) exp(-(g_j - g*)/2) with
    g* = min_j g_j and k_j the Gaussian normalizing constant of component j.
    Finite for any finite inputs regardless of how large the misfits get.
    """
    return d_restricted_loglik_batch(np.asarray(theta, dtype=float)[None, :], ens, meas)[0]


def d_restricted_loglik_batch(thetas: np.ndarray, ens: GpEnsemble, meas: MeasurementModel) -> np.ndarray:
    """Vectorized surrogate log-likelihood over rows of thetas."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    means_norm, var_norm = ens.predict_batch(thetas)
    tr = ens.training
    means = means_norm * np.sqrt(tr.out_vars) + tr.out_means
    denom = meas.noise_vars[None, None, :] + var_norm[:, :, None] * tr.out_vars[None, None, :]
    g = np.sum((meas.z[None, None, :] - means) ** 2 / denom, axis=2)    # (B, J)
    log_k = -0.5 * np.sum(np.log(2.0 * np.pi * denom), axis=2)          # (B, J)
    g_star = np.min(g, axis=1)
    body = logsumexp(log_k - 0.5 * (g - g_star[:, None]), axis=1)
    return -0.5 * g_star + body - np.log(g.shape[1])
