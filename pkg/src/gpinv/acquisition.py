"""Expected improvement in fit: objective, smoothed variant, gradients, and
the multistart bound-constrained maximizer that picks the next training input.

The improvement at a point is the ensemble average of the positive part of
(best misfit so far) - (that member's surrogate misfit). The hinge is
replaced by a twice continuously differentiable ramp during optimization so
gradient-based ascent applies; the substitution costs at most eta/2 in
objective value.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .designs import DesignBox
from .gp import GpEnsemble, GpFit
from .likelihood import MeasurementModel, misfit_of_outputs

log = logging.getLogger(__name__)

DEFAULT_ETA = 1e-4

# Ascent stops when the projected gradient falls below GRAD_TOL or successive
# objective values differ by less than STEP_TOL.
GRAD_TOL = 1e-8
STEP_TOL = 1e-12


def smoothed_pos(x, eta: float):
    """Smoothed positive part and its derivative; vectorized over x.

    Zero left of the origin, the ramp x^3/eta^2 - x^4/(2 eta^3) on (0, eta),
    and x - eta/2 beyond. Satisfies [x]+_eta <= [x]+ <= [x]+_eta + eta/2.
    """
    if eta <= 0.0:
        raise ValueError("smoothing width must be positive")
    x = np.asarray(x, dtype=float)
    mid = (x > 0.0) & (x < eta)
    value = np.where(x >= eta, x - 0.5 * eta, 0.0)
    deriv = np.where(x >= eta, 1.0, 0.0)
    if np.any(mid):
        xm = np.where(mid, x, 0.0)
        value = np.where(mid, xm**3 / eta**2 - xm**4 / (2.0 * eta**3), value)
        deriv = np.where(mid, 3.0 * xm**2 / eta**2 - 2.0 * xm**3 / eta**3, deriv)
    if value.ndim == 0:
        return float(value), float(deriv)
    return value, deriv


@dataclass(frozen=True)
class AcquisitionState:
    """Everything the acquisition needs: ensemble, data, incumbent, search box."""

    ensemble: GpEnsemble
    meas: MeasurementModel
    g_min: float
    bounds: DesignBox
    eta: float = DEFAULT_ETA

    def __post_init__(self):
        if self.eta <= 0.0:
            raise ValueError("eta must be positive")
        if self.g_min < 0.0:
            raise ValueError("g_min cannot be negative")

    @classmethod
    def from_ensemble(cls, ens: GpEnsemble, meas: MeasurementModel, bounds: DesignBox,
                      eta: float = DEFAULT_ETA) -> "AcquisitionState":
        """Incumbent misfit computed from the stored training outputs."""
        g_min = min(misfit_of_outputs(row, meas) for row in ens.training.raw_outputs)
        return cls(ens, meas, g_min, bounds, eta)


def _pred_grad(ens: GpEnsemble, theta: np.ndarray):
    """Normalized means/variance and their gradients for every ensemble member.

    Returns (m_norm (J,q), V_norm (J,), dm (J,q,p), dV (J,p)). The kernel's
    exponent carries 1/l^2 with no factor 2, so differentiation brings down
    -2 (theta - x_n) / l^2.
    """
    tr = ens.training
    diff = theta[None, :] - tr.inputs                        # (n, p)
    cvec = ens._sigma2[:, None] * np.exp(
        -np.einsum("np,jp->jn", diff**2, ens._inv_l2)
    )                                                        # (J, n)
    m_norm = np.einsum("jn,jnq->jq", cvec, ens._weights)
    w = np.einsum("jnm,jm->jn", ens._kinv, cvec)
    V_norm = np.maximum(ens._sigma2 - np.einsum("jn,jn->j", cvec, w), 0.0)
    grad_c = -2.0 * cvec[:, :, None] * diff[None, :, :] * ens._inv_l2[:, None, :]  # (J, n, p)
    dm = np.einsum("jnp,jnq->jqp", grad_c, ens._weights)
    dV = -2.0 * np.einsum("jnp,jn->jp", grad_c, w)
    return m_norm, V_norm, dm, dV


def _misfits_and_grads(ens: GpEnsemble, meas: MeasurementModel, theta: np.ndarray):
    """Per-member surrogate misfits (J,) and their gradients (J, p) at theta."""
    tr = ens.training
    m_norm, V_norm, dm_norm, dV = _pred_grad(ens, theta)
    scale = np.sqrt(tr.out_vars)                             # (q,)
    means = m_norm * scale + tr.out_means                    # (J, q)
    resid = meas.z[None, :] - means
    denom = meas.noise_vars[None, :] + tr.out_vars[None, :] * V_norm[:, None]
    g = np.sum(resid**2 / denom, axis=1)
    dmean = scale[None, :, None] * dm_norm                   # (J, q, p)
    coeff_mean = -2.0 * resid / denom                        # (J, q)
    coeff_var = -np.sum(resid**2 / denom**2 * tr.out_vars[None, :], axis=1)  # (J,)
    grad = np.einsum("jq,jqp->jp", coeff_mean, dmean) + coeff_var[:, None] * dV
    return g, grad


def expected_improvement(theta: np.ndarray, state: AcquisitionState) -> float:
    """Ensemble mean of the exact hinge [g_min - g_j]+ at theta."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    g, _ = _misfits_and_grads(state.ensemble, state.meas, theta)
    return float(np.mean(np.maximum(state.g_min - g, 0.0)))


def expected_improvement_smoothed(theta: np.ndarray, state: AcquisitionState) -> tuple[float, np.ndarray]:
    """Smoothed objective value and its analytic gradient at theta."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    g, dg = _misfits_and_grads(state.ensemble, state.meas, theta)
    value, slope = smoothed_pos(state.g_min - g, state.eta)
    grad = -np.einsum("j,jp->p", np.atleast_1d(slope), dg) / g.shape[0]
    return float(np.mean(value)), grad


def grad_gp_misfit(theta: np.ndarray, fit: GpFit, meas: MeasurementModel) -> np.ndarray:
    """Analytic gradient of one predictor's surrogate misfit at theta."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    single = GpEnsemble([fit], fit.training)
    _, grad = _misfits_and_grads(single, meas, theta)
    return grad[0]


@dataclass
class LocalOptimum:
    theta: np.ndarray
    value: float
    converged: bool


@dataclass
class AcquisitionResult:
    theta: np.ndarray
    value: float
    local_optima: list[LocalOptimum] = field(default_factory=list)
    degraded: bool = False


def multistart_maximize(value_and_grad, starts: np.ndarray, box: DesignBox,
                        workers: int = 1) -> AcquisitionResult:
    """Bound-constrained quasi-Newton ascent from every start, best result wins.

    `value_and_grad(theta) -> (value, gradient)` is maximized inside the box
    by projected-gradient ascent with BFGS curvature. Starts run sequentially
    by default (`workers` > 1 opts into a thread pool; results are collected
    in start order either way, so the outcome is identical). Value ties go to
    the earliest start. If no start converges the best evaluated point is
    returned with `degraded=True`.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    if starts.shape[0] < 1:
        raise ValueError("need at least one start")
    if not np.all(box.contains(starts)):
        raise ValueError("all starts must lie inside the search box")
    bounds = list(zip(box.lower, box.upper))

    def negative(theta):
        value, grad = value_and_grad(theta)
        return -value, -np.asarray(grad, dtype=float)

    def ascend(x0) -> LocalOptimum:
        res = minimize(
            negative, x0, jac=True, method="L-BFGS-B", bounds=bounds,
            options={"ftol": STEP_TOL, "gtol": GRAD_TOL, "maxiter": 500},
        )
        return LocalOptimum(box.clip(res.x), float(-res.fun), bool(res.success))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool_exec:
            optima = list(pool_exec.map(ascend, starts))
    else:
        optima = [ascend(x0) for x0 in starts]

    converged = [o for o in optima if o.converged]
    pool = converged if converged else optima
    best = max(pool, key=lambda o: o.value)
    degraded = not converged
    if degraded:
        log.warning("no start converged; returning best evaluated point")
    return AcquisitionResult(best.theta, best.value, optima, degraded)


def maximize_acquisition(state: AcquisitionState, starts: Sequence[np.ndarray],
                         workers: int = 1) -> AcquisitionResult:
    """Multistart ascent of the smoothed expected improvement inside the box."""
    return multistart_maximize(
        lambda theta: expected_improvement_smoothed(theta, state), starts, state.bounds,
        workers=workers,
    )
