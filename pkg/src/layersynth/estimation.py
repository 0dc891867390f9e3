"""Steady-state Kalman estimators and the constant-gain estimate recursion.

Only the constant-gain steady-state filter is provided: initializing the
state covariance at the Riccati fixed point pins the filter at steady
state from t = 0, so the time-varying recursion is never needed here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matops import MatrixError, solve_filter_dare
from .systems import LinearSystemSpec

__all__ = ["EstimatorSpec", "build_estimator", "estimate_step", "innovation"]


@dataclass(frozen=True)
class EstimatorSpec:
    """Constant Kalman gain L and steady-state error covariance Sigma_e."""

    L: np.ndarray
    Sigma_e: np.ndarray


def build_estimator(sys: LinearSystemSpec) -> EstimatorSpec:
    """Solve the filter Riccati equation for one system."""
    try:
        sigma_e, gain = solve_filter_dare(sys.A, sys.C, sys.Sigma_w, sys.Sigma_v)
    except MatrixError as exc:
        raise MatrixError(f"estimator construction failed: {exc}") from exc
    return EstimatorSpec(L=gain, Sigma_e=sigma_e)


def estimate_step(
    sys: LinearSystemSpec,
    est: EstimatorSpec,
    xhat: np.ndarray,
    u: np.ndarray,
    y: np.ndarray,
) -> np.ndarray:
    """One prediction-correction step: A xhat + B u + L (y - C xhat)."""
    xhat = np.asarray(xhat, dtype=float)
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if xhat.shape != (sys.n,) or u.shape != (sys.m,) or y.shape != (sys.p,):
        raise ValueError(
            f"dimension mismatch: xhat {xhat.shape}, u {u.shape}, y {y.shape} "
            f"for system with n={sys.n}, m={sys.m}, p={sys.p}"
        )
    return sys.A @ xhat + sys.B @ u + est.L @ (y - sys.C @ xhat)


def innovation(sys: LinearSystemSpec, xhat: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Measurement-prediction residual y - C xhat."""
    xhat = np.asarray(xhat, dtype=float)
    y = np.asarray(y, dtype=float)
    if xhat.shape != (sys.n,) or y.shape != (sys.p,):
        raise ValueError(f"dimension mismatch: xhat {xhat.shape}, y {y.shape}")
    return y - sys.C @ xhat
