"""Recursive estimators and convergence diagnostics.

The designed-link estimator updates with the Joseph-form covariance
recursion, which stays symmetric PSD for any gain, not only the optimal one.
The benchmark estimator sees every raw observation at the fusion center and
lower-bounds the achievable MSE.  A monotonicity monitor checks each step's
MSE decrease against its spectral lower bound, and a predict step extends
the machinery to first-order Gauss-Markov parameter trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import sym


class EstimatorError(ValueError):
    """Invalid estimator state or mismatched shapes."""


@dataclass(frozen=True)
class EstimatorState:
    """Estimate and error covariance after step k."""

    x_hat: np.ndarray
    P: np.ndarray
    k: int = 0

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        lo = np.linalg.eigvalsh(sym(P))[0]
        if lo < -1e-10 * max(np.trace(P), 1e-300):
            raise EstimatorError(
                f"covariance is not PSD at step {self.k}: min eigenvalue {lo:.3e}"
            )
        if not np.isfinite(np.trace(P)):
            raise EstimatorError(f"covariance trace is not finite at step {self.k}")


@dataclass(frozen=True)
class StateModel:
    """First-order Gauss-Markov parameter dynamics x(k) = A_s x(k-1) + n_s."""

    A_s: np.ndarray
    R_ns: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R_ns, dtype=float)
        lo = np.linalg.eigvalsh(sym(R))[0]
        if lo < -1e-12 * max(np.trace(R), 1e-300):
            raise EstimatorError(f"state noise covariance not PSD: {lo:.3e}")


@dataclass(frozen=True)
class MonotonicityRecord:
    """One step's MSE decrease against its spectral lower bound."""

    decrease: float
    bound: float
    violated: bool


def mse_trace(state: EstimatorState) -> float:
    """MSE of the estimate, tr(P)."""
    return float(np.trace(state.P))


def rlmmse_step(state: EstimatorState, q: np.ndarray, D: np.ndarray,
                R_n: np.ndarray, T: np.ndarray) -> EstimatorState:
    """One measurement update with gain T.

    x <- x + T (q - D x);  P <- (I - T D) P (I - T D)' + T R_n T'
    (Joseph form, PSD for any T).  The covariance is re-symmetrized to stop
    floating-point drift over long horizons.
    """
    q = np.asarray(q, dtype=float)
    D = np.asarray(D, dtype=float)
    T = np.asarray(T, dtype=float)
    P_dim = state.x_hat.shape[0]
    if D.shape[1] != P_dim or T.shape[0] != P_dim or T.shape[1] != D.shape[0] \
            or q.shape != (D.shape[0],):
        raise EstimatorError(
            f"shape mismatch: q {q.shape}, D {D.shape}, T {T.shape}, P={P_dim}"
        )
    x_new = state.x_hat + T @ (q - D @ state.x_hat)
    ImTD = np.eye(P_dim) - T @ D
    P_new = sym(ImTD @ state.P @ ImTD.T + T @ np.asarray(R_n, float) @ T.T)
    return EstimatorState(x_hat=x_new, P=P_new, k=state.k + 1)


def benchmark_step(state: EstimatorState, y: np.ndarray, H: np.ndarray,
                   R_v: np.ndarray) -> EstimatorState:
    """Update with every raw observation available at the fusion center:
    T = P H' (H P H' + R_v)^{-1},  P <- P - T H P."""
    y = np.asarray(y, dtype=float)
    H = np.asarray(H, dtype=float)
    S_in = sym(H @ state.P @ H.T + np.asarray(R_v, float))
    try:
        c = np.linalg.cholesky(S_in)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            "singular innovation covariance in benchmark step"
        ) from exc
    T = np.linalg.solve(c.T, np.linalg.solve(c, H @ state.P)).T
    x_new = state.x_hat + T @ (y - H @ state.x_hat)
    P_new = sym(state.P - T @ H @ state.P)
    return EstimatorState(x_hat=x_new, P=P_new, k=state.k + 1)


def monotonicity_check(phi_prev: float, phi_curr: float, D: np.ndarray,
                       P_prev: np.ndarray, R_n: np.ndarray) -> MonotonicityRecord:
    """Check one closed-form-gain step against the spectral decrease bound

        phi(k-1) - phi(k) >= lmin(P(k-1))^2 * lmin(R_a) * ||D||_F^2

    with R_a the inverse innovation covariance.  Diagnostic only: flags a
    violation beyond 1e-8 relative, never raises."""
    D = np.asarray(D, dtype=float)
    P_prev = np.asarray(P_prev, dtype=float)
    decrease = float(phi_prev - phi_curr)
    if np.abs(D).max(initial=0.0) == 0.0:
        return MonotonicityRecord(decrease=decrease, bound=0.0,
                                  violated=decrease < -1e-8 * abs(phi_prev))
    S_in = sym(D @ P_prev @ D.T + np.asarray(R_n, float))
    lmin_Ra = 1.0 / np.linalg.eigvalsh(S_in)[-1]
    lmin_P = max(np.linalg.eigvalsh(sym(P_prev))[0], 0.0)
    bound = lmin_P ** 2 * lmin_Ra * float(np.sum(D * D))
    tol = 1e-8 * max(abs(bound), abs(phi_prev), 1e-300)
    return MonotonicityRecord(decrease=decrease, bound=float(bound),
                              violated=decrease - bound < -tol)


def kalman_predict(state: EstimatorState, sm: StateModel) -> EstimatorState:
    """Time update through the parameter dynamics."""
    A = np.asarray(sm.A_s, dtype=float)
    x_pred = A @ state.x_hat
    P_pred = sym(A @ state.P @ A.T + np.asarray(sm.R_ns, float))
    return EstimatorState(x_hat=x_pred, P=P_pred, k=state.k)


def kalman_update(predicted: EstimatorState, q: np.ndarray, D: np.ndarray,
                  R_n: np.ndarray, T: np.ndarray) -> EstimatorState:
    """Measurement update applied to a predicted state (same Joseph-form
    contract as the static update)."""
    return rlmmse_step(predicted, q, D, R_n, T)
