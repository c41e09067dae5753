"""Per-sensor compression design and filter gains.

Centralized mode runs a Gauss-Seidel sweep over the sensors, each solving a
small convex QCQP whose objective is the updated error-covariance trace up to
terms independent of its own compression vector.  Decentralized mode drops
the cross-sensor coupling terms so each sensor's problem is computable from
locally available quantities; the filter gain is then the solution of a
single-equality indefinite QCQP that zeroes the aggregated coupling.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ._linalg import chol_is_pd, sym
from .collab import stacked_compression
from .model import SignalModel
from .qcqp import (
    ConvexQcqp,
    SingleEqualityQcqp,
    WhiteningError,
    solve_convex_qcqp,
    solve_single_equality_qcqp,
)

log = logging.getLogger(__name__)

RIDGE_REL = 1e-10


class BudgetExhaustedError(ValueError):
    """Collaboration already spends at least the whole budget at a sensor."""


@dataclass
class CompressionSet:
    """Per-sensor compression vectors, rows[i] = f_i."""

    rows: np.ndarray           # (M, L)

    def F(self, dims) -> np.ndarray:
        """Block-diagonal M x ML compression matrix."""
        return stacked_compression(self.rows, dims)


@dataclass
class FilterGain:
    """Fusion-center filter gain T (P x S)."""

    T: np.ndarray

    @property
    def vec(self) -> np.ndarray:
        return self.T.flatten(order="F")


@dataclass
class EffectiveChannel:
    """End-to-end operator of the designed link: q = D x + n_q,
    cov(n_q) = R_n."""

    D: np.ndarray              # (S, P)
    R_n: np.ndarray            # (S, S)
    GF: np.ndarray             # (S, ML)  G @ F
    GFW: np.ndarray            # (S, NL)  G @ F @ (W kron I_L)


@dataclass
class DecentralizedGainProblem:
    """Vectorized gain problem: minimize t' Om1 t - 2 ell' t subject to
    t' Om2 t = 0, with Om2 from the symmetrized coupling sum."""

    Omega1: np.ndarray         # (PS, PS)
    Omega2: np.ndarray         # (PS, PS)
    ell: np.ndarray            # (PS,)
    Lambdas: np.ndarray        # (M, S, S) per-sensor coupling matrices
    B: np.ndarray              # (S, S) coupling sum


@dataclass
class _DesignPool:
    """Quantities shared by every per-sensor subproblem at one design round."""

    kron_W: np.ndarray         # (ML, NL)
    Ct: np.ndarray             # (NL, NL)  H P H' + R_v
    Z: np.ndarray              # (ML, ML)  kron_W Ct kron_W'
    WHPT: np.ndarray           # (ML, S)   kron_W H P T
    Ryw: np.ndarray            # (ML, ML)  kron_W R_y kron_W'
    pi: np.ndarray             # (M, M)    G' T' T G
    lambdas: np.ndarray        # (N,) collaboration energies


def _design_pool(P_prev, model, W, T):
    d = model.dims
    kron_W = np.kron(np.asarray(W, float), np.eye(d.L))
    HP = model.H @ P_prev
    Ct = HP @ model.H.T + model.R_v
    KW_Ct = kron_W @ Ct
    Z = KW_Ct @ kron_W.T
    WHPT = kron_W @ (HP @ T)
    Ryw = kron_W @ model.R_y @ kron_W.T
    TG = T @ model.G
    pi = TG.T @ TG
    Wt = np.asarray(W, float).copy()
    Wt[np.arange(d.M), np.arange(d.M)] = 0.0
    colsq = (Wt * Wt).sum(axis=0)
    lambdas = np.array([model.tr_R_yi(i) * colsq[i] for i in range(d.N)])
    return _DesignPool(kron_W, Ct, Z, WHPT, Ryw, pi, lambdas)


def _block(mat, i, j, L):
    return mat[i * L:(i + 1) * L, j * L:(j + 1) * L]


def _fi_qcqp(i, model, pool, F_rows, budget_i, centralized):
    d = model.dims
    L = d.L
    pii = pool.pi[i, i]
    Om3 = pii * (_block(pool.Z, i, i, L) + model.R_alpha_blocks[i])
    dvec = pool.WHPT[i * L:(i + 1) * L] @ model.G[:, i]
    if centralized:
        for j in range(d.M):
            if j == i:
                continue
            dvec = dvec - _block(pool.Z, i, j, L) @ F_rows[j] * pool.pi[j, i]
    Om4 = _block(pool.Ryw, i, i, L) + model.R_alpha_blocks[i]
    lam_i = float(pool.lambdas[i])
    if lam_i >= budget_i:
        raise BudgetExhaustedError(
            f"sensor {i}: collaboration energy {lam_i:.6e} already meets the "
            f"budget {budget_i:.6e}"
        )
    Om3 = sym(Om3)
    if not chol_is_pd(Om3):
        # Degenerate coupling (pi_ii = 0 or singular PSD); ridge scaled from
        # the constraint matrix keeps the minimizer bounded.
        Om3 = Om3 + (RIDGE_REL * np.trace(Om4) / L) * np.eye(L)
    return ConvexQcqp(
        Omega0=Om3, d=dvec, eta0=0.0,
        Omegas=sym(Om4)[None], etas=np.array([lam_i]),
        mus=np.array([float(budget_i)]),
    )


def assemble_centralized_fi(
    i: int,
    P_prev: np.ndarray,
    model: SignalModel,
    W: np.ndarray,
    T: np.ndarray,
    F_rows: np.ndarray,
    budget_i: float,
) -> ConvexQcqp:
    """QCQP over f_i whose objective equals the updated covariance trace
    minus f_i-independent terms, coupling to the other sensors' current
    compression vectors included."""
    pool = _design_pool(P_prev, model, W, T)
    return _fi_qcqp(i, model, pool, np.asarray(F_rows, float), budget_i,
                    centralized=True)


def assemble_decentralized_fi(
    i: int,
    P_prev: np.ndarray,
    model: SignalModel,
    W: np.ndarray,
    T: np.ndarray,
    budget_i: float,
) -> ConvexQcqp:
    """Local variant: identical to the centralized assembly with the
    cross-sensor terms dropped, so the data depend only on quantities sensor
    i can hold (its own weights row, channel column, prior and gain)."""
    pool = _design_pool(P_prev, model, W, T)
    return _fi_qcqp(i, model, pool, None, budget_i, centralized=False)


def sweep_centralized(
    P_prev: np.ndarray,
    model: SignalModel,
    W: np.ndarray,
    T: np.ndarray,
    F_init: np.ndarray,
    budgets: np.ndarray,
    sweeps: int = 1,
) -> CompressionSet:
    """Gauss-Seidel block-coordinate descent over the compression vectors.

    Each accepted update cannot increase the covariance trace; a solver
    output worse than the incumbent (possible only at barrier accuracy) is
    rejected, which keeps the sweep exactly monotone."""
    d = model.dims
    F_rows = np.array(F_init, dtype=float, copy=True)
    pool = _design_pool(P_prev, model, W, T)
    for _ in range(int(sweeps)):
        for i in range(d.M):
            prob = _fi_qcqp(i, model, pool, F_rows, budgets[i], centralized=True)
            sol = solve_convex_qcqp(prob)
            if prob.objective(sol.x) <= prob.objective(F_rows[i]):
                F_rows[i] = sol.x
    return CompressionSet(rows=F_rows)


def solve_decentralized_compression(
    P_prev: np.ndarray,
    model: SignalModel,
    W: np.ndarray,
    T: np.ndarray,
    budgets: np.ndarray,
) -> CompressionSet:
    """One round of local compression solves (no cross-sensor data)."""
    d = model.dims
    pool = _design_pool(P_prev, model, W, T)
    F_rows = np.zeros((d.M, d.L))
    for i in range(d.M):
        prob = _fi_qcqp(i, model, pool, None, budgets[i], centralized=False)
        F_rows[i] = solve_convex_qcqp(prob).x
    return CompressionSet(rows=F_rows)


# ---------------------------------------------------------------------------
# Filter gains
# ---------------------------------------------------------------------------

def effective_channel(model: SignalModel, W: np.ndarray,
                      F_rows: np.ndarray) -> EffectiveChannel:
    """Observation operator D and noise covariance R_n of the designed link."""
    d = model.dims
    F = stacked_compression(np.asarray(F_rows, float), d)
    kron_W = np.kron(np.asarray(W, float), np.eye(d.L))
    GF = model.G @ F                                  # (S, ML)
    GFW = GF @ kron_W                                 # (S, NL)
    D = GFW @ model.H                                 # (S, P)
    R_n = GFW @ model.R_v @ GFW.T + GF @ model.R_alpha @ GF.T + model.R_eps
    return EffectiveChannel(D=D, R_n=sym(R_n), GF=GF, GFW=GFW)


def filter_gain_closed_form(
    P_prev: np.ndarray,
    model: SignalModel,
    W: np.ndarray,
    F_rows: np.ndarray,
    channel: EffectiveChannel | None = None,
) -> FilterGain:
    """Unconstrained optimal gain T = P D' (D P D' + R_n)^{-1}."""
    ch = channel if channel is not None else effective_channel(model, W, F_rows)
    S_in = sym(ch.D @ P_prev @ ch.D.T + ch.R_n)
    try:
        c = np.linalg.cholesky(S_in)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            "innovation covariance is singular; R_eps must be PD"
        ) from exc
    T = np.linalg.solve(c.T, np.linalg.solve(c, ch.D @ P_prev)).T
    return FilterGain(T=T)


def assemble_decentralized_gain_problem(
    P_prev: np.ndarray,
    model: SignalModel,
    W: np.ndarray,
    F_rows: np.ndarray,
    channel: EffectiveChannel | None = None,
) -> DecentralizedGainProblem:
    """Vectorized-gain problem with the aggregated coupling constraint.

    The per-sensor coupling Lambda_i sums the cross terms sensor i's local
    objective ignores; zeroing tr(T B T') with B = sum_i Lambda_i makes the
    sum of local objectives match the global one.  B need not be entrywise
    symmetric; the constraint only sees its symmetric part, which is what
    gets whitened."""
    d = model.dims
    ch = channel if channel is not None else effective_channel(model, W, F_rows)
    Q = sym(ch.D @ P_prev @ ch.D.T + ch.R_n)          # (S, S)

    F = stacked_compression(np.asarray(F_rows, float), d)
    kron_W = np.kron(np.asarray(W, float), np.eye(d.L))
    FW = F @ kron_W                                   # (M, NL), row i = f_i' W_i
    Ct = model.H @ P_prev @ model.H.T + model.R_v
    coup = FW @ Ct @ FW.T                             # (M, M)
    coup[np.arange(d.M), np.arange(d.M)] = 0.0
    G = model.G
    Lambdas = np.stack([np.outer(G[:, i], coup[i] @ G.T) for i in range(d.M)])
    B = G @ coup @ G.T                                # = sum_i Lambda_i

    eyeP = np.eye(d.P)
    return DecentralizedGainProblem(
        Omega1=np.kron(Q, eyeP),
        Omega2=np.kron(sym(B), eyeP),
        ell=(P_prev @ ch.D.T).flatten(order="F"),
        Lambdas=Lambdas,
        B=B,
    )


def filter_gain_decentralized(
    P_prev: np.ndarray,
    model: SignalModel,
    W: np.ndarray,
    F_rows: np.ndarray,
    tol: float = 1e-10,
) -> tuple[FilterGain, str]:
    """Gain update for the decentralized mode.

    Solves the single-equality QCQP; when no stationary point exists (or the
    whitening degenerates numerically) falls back to the unconstrained
    closed-form gain with a logged warning.  Returns (gain, status) with
    status one of "optimal", "unconstrained", "fallback"."""
    d = model.dims
    ch = effective_channel(model, W, F_rows)
    prob = assemble_decentralized_gain_problem(P_prev, model, W, F_rows, channel=ch)
    try:
        sol = solve_single_equality_qcqp(
            SingleEqualityQcqp(prob.Omega1, prob.Omega2, prob.ell), tol=tol)
    except WhiteningError as exc:
        log.warning("decentralized gain whitening failed (%s); using the "
                    "closed-form gain", exc)
        return filter_gain_closed_form(P_prev, model, W, F_rows, channel=ch), "fallback"
    if sol.status == "no-stationary-point":
        log.warning("decentralized gain has no stationary point; using the "
                    "closed-form gain (locality is then only approximate)")
        return filter_gain_closed_form(P_prev, model, W, F_rows, channel=ch), "fallback"
    T = sol.t.reshape((d.P, d.S), order="F")
    status = "unconstrained" if sol.case == "unconstrained" else "optimal"
    return FilterGain(T=T), status
