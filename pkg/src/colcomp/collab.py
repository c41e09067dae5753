"""Collaboration-weight design.

Assembles the energy-constrained convex QCQP over the packed weight vector w
from the current error covariance, compression vectors and filter gain, and
solves it for the collaboration matrix W(k).

The assembled objective satisfies the module's master identity: at any
feasible w it equals the updated error-covariance trace evaluated directly
from the Joseph-form update with the corresponding (W, F, T).  Constraint i
equals the total expected energy spent at sensor i.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ._linalg import chol_is_pd
from .kronmap import (
    WeightIndexMap,
    devectorize,
    linear_form_vector,
    off_diagonal_selector,
    quad_form_matrix,
    row_lift,
    vectorize_weights,
)
from .model import SignalModel, Topology
from .qcqp import ConvexQcqp, QcqpSolution, solve_convex_qcqp

log = logging.getLogger(__name__)

# Ridge added to keep structurally PSD matrices strictly PD for the barrier
# solver; tightens constraints by a relatively negligible amount.
RIDGE_REL = 1e-10


class BudgetExhaustedError(ValueError):
    """Compression already spends at least the whole budget at some sensor,
    so w = 0 is not strictly feasible."""


@dataclass
class CollabProblem:
    """Assembled collaboration QCQP together with its bookkeeping."""

    qcqp: ConvexQcqp
    wmap: WeightIndexMap
    budgets: np.ndarray
    constraint_sensors: list[int]      # sensor owning each retained constraint

    def validate(self) -> None:
        """Full PD assertions (minimum eigenvalue) on all problem matrices."""
        self.qcqp.validate()


def stacked_compression(F_rows: np.ndarray, dims) -> np.ndarray:
    """Block-diagonal M x ML compression matrix from per-sensor rows."""
    F_rows = np.asarray(F_rows, dtype=float)
    F = np.zeros((dims.M, dims.ML))
    for i in range(dims.M):
        F[i, i * dims.L:(i + 1) * dims.L] = F_rows[i]
    return F


def collab_energy_matrix(i: int, wmap: WeightIndexMap, tr_ryi: float) -> np.ndarray:
    """U x U quadratic form of sensor i's collaboration energy.

    Diagonal with tr(R_{y_i}) at the off-diagonal weights of column i; equal
    to the selector construction tr(R_{y_i}) J^T E_i J (see the reference
    implementation below, kept for cross-checking)."""
    marks = (wmap.cols == i) & wmap.offdiag
    return np.diag(tr_ryi * marks.astype(float))


def collab_energy_matrix_reference(i: int, wmap: WeightIndexMap,
                                   tr_ryi: float) -> np.ndarray:
    """Selector-based construction of the collaboration energy form: build
    the off-diagonal index map, reduce tr[W~ e_i e_i^T W~^T] with the L=1
    trace identity, and lift back through J."""
    sel = off_diagonal_selector(wmap)
    offmap = WeightIndexMap(M=wmap.M, N=wmap.N,
                            rows=wmap.rows[wmap.offdiag].copy(),
                            cols=wmap.cols[wmap.offdiag].copy())
    ei = np.zeros((wmap.N, 1))
    ei[i, 0] = 1.0
    E_i = quad_form_matrix(np.eye(wmap.M), ei @ ei.T, np.eye(wmap.M), offmap, 1)
    return tr_ryi * sel.J.T @ E_i @ sel.J


def _ridged(mat: np.ndarray, n: int) -> np.ndarray:
    ridge = RIDGE_REL * max(float(np.trace(mat)) / n, 1e-30)
    return mat + ridge * np.eye(n)


def assemble_collab_problem(
    P_prev: np.ndarray,
    model: SignalModel,
    topo: Topology,
    F_rows: np.ndarray,
    T: np.ndarray,
    budgets: np.ndarray,
    wmap: WeightIndexMap | None = None,
) -> CollabProblem:
    """Build the collaboration QCQP for one design round.

    P_prev is the current error covariance, F_rows the (M, L) compression
    vectors, T the (P, S) filter gain, budgets the (N,) energy caps.
    Constraints that are identically zero (sensors with no allowed
    off-diagonal links and nothing to compress) are dropped as vacuous.
    """
    d = model.dims
    if wmap is None:
        wmap = WeightIndexMap.from_topology(topo)
    U = wmap.U
    F_rows = np.asarray(F_rows, dtype=float)
    T = np.asarray(T, dtype=float)
    budgets = np.asarray(budgets, dtype=float)
    H, L = model.H, d.L

    F = stacked_compression(F_rows, d)
    B0 = T @ model.G @ F                              # (P, ML)
    HP = H @ P_prev                                   # (NL, P)
    C0 = HP @ H.T + model.R_v                         # (NL, NL)
    Omega0 = quad_form_matrix(B0, C0, B0.T, wmap, L)
    dvec = linear_form_vector(B0, HP, wmap, L)
    eta0 = float(np.trace(P_prev)) \
        + float(np.sum((T @ model.R_eps) * T)) \
        + float(np.sum((B0 @ model.R_alpha) * B0))

    if not chol_is_pd(Omega0):
        # PSD-but-singular when T G F has a nontrivial left null space; the
        # ridge keeps the barrier well posed without moving the minimizer
        # beyond working precision.
        Omega0 = _ridged(Omega0, U)

    Ry = model.R_y
    mats, etas, mus, owners = [], [], [], []
    for i in range(d.N):
        mat = collab_energy_matrix(i, wmap, model.tr_R_yi(i))
        eta_i = 0.0
        if i < d.M:
            psi = np.zeros(d.ML)
            psi[i * L:(i + 1) * L] = F_rows[i]
            Psi = row_lift(psi, wmap, L)              # (U, NL)
            mat = mat + Psi @ Ry @ Psi.T
            eta_i = float(F_rows[i] @ model.R_alpha_blocks[i] @ F_rows[i])
            if eta_i >= budgets[i]:
                raise BudgetExhaustedError(
                    f"sensor {i}: compression noise energy {eta_i:.6e} already "
                    f"meets the budget {budgets[i]:.6e}"
                )
        if np.abs(mat).max() == 0.0 and eta_i == 0.0:
            continue                                  # vacuous constraint
        mats.append(_ridged(0.5 * (mat + mat.T), U))
        etas.append(eta_i)
        mus.append(float(budgets[i]))
        owners.append(i)

    qc = ConvexQcqp(
        Omega0=Omega0,
        d=dvec,
        eta0=eta0,
        Omegas=np.array(mats).reshape(-1, U, U),
        etas=np.array(etas),
        mus=np.array(mus),
    )
    return CollabProblem(qcqp=qc, wmap=wmap, budgets=budgets,
                         constraint_sensors=owners)


def solve_collaboration(
    problem: CollabProblem,
    prev_W: np.ndarray | None = None,
    tol: float = 1e-8,
) -> tuple[np.ndarray, QcqpSolution]:
    """Solve the assembled QCQP and devectorize the weights.

    When prev_W is supplied and still feasible, the returned weights are
    never worse than it on this problem (monotone-objective guard for the
    alternating outer loop)."""
    sol = solve_convex_qcqp(problem.qcqp, tol=tol)
    if sol.status != "optimal":
        log.warning("collaboration solve hit the Newton iteration cap "
                    "(kkt residual %.3e)", sol.kkt_residual)
    w = sol.x
    if prev_W is not None:
        w_prev = vectorize_weights(prev_W, problem.wmap)
        feasible = np.all(problem.qcqp.constraint_values(w_prev)
                          <= problem.qcqp.mus + 1e-12)
        if feasible and problem.qcqp.objective(w_prev) < problem.qcqp.objective(w):
            w = w_prev
    return devectorize(w, problem.wmap), sol
