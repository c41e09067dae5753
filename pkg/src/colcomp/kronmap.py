"""Packed-weight mapping and Kronecker trace-form reductions.

The collaboration matrix W (M x N) is supported on the nonzeros of the binary
topology A.  Design problems are posed over the packed vector w of allowed
entries, enumerated column-major.  For any masked W and conformable matrices,

    a^T (W kron I_L)                       = w^T row_lift(a)
    tr[B (W kron I_L) C (W kron I_L)^T D]  = w^T quad_form_matrix(B, C, D) w
    tr[B (W kron I_L) C]                   = w^T linear_form_vector(B, C)

which turn the error-covariance trace and the energy constraints into plain
quadratic forms in w.  All functions here are pure.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .model import Topology, TopologyError


@dataclass(frozen=True)
class WeightIndexMap:
    """One-to-one map u <-> (rows[u], cols[u]) over the nonzeros of A,
    in column-major order (0-based indices)."""

    M: int
    N: int
    rows: np.ndarray  # (U,) row index m_u of weight u
    cols: np.ndarray  # (U,) column index n_u of weight u

    def __post_init__(self):
        self.rows.setflags(write=False)
        self.cols.setflags(write=False)

    @classmethod
    def from_topology(cls, topo: Topology) -> "WeightIndexMap":
        cols, rows = np.nonzero(topo.A.T)  # transpose gives column-major order
        return cls(M=topo.M, N=topo.N,
                   rows=rows.astype(np.intp), cols=cols.astype(np.intp))

    @property
    def U(self) -> int:
        return self.rows.size

    @cached_property
    def offdiag(self) -> np.ndarray:
        """Boolean marks for the weights with m_u != n_u (the ones that cost
        collaboration energy)."""
        out = self.rows != self.cols
        out.setflags(write=False)
        return out


@dataclass(frozen=True)
class OffDiagonalSelector:
    """Binary J (s x U) with w_tilde = J w extracting the off-diagonal
    weights, in increasing-u order."""

    J: np.ndarray
    s: int

    def __post_init__(self):
        self.J.setflags(write=False)


def vectorize_weights(W: np.ndarray, wmap: WeightIndexMap) -> np.ndarray:
    """Pack a masked M x N weight matrix into its U-vector."""
    W = np.asarray(W, dtype=float)
    if W.shape != (wmap.M, wmap.N):
        raise ValueError(f"W has shape {W.shape}, expected ({wmap.M},{wmap.N})")
    keep = np.zeros_like(W, dtype=bool)
    keep[wmap.rows, wmap.cols] = True
    if W[~keep].size and np.abs(W[~keep]).max() != 0.0:
        raise TopologyError("W has a nonzero entry outside the topology support")
    return W[wmap.rows, wmap.cols].copy()


def devectorize(w: np.ndarray, wmap: WeightIndexMap) -> np.ndarray:
    """Unpack a U-vector into the masked M x N matrix (zeros elsewhere)."""
    w = np.asarray(w, dtype=float)
    if w.shape != (wmap.U,):
        raise ValueError(f"w has shape {w.shape}, expected ({wmap.U},)")
    W = np.zeros((wmap.M, wmap.N))
    W[wmap.rows, wmap.cols] = w
    return W


def _lift_rows(rows: np.ndarray, wmap: WeightIndexMap, L: int) -> np.ndarray:
    """Stack of lifted matrices, one per row of `rows` ((r, ML) -> (r, U, NL)).

    Row u of each lift is supported on columns [L*n_u, L*n_u + L) and carries
    the source entries [L*m_u, L*m_u + L)."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    r, ML = rows.shape
    if ML != wmap.M * L:
        raise ValueError(f"vector length {ML} does not match M*L = {wmap.M * L}")
    U = wmap.U
    out = np.zeros((r, U, wmap.N * L))
    offs = np.arange(L)
    src = wmap.rows[:, None] * L + offs           # (U, L)
    dst = wmap.cols[:, None] * L + offs           # (U, L)
    out[:, np.arange(U)[:, None], dst] = rows[:, src]
    return out


def row_lift(a: np.ndarray, wmap: WeightIndexMap, L: int) -> np.ndarray:
    """U x NL lift of an ML-vector a, satisfying w^T lift = a^T (W kron I_L)."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 1:
        raise ValueError("a must be a vector")
    return _lift_rows(a[None, :], wmap, L)[0]


def quad_form_matrix(B: np.ndarray, C: np.ndarray, D: np.ndarray,
                     wmap: WeightIndexMap, L: int) -> np.ndarray:
    """Symmetric U x U matrix E with w^T E w = tr[B (W kron I_L) C (W kron I_L)^T D].

    B is r x ML, C is NL x NL, D is ML x r.  E is assembled as
    sum_i lift(b_i) C lift(d_i)^T over the rows b_i of B and columns d_i of D,
    then symmetrized (the quadratic form is unchanged)."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    D = np.asarray(D, dtype=float)
    if D.ndim == 1:
        D = D[:, None]
    C = np.asarray(C, dtype=float)
    NL = wmap.N * L
    if C.shape != (NL, NL):
        raise ValueError(f"C has shape {C.shape}, expected ({NL},{NL})")
    if B.shape[0] != D.shape[1] or B.shape[1] != wmap.M * L or D.shape[0] != wmap.M * L:
        raise ValueError(
            f"shapes B {B.shape}, D {D.shape} not conformable with M*L={wmap.M * L}"
        )
    Bl = _lift_rows(B, wmap, L)          # (r, U, NL)
    Dl = _lift_rows(D.T, wmap, L)        # (r, U, NL)
    E = np.einsum("ruk,rvk->uv", Bl @ C, Dl, optimize=True)
    return 0.5 * (E + E.T)


def linear_form_vector(B: np.ndarray, C: np.ndarray, wmap: WeightIndexMap,
                       L: int) -> np.ndarray:
    """U-vector c_tilde with w^T c_tilde = tr[B (W kron I_L) C].

    B is r x ML and C is NL x r."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    C = np.asarray(C, dtype=float)
    if C.ndim == 1:
        C = C[:, None]
    if C.shape != (wmap.N * L, B.shape[0]):
        raise ValueError(
            f"C has shape {C.shape}, expected ({wmap.N * L},{B.shape[0]})"
        )
    Bl = _lift_rows(B, wmap, L)          # (r, U, NL)
    return np.einsum("ruk,kr->u", Bl, C, optimize=True)


def off_diagonal_selector(wmap: WeightIndexMap) -> OffDiagonalSelector:
    """Selector J for the off-diagonal weights (the energy-bearing ones)."""
    idx = np.flatnonzero(wmap.offdiag)
    J = np.zeros((idx.size, wmap.U))
    J[np.arange(idx.size), idx] = 1.0
    return OffDiagonalSelector(J=J, s=int(idx.size))
