"""Shared independent oracles for the design-module tests.

Everything here evaluates the defining expressions directly (explicit
Kronecker products, dense traces), independent of the lifted/assembled code
paths under test.
"""

import numpy as np

from colcomp import Dimensions, SignalModel, Topology


def random_spd(rng, n, cond=10.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = np.exp(rng.uniform(0.0, np.log(cond), n))
    a = (q * eig) @ q.T
    return 0.5 * (a + a.T)                            # exactly symmetric


def random_setup(rng, P=2, L=2, N=3, M=2, S=2, snr_db=10.0, density=1.0):
    """Random bound model and topology."""
    dims = Dimensions(P=P, L=L, N=N, M=M, S=S)
    base = SignalModel.isotropic(dims, snr_db, snr_db, snr_db)
    model = base.with_channels(
        rng.standard_normal((dims.NL, dims.P)),
        rng.standard_normal((dims.S, dims.M)),
    )
    if density >= 1.0:
        topo = Topology.full(M, N)
    else:
        A = (rng.random((M, N)) < density).astype(int)
        A[np.arange(M), np.arange(M)] = 1
        topo = Topology(A)
    return model, topo


def block_diag_F(F_rows, dims):
    F = np.zeros((dims.M, dims.ML))
    for i in range(dims.M):
        F[i, i * dims.L:(i + 1) * dims.L] = F_rows[i]
    return F


def channel_direct(model, W, F_rows):
    """(D, R_n) evaluated with explicit Kronecker products."""
    d = model.dims
    K = np.kron(np.asarray(W, float), np.eye(d.L))
    F = block_diag_F(np.asarray(F_rows, float), d)
    GF = model.G @ F
    GFW = GF @ K
    D = GFW @ model.H
    R_n = GFW @ model.R_v @ GFW.T + GF @ model.R_alpha @ GF.T + model.R_eps
    return D, R_n


def trace_p_direct(P_prev, model, W, F_rows, T):
    """Updated error-covariance trace from the Joseph-form recursion, valid
    for any gain T."""
    D, R_n = channel_direct(model, W, F_rows)
    ImTD = np.eye(model.dims.P) - T @ D
    return float(np.trace(ImTD @ P_prev @ ImTD.T + T @ R_n @ T.T))
