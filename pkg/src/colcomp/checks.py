"""Fast self-check suite behind `colcomp check`.

Each check re-verifies a core identity or invariant on fresh random
instances: the trace-reduction identities, whitening, secular monotonicity,
design-problem assembly against direct trace evaluation, and the Joseph-form
PSD property.  Prints one line per check; returns the list of failures.
"""

from __future__ import annotations

import numpy as np

from .collab import assemble_collab_problem
from .compress import assemble_centralized_fi, effective_channel
from .estimator import EstimatorState, rlmmse_step
from .kronmap import (
    WeightIndexMap,
    linear_form_vector,
    quad_form_matrix,
    row_lift,
    vectorize_weights,
)
from .model import SignalModel, Topology, Dimensions
from .qcqp import secular_function, whiten_pair


def _random_spd(rng, n, cond=10.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = np.exp(rng.uniform(0.0, np.log(cond), n))
    a = (q * eig) @ q.T
    return 0.5 * (a + a.T)


def check_trace_identities(rng) -> float:
    worst = 0.0
    for _ in range(60):
        M, N, L = rng.integers(1, 4), rng.integers(1, 5), rng.integers(1, 3)
        N = max(M, N)
        A = (rng.random((M, N)) < 0.7).astype(int)
        A[np.arange(M), np.arange(M)] = 1
        wmap = WeightIndexMap.from_topology(Topology(A))
        W = rng.standard_normal((M, N)) * A
        w = vectorize_weights(W, wmap)
        K = np.kron(W, np.eye(L))
        a = rng.standard_normal(M * L)
        r = int(rng.integers(1, 4))
        B = rng.standard_normal((r, M * L))
        C = rng.standard_normal((N * L, N * L))
        D = rng.standard_normal((M * L, r))
        C2 = rng.standard_normal((N * L, r))
        worst = max(worst, float(np.abs(w @ row_lift(a, wmap, L) - a @ K).max()))
        lhs = w @ quad_form_matrix(B, C, D, wmap, L) @ w
        rhs = np.trace(B @ K @ C @ K.T @ D)
        worst = max(worst, abs(lhs - rhs) / max(abs(rhs), 1.0))
        lhs = w @ linear_form_vector(B, C2, wmap, L)
        worst = max(worst, abs(lhs - np.trace(B @ K @ C2)))
    return worst


def check_whitening(rng) -> float:
    worst = 0.0
    for _ in range(10):
        n = int(rng.integers(2, 10))
        Om1 = _random_spd(rng, n, cond=50.0)
        Om2 = rng.standard_normal((n, n))
        Om2 = 0.5 * (Om2 + Om2.T)
        wp = whiten_pair(Om1, Om2)
        worst = max(worst, float(np.abs(wp.Mmat @ Om1 @ wp.Mmat.T - np.eye(n)).max()))
        worst = max(worst, float(np.abs(wp.Mmat @ Om2 @ wp.Mmat.T
                                        - np.diag(wp.sigma)).max())
                    / max(1.0, np.abs(wp.sigma).max()))
    return worst


def check_secular_monotone(rng) -> float:
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 6))
        sigma = rng.standard_normal(n)
        m = rng.standard_normal(n)
        pos, neg = sigma[sigma > 0], sigma[sigma < 0]
        lo = -1.0 / pos.max() if pos.size else -2.0
        hi = -1.0 / neg.min() if neg.size else 2.0
        beta = rng.uniform(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo))
        h = 1e-7
        d = secular_function(beta + h, sigma, m) - secular_function(beta - h, sigma, m)
        worst = max(worst, d)
    return worst


def check_assembly(rng) -> float:
    worst = 0.0
    for _ in range(3):
        dims = Dimensions(P=2, L=2, N=3, M=2, S=2)
        model = SignalModel.isotropic(dims, 15.0, 15.0, 15.0).with_channels(
            rng.standard_normal((dims.NL, dims.P)),
            rng.standard_normal((dims.S, dims.M)))
        topo = Topology.full(dims.M, dims.N)
        P_prev = _random_spd(rng, dims.P)
        F_rows = rng.standard_normal((dims.M, dims.L)) * 0.3
        T = rng.standard_normal((dims.P, dims.S)) * 0.3
        prob = assemble_collab_problem(P_prev, model, topo, F_rows, T,
                                       np.full(dims.N, 1e6))
        for _ in range(5):
            W = rng.standard_normal((dims.M, dims.N)) * 0.3
            w = vectorize_weights(W, prob.wmap)
            ch = effective_channel(model, W, F_rows)
            ImTD = np.eye(dims.P) - T @ ch.D
            direct = float(np.trace(ImTD @ P_prev @ ImTD.T + T @ ch.R_n @ T.T))
            worst = max(worst, abs(prob.qcqp.objective(w) - direct)
                        / max(abs(direct), 1.0))
            fprob = assemble_centralized_fi(0, P_prev, model, W, T, F_rows, 1e6)
            F0 = F_rows.copy()
            F0[0] = 0.0
            ch0 = effective_channel(model, W, F0)
            ImTD0 = np.eye(dims.P) - T @ ch0.D
            const = float(np.trace(ImTD0 @ P_prev @ ImTD0.T + T @ ch0.R_n @ T.T))
            chf = effective_channel(model, W, F_rows)
            ImTDf = np.eye(dims.P) - T @ chf.D
            full = float(np.trace(ImTDf @ P_prev @ ImTDf.T + T @ chf.R_n @ T.T))
            worst = max(worst, abs(fprob.objective(F_rows[0]) + const - full)
                        / max(abs(full), 1.0))
    return worst


def check_joseph_psd(rng) -> float:
    worst = 0.0
    st = EstimatorState(np.zeros(3), _random_spd(rng, 3))
    D = rng.standard_normal((2, 3))
    R_n = _random_spd(rng, 2)
    for _ in range(50):
        T = rng.standard_normal((3, 2))
        out = rlmmse_step(st, np.zeros(2), D, R_n, T)
        lo = np.linalg.eigvalsh(out.P)[0]
        worst = max(worst, -lo / max(np.trace(out.P), 1e-300))
    return worst


CHECKS = [
    ("trace-reduction identities", check_trace_identities, 1e-10),
    ("pair whitening", check_whitening, 1e-10),
    ("secular monotonicity", check_secular_monotone, 1e-12),
    ("design assembly vs direct trace", check_assembly, 1e-9),
    ("Joseph-form PSD", check_joseph_psd, 1e-10),
]


def run_all(verbose: bool = True, seed: int = 0) -> list[str]:
    rng = np.random.default_rng(seed)
    failures = []
    for name, fn, tol in CHECKS:
        worst = fn(rng)
        ok = worst <= tol
        if verbose:
            print(f"{'PASS' if ok else 'FAIL'}  {name}: worst {worst:.3e} "
                  f"(tolerance {tol:.0e})")
        if not ok:
            failures.append(name)
    return failures
