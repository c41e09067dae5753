"""Collaboration QCQP assembly and solve.

Master oracle: the assembled objective at any masked W must equal the
Joseph-form covariance trace evaluated directly (explicit Kronecker
products), and each constraint must equal the sensor's total expected
energy.
"""

import numpy as np
import pytest

from colcomp import (
    Dimensions,
    SignalModel,
    Topology,
    WeightIndexMap,
    total_cost,
    vectorize_weights,
)
from colcomp.collab import (
    BudgetExhaustedError,
    assemble_collab_problem,
    collab_energy_matrix,
    collab_energy_matrix_reference,
    solve_collaboration,
)
from oracles import random_setup, random_spd, trace_p_direct


def random_inputs(rng, model, topo):
    d = model.dims
    P_prev = random_spd(rng, d.P)
    F_rows = rng.standard_normal((d.M, d.L))
    T = rng.standard_normal((d.P, d.S))
    return P_prev, F_rows, T


def masked_random_W(rng, topo, scale=1.0):
    return rng.standard_normal(topo.A.shape) * topo.A * scale


def test_objective_matches_direct_trace():
    rng = np.random.default_rng(0)
    model, topo = random_setup(rng, P=2, L=2, N=3, M=2, S=2)
    P_prev, F_rows, T = random_inputs(rng, model, topo)
    prob = assemble_collab_problem(P_prev, model, topo, F_rows, T,
                                   budgets=np.full(3, 1e6))
    for _ in range(20):
        W = masked_random_W(rng, topo, scale=0.3)
        w = vectorize_weights(W, prob.wmap)
        lhs = prob.qcqp.objective(w)
        rhs = trace_p_direct(P_prev, model, W, F_rows, T)
        assert abs(lhs - rhs) <= 1e-9 * max(abs(rhs), 1.0)


def test_constraints_match_total_cost():
    rng = np.random.default_rng(1)
    model, topo = random_setup(rng, P=2, L=2, N=4, M=2, S=2, density=0.7)
    P_prev, F_rows, T = random_inputs(rng, model, topo)
    prob = assemble_collab_problem(P_prev, model, topo, F_rows, T,
                                   budgets=np.full(4, 1e6))
    for _ in range(10):
        W = masked_random_W(rng, topo, scale=0.5)
        w = vectorize_weights(W, prob.wmap)
        vals = prob.qcqp.constraint_values(w)
        for row, sensor in enumerate(prob.constraint_sensors):
            expect = total_cost(sensor, W, F_rows, model, topo)
            # The ridge tightens each constraint by a relatively negligible bit.
            assert abs(vals[row] - expect) <= 1e-8 * max(expect, 1.0)


def test_zero_gain_or_compression_degenerates():
    rng = np.random.default_rng(2)
    model, topo = random_setup(rng)
    P_prev, F_rows, T = random_inputs(rng, model, topo)
    for Fz, Tz in (((F_rows * 0.0), T), (F_rows, T * 0.0)):
        prob = assemble_collab_problem(P_prev, model, topo, Fz, Tz,
                                       budgets=np.full(3, 10.0))
        np.testing.assert_allclose(prob.qcqp.d, 0.0, atol=1e-300)
        # objective constant in w up to the ridge
        w = vectorize_weights(masked_random_W(rng, topo), prob.wmap)
        assert abs(prob.qcqp.objective(w) - prob.qcqp.eta0) <= 1e-8 * abs(prob.qcqp.eta0)


def test_scalar_hand_expansion():
    # All dims 1, A = [1]: Omega0 = t^2 g^2 f^2 (h^2 p + rv), d = t g f h p,
    # eta0 = p + t^2 g^2 f^2 ra + t^2 re.
    dims = Dimensions(P=1, L=1, N=1, M=1, S=1)
    h, g, t, f, p, rv, ra, re = 1.3, -0.7, 0.9, 1.1, 2.0, 0.5, 0.1, 0.2
    model = SignalModel(
        dims, np.zeros(1), np.eye(1),
        R_v_blocks=np.array([[[rv]]]), R_alpha_blocks=np.array([[[ra]]]),
        R_eps=np.array([[re]]), H=np.array([[h]]), G=np.array([[g]]),
    )
    topo = Topology(np.array([[1]]))
    prob = assemble_collab_problem(np.array([[p]]), model, topo,
                                   np.array([[f]]), np.array([[t]]),
                                   budgets=np.array([100.0]))
    om0_hand = t * t * g * g * f * f * (h * h * p + rv)
    d_hand = t * g * f * h * p
    eta0_hand = p + t * t * g * g * f * f * ra + t * t * re
    assert abs(prob.qcqp.Omega0[0, 0] - om0_hand) <= 1e-9 * abs(om0_hand)
    assert abs(prob.qcqp.d[0] - d_hand) <= 1e-12 * abs(d_hand)
    assert abs(prob.qcqp.eta0 - eta0_hand) <= 1e-12 * abs(eta0_hand)


def test_unconstrained_minimizer_with_huge_budgets():
    rng = np.random.default_rng(3)
    model, topo = random_setup(rng)
    P_prev, F_rows, T = random_inputs(rng, model, topo)
    prob = assemble_collab_problem(P_prev, model, topo, F_rows, T,
                                   budgets=np.full(3, 1e9))
    W, sol = solve_collaboration(prob)
    w_free = np.linalg.solve(prob.qcqp.Omega0, prob.qcqp.d)
    assert abs(prob.qcqp.objective(sol.x) - prob.qcqp.objective(w_free)) \
        <= 1e-6 * max(1.0, abs(prob.qcqp.objective(w_free)))
    np.testing.assert_allclose(vectorize_weights(W, prob.wmap), w_free,
                               atol=2e-4 * max(1.0, np.abs(w_free).max()))


def test_vanishing_budget_shrinks_weights():
    rng = np.random.default_rng(4)
    model, topo = random_setup(rng)
    P_prev, F_rows, T = random_inputs(rng, model, topo)
    d = model.dims
    eta1 = np.array([F_rows[i] @ model.R_alpha_blocks[i] @ F_rows[i]
                     for i in range(d.M)])
    norms = []
    for eps in (1e-2, 1e-4, 1e-6):
        budgets = np.full(d.N, 1e-6 + eps)
        budgets[:d.M] = eta1 + eps
        prob = assemble_collab_problem(P_prev, model, topo, F_rows, T, budgets)
        _, sol = solve_collaboration(prob)
        norms.append(np.linalg.norm(sol.x))
    assert norms[0] > norms[1] > norms[2]
    assert norms[2] <= 1e-2


def test_scalar_instance_vs_golden_section():
    # N = M = 1 keeps a single weight; compare to a 1-D golden-section search
    # over the feasible interval.
    rng = np.random.default_rng(5)
    model, topo = random_setup(rng, P=1, L=1, N=1, M=1, S=1)
    P_prev = np.array([[1.5]])
    F_rows = np.array([[0.8]])
    T = rng.standard_normal((1, 1))
    budgets = np.array([0.35])
    prob = assemble_collab_problem(P_prev, model, topo, F_rows, T, budgets)
    _, sol = solve_collaboration(prob)

    # Feasible interval from the single quadratic constraint.
    a = prob.qcqp.Omegas[0, 0, 0]
    r = np.sqrt((prob.qcqp.mus[0] - prob.qcqp.etas[0]) / a)
    lo, hi = -r, r
    gr = (np.sqrt(5.0) - 1.0) / 2.0
    c, d_ = hi - gr * (hi - lo), lo + gr * (hi - lo)
    for _ in range(200):
        if prob.qcqp.objective(np.array([c])) < prob.qcqp.objective(np.array([d_])):
            hi = d_
        else:
            lo = c
        c, d_ = hi - gr * (hi - lo), lo + gr * (hi - lo)
    golden = prob.qcqp.objective(np.array([0.5 * (lo + hi)]))
    assert sol.objective <= golden + 1e-6


def test_energy_matrix_matches_selector_reference():
    rng = np.random.default_rng(6)
    for _ in range(10):
        M, N = 3, 5
        A = (rng.random((M, N)) < 0.6).astype(int)
        A[np.arange(M), np.arange(M)] = 1
        topo = Topology(A)
        wmap = WeightIndexMap.from_topology(topo)
        for i in range(N):
            tr_ryi = float(rng.uniform(0.5, 3.0))
            direct = collab_energy_matrix(i, wmap, tr_ryi)
            ref = collab_energy_matrix_reference(i, wmap, tr_ryi)
            np.testing.assert_allclose(direct, ref, atol=1e-12)


def test_budget_exhausted_raises():
    rng = np.random.default_rng(7)
    model, topo = random_setup(rng)
    P_prev, F_rows, T = random_inputs(rng, model, topo)
    eta1_0 = float(F_rows[0] @ model.R_alpha_blocks[0] @ F_rows[0])
    budgets = np.full(3, 10.0)
    budgets[0] = eta1_0 * 0.5
    with pytest.raises(BudgetExhaustedError):
        assemble_collab_problem(P_prev, model, topo, F_rows, T, budgets)


def test_assembled_problem_validates_pd():
    rng = np.random.default_rng(8)
    model, topo = random_setup(rng, N=4, M=2, density=0.8)
    P_prev, F_rows, T = random_inputs(rng, model, topo)
    prob = assemble_collab_problem(P_prev, model, topo, F_rows, T,
                                   budgets=np.full(4, 5.0))
    prob.validate()                                   # min-eigenvalue assertions


def test_monotone_guard_against_previous_weights():
    rng = np.random.default_rng(9)
    model, topo = random_setup(rng)
    P_prev, F_rows, T = random_inputs(rng, model, topo)
    budgets = np.full(3, 2.0)
    prob = assemble_collab_problem(P_prev, model, topo, F_rows, T, budgets)
    W1, sol1 = solve_collaboration(prob)
    W2, sol2 = solve_collaboration(prob, prev_W=W1)
    w2 = vectorize_weights(W2, prob.wmap)
    assert prob.qcqp.objective(w2) <= prob.qcqp.objective(
        vectorize_weights(W1, prob.wmap)) + 1e-12
