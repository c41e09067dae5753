"""Compression design and filter gains.

Oracles: direct Joseph-form trace evaluation (explicit Kronecker products)
for the objective identities and for finite-difference stationarity of the
closed-form gain; the benchmark estimator for the infinite-budget bound.
"""

import numpy as np
import pytest

from colcomp import Dimensions, SignalModel
from colcomp.compress import (
    BudgetExhaustedError,
    assemble_centralized_fi,
    assemble_decentralized_fi,
    assemble_decentralized_gain_problem,
    effective_channel,
    filter_gain_closed_form,
    filter_gain_decentralized,
    solve_decentralized_compression,
    sweep_centralized,
)
from colcomp.estimator import EstimatorState, benchmark_step
from colcomp.qcqp import solve_convex_qcqp
from oracles import channel_direct, random_setup, random_spd, trace_p_direct


def random_inputs(rng, model):
    d = model.dims
    P_prev = random_spd(rng, d.P)
    W = rng.standard_normal((d.M, d.N)) * 0.5
    T = rng.standard_normal((d.P, d.S)) * 0.5
    F_rows = rng.standard_normal((d.M, d.L)) * 0.5
    return P_prev, W, T, F_rows


def test_centralized_objective_identity():
    # Objective equals tr P(k) minus the f_i-independent terms: the constant
    # is tr P(k) at f_i = 0.
    rng = np.random.default_rng(0)
    model, _ = random_setup(rng, P=2, L=2, N=3, M=2, S=2)
    P_prev, W, T, F_rows = random_inputs(rng, model)
    for i in range(model.dims.M):
        prob = assemble_centralized_fi(i, P_prev, model, W, T, F_rows, 1e6)
        F0 = F_rows.copy()
        F0[i] = 0.0
        const = trace_p_direct(P_prev, model, W, F0, T)
        for _ in range(10):
            f = rng.standard_normal(model.dims.L)
            Ff = F_rows.copy()
            Ff[i] = f
            lhs = prob.objective(f) + const
            rhs = trace_p_direct(P_prev, model, W, Ff, T)
            assert abs(lhs - rhs) <= 1e-9 * max(abs(rhs), 1.0)


def test_degenerate_coupling_handled():
    # T chosen with T g_i = 0 so pi_ii = 0: ridge keeps the problem solvable.
    rng = np.random.default_rng(1)
    model, _ = random_setup(rng, P=2, L=2, N=3, M=2, S=2)
    P_prev, W, _, F_rows = random_inputs(rng, model)
    g0 = model.G[:, 0]
    u = np.array([-g0[1], g0[0]])                    # orthogonal to g0
    T = np.outer(rng.standard_normal(2), u)
    assert abs(T @ g0).max() <= 1e-12 * np.abs(T).max()
    prob = assemble_centralized_fi(0, P_prev, model, W, T, F_rows, 5.0)
    sol = solve_convex_qcqp(prob)
    assert np.isfinite(sol.objective)
    assert np.all(prob.constraint_values(sol.x) <= prob.mus + 1e-8)


def test_single_sensor_centralized_equals_decentralized():
    rng = np.random.default_rng(2)
    model, _ = random_setup(rng, P=2, L=2, N=2, M=1, S=2)
    P_prev, W, T, F_rows = random_inputs(rng, model)
    pc = assemble_centralized_fi(0, P_prev, model, W, T, F_rows, 3.0)
    pd_ = assemble_decentralized_fi(0, P_prev, model, W, T, 3.0)
    np.testing.assert_allclose(pc.Omega0, pd_.Omega0, atol=1e-14)
    np.testing.assert_allclose(pc.d, pd_.d, atol=1e-14)
    np.testing.assert_allclose(pc.Omegas, pd_.Omegas, atol=1e-14)


def test_decentralized_drops_cross_terms():
    rng = np.random.default_rng(3)
    model, _ = random_setup(rng, P=2, L=2, N=3, M=3, S=2)
    P_prev, W, T, F_rows = random_inputs(rng, model)
    d = model.dims
    K = np.kron(W, np.eye(d.L))
    Ct = model.H @ P_prev @ model.H.T + model.R_v
    TG = T @ model.G
    pi = TG.T @ TG
    for i in range(d.M):
        pc = assemble_centralized_fi(i, P_prev, model, W, T, F_rows, 1e6)
        pdc = assemble_decentralized_fi(i, P_prev, model, W, T, 1e6)
        np.testing.assert_allclose(pc.Omega0, pdc.Omega0, atol=1e-12)
        cross = np.zeros(d.L)
        Wi = K[i * d.L:(i + 1) * d.L]
        for j in range(d.M):
            if j == i:
                continue
            Wj = K[j * d.L:(j + 1) * d.L]
            cross += Wi @ Ct @ Wj.T @ F_rows[j] * pi[j, i]
        np.testing.assert_allclose(pc.d, pdc.d - cross, atol=1e-10)


def test_zero_gain_gives_zero_minimizer():
    rng = np.random.default_rng(4)
    model, _ = random_setup(rng)
    P_prev, W, _, _ = random_inputs(rng, model)
    prob = assemble_decentralized_fi(0, P_prev, model, W,
                                     np.zeros((2, 2)), 4.0)
    np.testing.assert_allclose(prob.d, 0.0, atol=1e-300)
    sol = solve_convex_qcqp(prob)
    assert np.linalg.norm(sol.x) <= 1e-5


def feasible_budgets(model, topo, W, F_rows, slack=1.5):
    from colcomp import total_cost
    return np.array([
        max(total_cost(i, W, F_rows, model, topo), 0.1) * slack
        for i in range(model.dims.N)
    ])


def test_sweep_monotone_and_fixed_point():
    rng = np.random.default_rng(5)
    model, topo = random_setup(rng, P=2, L=2, N=3, M=2, S=2)
    P_prev, W, T, F_rows = random_inputs(rng, model)
    budgets = feasible_budgets(model, topo, W, F_rows)
    before = trace_p_direct(P_prev, model, W, F_rows, T)
    out = sweep_centralized(P_prev, model, W, T, F_rows, budgets, sweeps=1)
    after = trace_p_direct(P_prev, model, W, out.rows, T)
    assert after <= before + 1e-12

    # Converge, then one more sweep changes nothing beyond solver accuracy.
    fixed = sweep_centralized(P_prev, model, W, T, out.rows, budgets, sweeps=50)
    again = sweep_centralized(P_prev, model, W, T, fixed.rows, budgets, sweeps=1)
    assert np.abs(again.rows - fixed.rows).max() <= 1e-8 * max(1.0, np.abs(fixed.rows).max())


def test_sweep_matches_sequential_single_solves():
    rng = np.random.default_rng(6)
    model, topo = random_setup(rng, P=2, L=2, N=3, M=2, S=2)
    P_prev, W, T, F_rows = random_inputs(rng, model)
    budgets = feasible_budgets(model, topo, W, F_rows)
    out = sweep_centralized(P_prev, model, W, T, F_rows, budgets, sweeps=1)

    F_manual = F_rows.copy()
    for i in range(model.dims.M):
        prob = assemble_centralized_fi(i, P_prev, model, W, T, F_manual, budgets[i])
        sol = solve_convex_qcqp(prob)
        if prob.objective(sol.x) <= prob.objective(F_manual[i]):
            F_manual[i] = sol.x
    np.testing.assert_allclose(out.rows, F_manual, atol=1e-12)


def test_infinite_budget_cannot_beat_benchmark():
    rng = np.random.default_rng(7)
    model, _ = random_setup(rng, P=2, L=2, N=2, M=2, S=4, snr_db=20.0)
    P_prev = random_spd(rng, 2)
    W = rng.standard_normal((2, 2))
    budgets = np.full(2, 1e9)
    F_rows = rng.standard_normal((2, 2))
    T = filter_gain_closed_form(P_prev, model, W, F_rows).T
    for _ in range(6):
        F_rows = sweep_centralized(P_prev, model, W, T, F_rows, budgets).rows
        T = filter_gain_closed_form(P_prev, model, W, F_rows).T
    designed = trace_p_direct(P_prev, model, W, F_rows, T)
    bench = benchmark_step(
        EstimatorState(x_hat=np.zeros(2), P=P_prev),
        y=np.zeros(model.dims.NL), H=model.H, R_v=model.R_v,
    )
    assert designed >= np.trace(bench.P) - 1e-10


def test_budget_exhausted_by_collaboration():
    rng = np.random.default_rng(8)
    model, topo = random_setup(rng)
    P_prev, _, T, F_rows = random_inputs(rng, model)
    W = np.ones((model.dims.M, model.dims.N)) * 2.0   # expensive collaboration
    with pytest.raises(BudgetExhaustedError):
        assemble_centralized_fi(0, P_prev, model, W, T, F_rows, 1e-3)


# --- closed-form gain ---------------------------------------------------------

def test_closed_form_zero_channel():
    rng = np.random.default_rng(9)
    model, _ = random_setup(rng)
    P_prev = random_spd(rng, 2)
    fg = filter_gain_closed_form(P_prev, model, np.zeros((2, 3)),
                                 np.zeros((2, 2)))
    np.testing.assert_allclose(fg.T, 0.0, atol=1e-300)


def test_closed_form_scalar_kalman_gain():
    dims = Dimensions(P=1, L=1, N=1, M=1, S=1)
    h, g, f, w, p, rv, ra, re = 1.1, 0.8, 1.3, 0.7, 2.0, 0.3, 0.05, 0.1
    model = SignalModel(
        dims, np.zeros(1), np.eye(1),
        R_v_blocks=np.array([[[rv]]]), R_alpha_blocks=np.array([[[ra]]]),
        R_eps=np.array([[re]]), H=np.array([[h]]), G=np.array([[g]]),
    )
    d_eff = g * f * w * h
    rn = g * g * f * f * (w * w * rv + ra) + re
    expect = p * d_eff / (d_eff * d_eff * p + rn)
    fg = filter_gain_closed_form(np.array([[p]]), model, np.array([[w]]),
                                 np.array([[f]]))
    assert abs(fg.T[0, 0] - expect) <= 1e-12 * abs(expect)


def test_closed_form_gradient_stationary():
    rng = np.random.default_rng(10)
    model, _ = random_setup(rng, P=2, L=2, N=3, M=2, S=2)
    P_prev, W, _, F_rows = random_inputs(rng, model)
    T0 = filter_gain_closed_form(P_prev, model, W, F_rows).T
    h = 1e-6
    base_scale = max(trace_p_direct(P_prev, model, W, F_rows, T0), 1.0)
    for a in range(T0.shape[0]):
        for b in range(T0.shape[1]):
            Tp, Tm = T0.copy(), T0.copy()
            Tp[a, b] += h
            Tm[a, b] -= h
            grad = (trace_p_direct(P_prev, model, W, F_rows, Tp)
                    - trace_p_direct(P_prev, model, W, F_rows, Tm)) / (2 * h)
            assert abs(grad) <= 1e-6 * base_scale


# --- decentralized gain ---------------------------------------------------------

def test_decentralized_gain_single_sensor_equals_closed_form():
    rng = np.random.default_rng(11)
    model, _ = random_setup(rng, P=2, L=2, N=2, M=1, S=2)
    P_prev, W, _, F_rows = random_inputs(rng, model)
    prob = assemble_decentralized_gain_problem(P_prev, model, W, F_rows)
    assert np.abs(prob.B).max() == 0.0               # empty coupling sum
    fg, status = filter_gain_decentralized(P_prev, model, W, F_rows)
    closed = filter_gain_closed_form(P_prev, model, W, F_rows).T
    assert status == "unconstrained"
    np.testing.assert_allclose(fg.T, closed, atol=1e-8 * max(1.0, np.abs(closed).max()))


def test_decentralized_gain_constraint_and_ordering():
    rng = np.random.default_rng(12)
    worse = 0
    for trial in range(50):
        model, _ = random_setup(rng, P=2, L=2, N=3, M=3, S=2)
        P_prev, W, _, F_rows = random_inputs(rng, model)
        prob = assemble_decentralized_gain_problem(P_prev, model, W, F_rows)
        fg, status = filter_gain_decentralized(P_prev, model, W, F_rows)
        if status != "optimal":
            continue
        res = abs(np.trace(fg.T @ prob.B @ fg.T.T))
        scale = max(np.linalg.norm(fg.T) ** 2 * np.abs(prob.B).max(), 1e-300)
        assert res <= 1e-8 * max(scale, 1.0)
        closed = filter_gain_closed_form(P_prev, model, W, F_rows).T
        t_dec = trace_p_direct(P_prev, model, W, F_rows, fg.T)
        t_cen = trace_p_direct(P_prev, model, W, F_rows, closed)
        assert t_dec >= t_cen - 1e-10 * max(t_cen, 1.0)
        worse += 1
    assert worse >= 40                                # constraint active most runs


def test_decentralized_gain_aggregates_coupling():
    # Lambda_i sums to B, and tr(T Lambda_i T') reproduces the cross terms of
    # the centralized objective.
    rng = np.random.default_rng(13)
    model, _ = random_setup(rng, P=2, L=2, N=3, M=3, S=2)
    P_prev, W, T, F_rows = random_inputs(rng, model)
    prob = assemble_decentralized_gain_problem(P_prev, model, W, F_rows)
    np.testing.assert_allclose(prob.Lambdas.sum(axis=0), prob.B, atol=1e-12)
    d = model.dims
    K = np.kron(W, np.eye(d.L))
    Ct = model.H @ P_prev @ model.H.T + model.R_v
    TG = T @ model.G
    pi = TG.T @ TG
    total = 0.0
    for i in range(d.M):
        for j in range(d.M):
            if i == j:
                continue
            Wi = K[i * d.L:(i + 1) * d.L]
            Wj = K[j * d.L:(j + 1) * d.L]
            total += float(F_rows[i] @ Wi @ Ct @ Wj.T @ F_rows[j]) * pi[j, i]
    assert abs(np.trace(T @ prob.B @ T.T) - total) <= 1e-10 * max(abs(total), 1.0)


def test_effective_channel_matches_direct():
    rng = np.random.default_rng(14)
    model, _ = random_setup(rng, P=2, L=2, N=3, M=2, S=3)
    _, W, _, F_rows = random_inputs(rng, model)
    ch = effective_channel(model, W, F_rows)
    D, R_n = channel_direct(model, W, F_rows)
    np.testing.assert_allclose(ch.D, D, atol=1e-12)
    np.testing.assert_allclose(ch.R_n, R_n, atol=1e-12)


def test_decentralized_compression_feasible():
    rng = np.random.default_rng(15)
    model, topo = random_setup(rng, P=2, L=2, N=3, M=2, S=2)
    P_prev, W, T, _ = random_inputs(rng, model)
    W = W * 0.2
    budgets = np.full(model.dims.N, 1.0)
    cs = solve_decentralized_compression(P_prev, model, W, T, budgets)
    from colcomp import total_cost
    for i in range(model.dims.M):
        assert total_cost(i, W, cs.rows, model, topo) <= budgets[i] + 1e-8
