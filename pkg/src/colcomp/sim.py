"""Scenario orchestration: topology generation, the full design-estimate
loop over Monte Carlo trials, parameter sweeps, and result tables.

A scenario runs, per trial and per time step, the alternating design rounds
(collaboration solve, compression sweep or local solves, gain update), forms
the received signal from the trial's realization, steps the estimator, and
records analytic/sample MSE, per-sensor expected energy, and the
monotonicity diagnostics.  Trials use seed streams split from the master
seed, so results are reproducible regardless of worker count, and sweeps
reuse the same master seed at every point (common random numbers).
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .collab import BudgetExhaustedError, assemble_collab_problem, solve_collaboration
from .compress import (
    effective_channel,
    filter_gain_closed_form,
    filter_gain_decentralized,
    solve_decentralized_compression,
    sweep_centralized,
)
from .estimator import (
    EstimatorState,
    StateModel,
    benchmark_step,
    kalman_predict,
    monotonicity_check,
    mse_trace,
    rlmmse_step,
)
from .kronmap import WeightIndexMap
from .model import (
    Dimensions,
    ModelError,
    SignalModel,
    Topology,
    draw_realization,
    expected_collab_cost,
    total_cost,
    validate_model,
)

log = logging.getLogger(__name__)

MODES = ("centralized", "decentralized", "static", "benchmark-only", "timevarying")

# Relative change below which one design round is declared a fixed point and
# the remaining rounds (no-ops to working precision) are skipped.
ROUND_FIXED_POINT_TOL = 1e-13


@dataclass
class ScenarioConfig:
    """Experiment description.  Every field has a file-format key; see
    `parse_config` for the mapping."""

    P: int = 3
    L: int = 6
    N: int = 7
    M: int = 3
    S: int = 3
    snr_obs_db: float = 20.0
    snr_collab_db: float = 20.0
    snr_fc_db: float = 20.0
    topology_kind: str = "full"              # full | geometric | explicit
    topology_r0: float = 0.5
    topology_seed: int = 0
    topology_matrix: np.ndarray | None = None
    budget: np.ndarray | float = 1.0
    horizon: int = 20
    rho_centralized: int = 20
    rho_decentralized: int = 100
    trials: int = 1
    seed: int = 0
    mode: str = "centralized"
    workers: int = 1
    transition: np.ndarray | None = None     # A_s (time-varying mode)
    state_noise_cov: np.ndarray | None = None  # R_ns
    tv_design: str = "centralized"
    sweep_parameter: str | None = None
    sweep_values: tuple | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ModelError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.horizon < 1 or self.trials < 1 or self.workers < 1:
            raise ModelError("horizon, trials and workers must be >= 1")
        if self.rho_centralized < 1 or self.rho_decentralized < 1:
            raise ModelError("alternation round counts must be >= 1")

    @property
    def dims(self) -> Dimensions:
        return Dimensions(P=self.P, L=self.L, N=self.N, M=self.M, S=self.S)

    def budgets(self) -> np.ndarray:
        mu = np.asarray(self.budget, dtype=float)
        if mu.ndim == 0:
            mu = np.full(self.N, float(mu))
        if mu.shape != (self.N,) or not (mu > 0).all():
            raise ModelError(f"budget must be a positive scalar or length-{self.N} vector")
        return mu

    def base_model(self) -> SignalModel:
        return SignalModel.isotropic(self.dims, self.snr_obs_db,
                                     self.snr_collab_db, self.snr_fc_db)

    def topology(self) -> Topology:
        if self.topology_kind == "full":
            return Topology.full(self.M, self.N)
        if self.topology_kind == "geometric":
            return geometric_topology(self.N, self.M, self.topology_r0,
                                      self.topology_seed)
        if self.topology_kind == "explicit":
            if self.topology_matrix is None:
                raise ModelError("explicit topology requires topology.matrix")
            return Topology(np.asarray(self.topology_matrix))
        raise ModelError(f"unknown topology kind {self.topology_kind!r}")

    def designed_modes(self) -> tuple[str, ...]:
        if self.mode == "centralized":
            return ("centralized",)
        if self.mode == "decentralized":
            return ("decentralized",)
        if self.mode == "static":
            return ("centralized", "decentralized")
        if self.mode == "timevarying":
            return (self.tv_design,)
        return ()

    def rho_for(self, designed_mode: str) -> int:
        return self.rho_centralized if designed_mode == "centralized" \
            else self.rho_decentralized

    def state_model(self) -> StateModel | None:
        if self.mode != "timevarying":
            return None
        A_s = np.eye(self.P) if self.transition is None \
            else np.asarray(self.transition, dtype=float)
        R_ns = np.zeros((self.P, self.P)) if self.state_noise_cov is None \
            else np.asarray(self.state_noise_cov, dtype=float)
        return StateModel(A_s=A_s, R_ns=R_ns)


@dataclass
class RunResult:
    """Per-step averages across trials, plus the per-trial curves the
    statistical acceptance checks need."""

    config: ScenarioConfig
    ks: np.ndarray                                  # (K,)
    mse: dict                                       # mode -> (K,)
    mse_trials: dict                                # mode -> (trials, K)
    sample_mse: dict
    sample_mse_trials: dict
    energy: dict                                    # mode -> (K, N) mean
    energy_max: dict                                # mode -> (K, N) max
    lemma1_decrease: np.ndarray | None
    lemma1_bound: np.ndarray | None
    lemma1_decrease_trials: np.ndarray | None       # (trials, K)
    lemma1_bound_trials: np.ndarray | None
    lemma1_violations: int
    failures: int
    wall_clock: float

    def __post_init__(self):
        K = self.ks.shape[0]
        for mode, curve in self.mse.items():
            if curve.shape != (K,):
                raise ValueError(f"MSE curve for {mode} has {curve.shape[0]} rows, expected {K}")
            if not (curve >= 0).all():
                raise ValueError(f"negative MSE in mode {mode}")


# ---------------------------------------------------------------------------
# Topology generation
# ---------------------------------------------------------------------------

def geometric_topology(N: int, M: int, r0: float, seed: int) -> Topology:
    """Random geometric graph on the unit square.

    Sensors are placed uniformly; the M sensors closest to the square's
    center (ties by index) are relabeled 0..M-1 as the communicating subset.
    A[i, j] = 1 iff the distance between sensors i and j is at most r0, or
    i == j."""
    if r0 < 0:
        raise ModelError("collaboration radius must be nonnegative")
    if M > N:
        raise ModelError(f"M={M} exceeds N={N}")
    rng = np.random.default_rng(seed)
    pos = rng.uniform(0.0, 1.0, size=(N, 2))
    center_dist = np.linalg.norm(pos - 0.5, axis=1)
    order = np.lexsort((np.arange(N), center_dist))  # distance, ties by index
    comm = np.sort(order[:M])
    rest = np.setdiff1d(np.arange(N), comm)
    perm = np.concatenate([comm, rest])
    pos = pos[perm]
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=2)
    A = (dist[:M, :] <= r0).astype(int)
    A[np.arange(M), np.arange(M)] = 1
    return Topology(A, positions=pos)


# ---------------------------------------------------------------------------
# One trial
# ---------------------------------------------------------------------------

def _initial_design(model_k, topo, wmap, budgets):
    """Half the budget to collaboration (row-normalized adjacency, scaled),
    half to compression (scaled all-ones vectors)."""
    d = model_k.dims
    A = topo.A.astype(float)
    W = A / A.sum(axis=1, keepdims=True)
    costs = np.array([expected_collab_cost(i, W, model_k, topo)
                      for i in range(d.N)])
    live = costs > 0
    if live.any():
        scale = np.sqrt((0.5 * budgets[live]) / costs[live]).min()
        W = W * scale

    F_rows = np.zeros((d.M, d.L))
    ones = np.ones(d.L)
    from .model import compression_quadratic
    for i in range(d.M):
        q = float(ones @ compression_quadratic(i, W, model_k) @ ones)
        F_rows[i] = ones * np.sqrt((0.5 * budgets[i]) / q)
    T = filter_gain_closed_form(np.asarray(model_k.R_x), model_k, W, F_rows).T
    return W, F_rows, T


def _design_rounds(designed_mode, P_prev, model_k, topo, wmap, budgets,
                   W, F_rows, T, rho):
    """rho alternation rounds of [collaboration solve -> compression ->
    gain update], warm started, with a fixed-point early exit."""
    gain_status = "optimal"
    for _ in range(int(rho)):
        prob = assemble_collab_problem(P_prev, model_k, topo, F_rows, T,
                                       budgets, wmap=wmap)
        W_new, _ = solve_collaboration(prob, prev_W=W)
        if designed_mode == "centralized":
            F_new = sweep_centralized(P_prev, model_k, W_new, T, F_rows,
                                      budgets, sweeps=1).rows
            T_new = filter_gain_closed_form(P_prev, model_k, W_new, F_new).T
        else:
            F_new = solve_decentralized_compression(P_prev, model_k, W_new,
                                                    T, budgets).rows
            gain, gain_status = filter_gain_decentralized(P_prev, model_k,
                                                          W_new, F_new)
            T_new = gain.T
        delta = max(
            np.abs(W_new - W).max(initial=0.0) / max(1.0, np.abs(W).max(initial=0.0)),
            np.abs(F_new - F_rows).max(initial=0.0) / max(1.0, np.abs(F_rows).max(initial=0.0)),
            np.abs(T_new - T).max(initial=0.0) / max(1.0, np.abs(T).max(initial=0.0)),
        )
        W, F_rows, T = W_new, F_new, T_new
        if delta < ROUND_FIXED_POINT_TOL:
            break
    return W, F_rows, T, gain_status


def _run_trial(config: ScenarioConfig, trial_seed) -> dict:
    d = config.dims
    base = config.base_model()
    topo = config.topology()
    wmap = WeightIndexMap.from_topology(topo)
    budgets = config.budgets()
    K = config.horizon
    sm = config.state_model()
    transition = None if sm is None else (sm.A_s, sm.R_ns)

    real = draw_realization(base, K, trial_seed, transition=transition)
    validate_model(real.model_at(1, base), d, topo)

    designed = config.designed_modes()
    out = {
        "mse": {m: np.zeros(K) for m in (*designed, "benchmark")},
        "sample": {m: np.zeros(K) for m in (*designed, "benchmark")},
        "energy": {m: np.zeros((K, d.N)) for m in designed},
        "lemma_decrease": np.full(K, np.nan),
        "lemma_bound": np.full(K, np.nan),
        "lemma_violations": 0,
        "failures": 0,
    }

    x0_hat = base.x0.copy()
    P0 = np.asarray(base.R_x, dtype=float)
    states = {m: EstimatorState(x_hat=x0_hat, P=P0) for m in (*designed, "benchmark")}
    design_vars = {}
    model_1 = real.model_at(1, base)
    for m in designed:
        design_vars[m] = _initial_design(model_1, topo, wmap, budgets)

    lemma_mode = designed[0] if designed else None
    for k in range(1, K + 1):
        model_k = real.model_at(k, base)
        x_true = real.x[k]
        v_k, a_k, e_k = real.v[k - 1], real.alpha[k - 1], real.eps[k - 1]

        for m in designed:
            st = states[m]
            if sm is not None:
                st = kalman_predict(st, sm)
            phi_prev = mse_trace(st)
            W, F_rows, T = design_vars[m]
            try:
                W, F_rows, T, _ = _design_rounds(
                    m, st.P, model_k, topo, wmap, budgets, W, F_rows, T,
                    config.rho_for(m))
                design_vars[m] = (W, F_rows, T)
            except (BudgetExhaustedError, np.linalg.LinAlgError) as exc:
                out["failures"] += 1
                log.warning("trial step %d (%s): design failed (%s); reusing "
                            "previous design", k, m, exc)
                W, F_rows, T = design_vars[m]
            ch = effective_channel(model_k, W, F_rows)
            q = ch.D @ x_true + ch.GFW @ v_k + ch.GF @ a_k + e_k
            new_st = rlmmse_step(st, q, ch.D, ch.R_n, T)
            states[m] = new_st
            out["mse"][m][k - 1] = mse_trace(new_st)
            out["sample"][m][k - 1] = float(np.sum((x_true - new_st.x_hat) ** 2))
            out["energy"][m][k - 1] = [total_cost(i, W, F_rows, model_k, topo)
                                       for i in range(d.N)]
            if m == lemma_mode:
                rec = monotonicity_check(phi_prev, mse_trace(new_st), ch.D,
                                         st.P, ch.R_n)
                out["lemma_decrease"][k - 1] = rec.decrease
                out["lemma_bound"][k - 1] = rec.bound
                if rec.violated:
                    if m == "centralized":
                        out["lemma_violations"] += 1
                    else:
                        log.info("trial step %d: nonmonotone step in %s mode "
                                 "(decrease %.3e, bound %.3e)",
                                 k, m, rec.decrease, rec.bound)

        stb = states["benchmark"]
        if sm is not None:
            stb = kalman_predict(stb, sm)
        y = model_k.H @ x_true + v_k
        stb = benchmark_step(stb, y, model_k.H, model_k.R_v)
        states["benchmark"] = stb
        out["mse"]["benchmark"][k - 1] = mse_trace(stb)
        out["sample"]["benchmark"][k - 1] = float(np.sum((x_true - stb.x_hat) ** 2))
    return out


def _trial_entry(args):
    return _run_trial(*args)


# ---------------------------------------------------------------------------
# Scenario execution
# ---------------------------------------------------------------------------

def run_scenario(config: ScenarioConfig) -> RunResult:
    """Run all trials of a scenario and average.

    The master seed is split into one child stream per trial; aggregation is
    by trial index, so the result is identical for any worker count."""
    t0 = time.perf_counter()
    seeds = np.random.SeedSequence(config.seed).spawn(config.trials)
    jobs = [(config, s) for s in seeds]
    if config.workers > 1 and config.trials > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            trials = list(pool.map(_trial_entry, jobs))
    else:
        trials = [_run_trial(config, s) for s in seeds]

    modes = [*config.designed_modes(), "benchmark"]
    K = config.horizon
    mse_trials = {m: np.stack([t["mse"][m] for t in trials]) for m in modes}
    sample_trials = {m: np.stack([t["sample"][m] for t in trials]) for m in modes}
    energy = {}
    energy_max = {}
    for m in config.designed_modes():
        stack = np.stack([t["energy"][m] for t in trials])     # (trials, K, N)
        energy[m] = stack.mean(axis=0)
        energy_max[m] = stack.max(axis=0)

    has_lemma = bool(config.designed_modes())
    ld = np.stack([t["lemma_decrease"] for t in trials]) if has_lemma else None
    lb = np.stack([t["lemma_bound"] for t in trials]) if has_lemma else None

    return RunResult(
        config=config,
        ks=np.arange(1, K + 1),
        mse={m: mse_trials[m].mean(axis=0) for m in modes},
        mse_trials=mse_trials,
        sample_mse={m: sample_trials[m].mean(axis=0) for m in modes},
        sample_mse_trials=sample_trials,
        energy=energy,
        energy_max=energy_max,
        lemma1_decrease=None if ld is None else ld.mean(axis=0),
        lemma1_bound=None if lb is None else lb.mean(axis=0),
        lemma1_decrease_trials=ld,
        lemma1_bound_trials=lb,
        lemma1_violations=sum(t["lemma_violations"] for t in trials),
        failures=sum(t["failures"] for t in trials),
        wall_clock=time.perf_counter() - t0,
    )


_SWEEP_FIELDS = {
    "snr.obs_db": "snr_obs_db",
    "snr.collab_db": "snr_collab_db",
    "snr.fc_db": "snr_fc_db",
    "dims.p": "P",
    "dims.l": "L",
    "dims.n": "N",
    "dims.m": "M",
    "dims.s": "S",
    "topology.r0": "topology_r0",
    "budget.mu": "budget",
    "run.horizon": "horizon",
}


def sweep(config: ScenarioConfig) -> list[RunResult]:
    """One run per sweep value, same master seed everywhere (common random
    numbers across sweep points)."""
    if not config.sweep_parameter or not config.sweep_values:
        raise ModelError("config carries no sweep specification")
    key = config.sweep_parameter
    if key not in _SWEEP_FIELDS:
        raise ModelError(f"unknown sweep parameter {key!r}; "
                         f"expected one of {sorted(_SWEEP_FIELDS)}")
    attr = _SWEEP_FIELDS[key]
    results = []
    for value in config.sweep_values:
        v = value
        if attr in ("P", "L", "N", "M", "S", "horizon"):
            v = int(value)
        sub = replace(config, sweep_parameter=None, sweep_values=None,
                      **{attr: v})
        results.append(run_scenario(sub))
    return results


# ---------------------------------------------------------------------------
# Config file format (flat `key = value` lines, dotted keys)
# ---------------------------------------------------------------------------

_CONFIG_KEYS = {
    "dims.p": ("P", int),
    "dims.l": ("L", int),
    "dims.n": ("N", int),
    "dims.m": ("M", int),
    "dims.s": ("S", int),
    "snr.obs_db": ("snr_obs_db", float),
    "snr.collab_db": ("snr_collab_db", float),
    "snr.fc_db": ("snr_fc_db", float),
    "topology.kind": ("topology_kind", str),
    "topology.r0": ("topology_r0", float),
    "topology.seed": ("topology_seed", int),
    "topology.matrix": ("topology_matrix", "matrix"),
    "budget.mu": ("budget", "vector"),
    "run.horizon": ("horizon", int),
    "run.rho_centralized": ("rho_centralized", int),
    "run.rho_decentralized": ("rho_decentralized", int),
    "run.trials": ("trials", int),
    "run.seed": ("seed", int),
    "run.mode": ("mode", str),
    "run.workers": ("workers", int),
    "run.tv_design": ("tv_design", str),
    "state.transition": ("transition", "matrix"),
    "state.noise_cov": ("state_noise_cov", "matrix"),
    "sweep.parameter": ("sweep_parameter", str),
    "sweep.values": ("sweep_values", "values"),
}


def _parse_matrix(text: str):
    rows = [r.strip() for r in text.split(";") if r.strip()]
    return np.array([[float(x) for x in r.split()] for r in rows])


def _parse_value(kind, text: str):
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    if kind is str:
        return text
    if kind == "vector":
        parts = [p for p in text.replace(",", " ").split() if p]
        vals = [float(p) for p in parts]
        return vals[0] if len(vals) == 1 else np.array(vals)
    if kind == "values":
        return tuple(float(p) for p in text.replace(",", " ").split() if p)
    if kind == "matrix":
        return _parse_matrix(text)
    raise AssertionError(kind)


def parse_config(text: str) -> ScenarioConfig:
    """Parse the flat `key = value` scenario format (# starts a comment)."""
    kwargs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ModelError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "run.rho":                          # shorthand for both
            kwargs["rho_centralized"] = int(val)
            kwargs["rho_decentralized"] = int(val)
            continue
        if key not in _CONFIG_KEYS:
            raise ModelError(f"config line {lineno}: unknown key {key!r}")
        attr, kind = _CONFIG_KEYS[key]
        kwargs[attr] = _parse_value(kind, val)
    return ScenarioConfig(**kwargs)


def load_config(path) -> ScenarioConfig:
    return parse_config(Path(path).read_text())


def _format_value(kind, value) -> str:
    if kind == "matrix":
        arr = np.atleast_2d(np.asarray(value, dtype=float))
        return " ; ".join(" ".join(repr(float(x)) for x in row) for row in arr)
    if kind == "vector":
        arr = np.atleast_1d(np.asarray(value, dtype=float))
        return ", ".join(repr(float(x)) for x in arr)
    if kind == "values":
        return ", ".join(repr(float(x)) for x in value)
    return str(value)


def format_config(config: ScenarioConfig) -> str:
    """Inverse of parse_config (round-trips every set field)."""
    by_attr = {attr: (key, kind) for key, (attr, kind) in _CONFIG_KEYS.items()}
    lines = []
    for f in fields(config):
        value = getattr(config, f.name)
        if value is None or f.name not in by_attr:
            continue
        key, kind = by_attr[f.name]
        lines.append(f"{key} = {_format_value(kind, value)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Result emission
# ---------------------------------------------------------------------------

def emit_results(result: RunResult, outdir, name: str = "run") -> list[Path]:
    """Write the per-step table and a config echo.

    Columns: k, analytic and sample MSE per mode, per-sensor expected energy
    of the primary designed mode, and the monotonicity diagnostics.  Floats
    carry 17 significant digits so a parse-back reproduces them exactly."""
    outdir = Path(outdir)
    if not outdir.is_dir():
        raise FileNotFoundError(f"output directory does not exist: {outdir}")
    cfg = result.config
    N = cfg.N
    cols = ["k", "mse_centralized", "mse_decentralized", "mse_benchmark",
            "sample_mse_centralized", "sample_mse_decentralized",
            "sample_mse_benchmark"]
    cols += [f"energy_sensor_{i + 1}" for i in range(N)]
    cols += ["lemma1_bound", "lemma1_decrease"]

    designed = cfg.designed_modes()
    energy_mode = "centralized" if "centralized" in designed else (
        designed[0] if designed else None)
    K = result.ks.shape[0]
    nan_col = np.full(K, np.nan)

    def curve(table, mode):
        return table.get(mode, nan_col)

    columns = [result.ks.astype(float),
               curve(result.mse, "centralized"),
               curve(result.mse, "decentralized"),
               curve(result.mse, "benchmark"),
               curve(result.sample_mse, "centralized"),
               curve(result.sample_mse, "decentralized"),
               curve(result.sample_mse, "benchmark")]
    energy = result.energy.get(energy_mode) if energy_mode else None
    for i in range(N):
        columns.append(energy[:, i] if energy is not None else nan_col)
    columns.append(result.lemma1_bound if result.lemma1_bound is not None else nan_col)
    columns.append(result.lemma1_decrease if result.lemma1_decrease is not None else nan_col)

    table_path = outdir / f"{name}.csv"
    with open(table_path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for r in range(K):
            cells = [str(int(result.ks[r]))]
            cells += [f"{col[r]:.16e}" for col in columns[1:]]
            fh.write(",".join(cells) + "\n")

    echo_path = outdir / f"{name}.config.txt"
    echo_path.write_text(format_config(cfg))
    return [table_path, echo_path]
