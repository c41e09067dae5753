"""System model for collaborative, compressed sequential estimation.

Holds the domain types describing the sensing setup (dimensions, collaboration
topology, signal/noise statistics, per-sensor energy budgets), reproducible
random realizations of a scenario, and the expected per-sensor energy cost of
collaboration and of transmitting compressed observations.

Conventions: sensors are indexed 0..N-1; the communicating subset is always
sensors 0..M-1 (inputs with a different communicating subset must be permuted
before entry).  Covariance matrices are symmetric positive definite.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from ._linalg import is_symmetric, min_eigval, sym


class ModelError(ValueError):
    """Invalid model data (shape mismatch, non-PD covariance, bad topology)."""


class TopologyError(ModelError):
    """Topology matrix violates the adjacency invariants."""


def snr_db_to_variance(snr_db: float) -> float:
    """Per-component noise variance for a linear SNR of 10**(snr_db/10)."""
    return 10.0 ** (-snr_db / 10.0)


@dataclass(frozen=True)
class Dimensions:
    """Problem sizes: parameter length P, per-sensor observation length L,
    total sensors N, communicating sensors M, fusion-center antennas S."""

    P: int
    L: int
    N: int
    M: int
    S: int

    def __post_init__(self):
        for name in ("P", "L", "N", "M", "S"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ModelError(f"dimension {name} must be a positive integer, got {v!r}")
        if self.M > self.N:
            raise ModelError(f"M={self.M} exceeds N={self.N}")

    @property
    def NL(self) -> int:
        return self.N * self.L

    @property
    def ML(self) -> int:
        return self.M * self.L


@dataclass
class Topology:
    """Binary adjacency A (M x N).

    A[i, j] = 1 means sensor j's observation may be weighted into the
    post-collaboration signal of communicating sensor i.  Self links
    A[i, i] = 1 are mandatory for i < M.
    """

    A: np.ndarray
    positions: np.ndarray | None = None  # (N, 2) when geometric, else None

    def __post_init__(self):
        A = np.asarray(self.A)
        if A.ndim != 2:
            raise TopologyError(f"adjacency must be 2-D, got shape {A.shape}")
        if not np.isin(A, (0, 1)).all():
            raise TopologyError("adjacency entries must be 0 or 1")
        M, N = A.shape
        if M > N:
            raise TopologyError(f"adjacency has M={M} rows > N={N} columns")
        diag = A[np.arange(M), np.arange(M)]
        if not (diag == 1).all():
            bad = int(np.flatnonzero(diag != 1)[0])
            raise TopologyError(f"self link A[{bad},{bad}] must be 1")
        A = A.astype(np.int8)
        A.setflags(write=False)
        self.A = A

    @property
    def M(self) -> int:
        return self.A.shape[0]

    @property
    def N(self) -> int:
        return self.A.shape[1]

    @cached_property
    def offdiag_mask(self) -> np.ndarray:
        """1_M 1_N^T minus [I_M, 0]: zeroes the self-weight positions, which
        carry no inter-sensor transmission cost."""
        mask = np.ones((self.M, self.N))
        mask[np.arange(self.M), np.arange(self.M)] = 0.0
        mask.setflags(write=False)
        return mask

    @cached_property
    def neighbor_sets(self) -> tuple[frozenset, ...]:
        """Neighbors of each communicating sensor (excluding itself)."""
        return tuple(
            frozenset(int(j) for j in np.flatnonzero(self.A[i]) if j != i)
            for i in range(self.M)
        )

    @classmethod
    def full(cls, M: int, N: int) -> "Topology":
        return cls(np.ones((M, N), dtype=np.int8))

    def check_weights(self, W: np.ndarray) -> None:
        """Raise if W has a nonzero entry where the adjacency is zero."""
        W = np.asarray(W, dtype=float)
        if W.shape != self.A.shape:
            raise TopologyError(
                f"weight matrix shape {W.shape} does not match adjacency {self.A.shape}"
            )
        off = W[self.A == 0]
        if off.size and np.abs(off).max() != 0.0:
            raise TopologyError("weight matrix has nonzero entries outside the topology")


@dataclass(frozen=True)
class EnergyBudget:
    """Per-sensor expected-energy caps (energy units per time step)."""

    mu: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if mu.ndim != 1:
            raise ModelError("budget must be a 1-D vector")
        if not (mu > 0).all():
            raise ModelError("all energy budgets must be strictly positive")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @classmethod
    def uniform(cls, N: int, value: float) -> "EnergyBudget":
        return cls(np.full(N, float(value)))


@dataclass
class SignalModel:
    """Prior, channel and noise description at one time step.

    H and G are the current step's observation and sensor-to-FC channel
    matrices; they may be left unset (None) when the instance only carries
    statistics, and bound later with :meth:`with_channels`.
    """

    dims: Dimensions
    x0: np.ndarray                                # (P,) prior mean
    R_x: np.ndarray                               # (P, P) prior covariance
    R_v_blocks: np.ndarray                        # (N, L, L) observation noise
    R_alpha_blocks: np.ndarray                    # (M, L, L) collaboration noise
    R_eps: np.ndarray                             # (S, S) FC noise
    H: np.ndarray | None = None                   # (N*L, P)
    G: np.ndarray | None = None                   # (S, M)

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        self.R_x = np.asarray(self.R_x, dtype=float)
        self.R_v_blocks = np.asarray(self.R_v_blocks, dtype=float)
        self.R_alpha_blocks = np.asarray(self.R_alpha_blocks, dtype=float)
        self.R_eps = np.asarray(self.R_eps, dtype=float)
        if self.H is not None:
            self.H = np.asarray(self.H, dtype=float)
        if self.G is not None:
            self.G = np.asarray(self.G, dtype=float)

    @classmethod
    def isotropic(
        cls,
        dims: Dimensions,
        snr_obs_db: float,
        snr_collab_db: float,
        snr_fc_db: float,
        x0: np.ndarray | None = None,
        R_x: np.ndarray | None = None,
    ) -> "SignalModel":
        """Zero-mean unit-covariance prior with isotropic noises at the given
        SNRs (dB converted to variances once, here)."""
        s_v = snr_db_to_variance(snr_obs_db)
        s_a = snr_db_to_variance(snr_collab_db)
        s_e = snr_db_to_variance(snr_fc_db)
        return cls(
            dims=dims,
            x0=np.zeros(dims.P) if x0 is None else x0,
            R_x=np.eye(dims.P) if R_x is None else R_x,
            R_v_blocks=np.tile(s_v * np.eye(dims.L), (dims.N, 1, 1)),
            R_alpha_blocks=np.tile(s_a * np.eye(dims.L), (dims.M, 1, 1)),
            R_eps=s_e * np.eye(dims.S),
        )

    def with_channels(self, H: np.ndarray, G: np.ndarray) -> "SignalModel":
        """New model bound to this step's channel draws."""
        return replace(self, H=np.asarray(H, float), G=np.asarray(G, float))

    # Aggregates (lazy, computed once per bound step).

    @cached_property
    def R_v(self) -> np.ndarray:
        """Block-diagonal NL x NL observation-noise covariance."""
        d = self.dims
        out = np.zeros((d.NL, d.NL))
        for i in range(d.N):
            out[i * d.L:(i + 1) * d.L, i * d.L:(i + 1) * d.L] = self.R_v_blocks[i]
        return out

    @cached_property
    def R_alpha(self) -> np.ndarray:
        """Block-diagonal ML x ML collaboration-noise covariance."""
        d = self.dims
        out = np.zeros((d.ML, d.ML))
        for i in range(d.M):
            out[i * d.L:(i + 1) * d.L, i * d.L:(i + 1) * d.L] = self.R_alpha_blocks[i]
        return out

    @cached_property
    def R_y(self) -> np.ndarray:
        """Second moment of the stacked observations, H R_x H^T + R_v."""
        if self.H is None:
            raise ModelError("R_y requires bound channel matrices (H is None)")
        return self.H @ self.R_x @ self.H.T + self.R_v

    def H_block(self, i: int) -> np.ndarray:
        L = self.dims.L
        return self.H[i * L:(i + 1) * L]

    def tr_R_yi(self, i: int) -> float:
        """trace(H_i R_x H_i^T + R_{v_i}) for sensor i."""
        Hi = self.H_block(i)
        return float(np.sum((Hi @ self.R_x) * Hi) + np.trace(self.R_v_blocks[i]))


def validate_model(model: SignalModel, dims: Dimensions | None = None,
                   topo: Topology | None = None) -> SignalModel:
    """Check all shape and positive-definiteness invariants.

    Returns the model unchanged on success.  Raises ModelError naming the
    offending matrix and its minimum eigenvalue otherwise.
    """
    d = dims or model.dims
    if dims is not None and model.dims != dims:
        raise ModelError(f"model dims {model.dims} do not match expected {dims}")
    if topo is not None and (topo.M != d.M or topo.N != d.N):
        raise TopologyError(
            f"topology shape ({topo.M},{topo.N}) does not match dims (M={d.M}, N={d.N})"
        )

    shapes = {
        "x0": (model.x0, (d.P,)),
        "R_x": (model.R_x, (d.P, d.P)),
        "R_v_blocks": (model.R_v_blocks, (d.N, d.L, d.L)),
        "R_alpha_blocks": (model.R_alpha_blocks, (d.M, d.L, d.L)),
        "R_eps": (model.R_eps, (d.S, d.S)),
    }
    if model.H is not None:
        shapes["H"] = (model.H, (d.NL, d.P))
    if model.G is not None:
        shapes["G"] = (model.G, (d.S, d.M))
    for name, (arr, want) in shapes.items():
        if arr.shape != want:
            raise ModelError(f"{name} has shape {arr.shape}, expected {want}")

    def _check_pd(mat: np.ndarray, name: str) -> None:
        if not is_symmetric(mat):
            raise ModelError(f"{name} is not symmetric")
        lo = min_eigval(mat)
        floor = 1e-12 * float(np.trace(mat)) / mat.shape[0]
        if not lo > floor:
            raise ModelError(
                f"{name} is not positive definite: min eigenvalue {lo:.6e} "
                f"(floor {floor:.6e})"
            )

    _check_pd(model.R_x, "R_x")
    _check_pd(model.R_eps, "R_eps")
    for i in range(d.N):
        _check_pd(model.R_v_blocks[i], f"R_v[{i}]")
    for i in range(d.M):
        _check_pd(model.R_alpha_blocks[i], f"R_alpha[{i}]")

    if model.H is not None:
        ry = model.R_y
        lo = min_eigval(ry)
        if lo < -1e-10 * np.linalg.norm(ry):
            raise ModelError(f"R_y is not PSD: min eigenvalue {lo:.6e}")
    return model


# ---------------------------------------------------------------------------
# Expected energy costs
# ---------------------------------------------------------------------------

def expected_collab_cost(i: int, W: np.ndarray, model: SignalModel,
                         topo: Topology) -> float:
    """Expected energy sensor i spends sharing its observation with neighbors.

    tr(R_{y_i}) * e_i^T (W o Itilde)^T (W o Itilde) e_i, where the mask
    exempts self weights.  Defined for every sensor i in [0, N).
    """
    d = model.dims
    if not 0 <= i < d.N:
        raise IndexError(f"sensor index {i} out of range [0, {d.N})")
    topo.check_weights(W)
    col = (np.asarray(W, float) * topo.offdiag_mask)[:, i]
    return model.tr_R_yi(i) * float(col @ col)


def compression_quadratic(i: int, W: np.ndarray, model: SignalModel) -> np.ndarray:
    """L x L matrix Q_i with compressed-transmission energy f_i^T Q_i f_i:
    Q_i = W_i R_y W_i^T + R_{alpha_i}, W_i = (e_i^T W) kron I_L."""
    d = model.dims
    Wi = np.kron(np.asarray(W, float)[i:i + 1, :], np.eye(d.L))
    return Wi @ model.R_y @ Wi.T + model.R_alpha_blocks[i]


def expected_compress_cost(i: int, f_i: np.ndarray, W: np.ndarray,
                           model: SignalModel) -> float:
    """Expected energy sensor i spends transmitting its compressed
    post-collaboration observation to the fusion center."""
    d = model.dims
    if not 0 <= i < d.M:
        raise IndexError(f"compressing sensor index {i} out of range [0, {d.M})")
    f = np.asarray(f_i, dtype=float)
    if f.shape != (d.L,):
        raise ModelError(f"f_i has shape {f.shape}, expected ({d.L},)")
    return float(f @ compression_quadratic(i, W, model) @ f)


def total_cost(i: int, W: np.ndarray, F_rows: np.ndarray, model: SignalModel,
               topo: Topology) -> float:
    """Overall expected energy at sensor i: collaboration plus, for
    communicating sensors, compressed transmission.  F_rows is (M, L) with
    row i holding f_i."""
    c = expected_collab_cost(i, W, model, topo)
    if i < model.dims.M:
        c += expected_compress_cost(i, np.asarray(F_rows, float)[i], W, model)
    return c


# ---------------------------------------------------------------------------
# Scenario realizations
# ---------------------------------------------------------------------------

@dataclass
class Realization:
    """One random draw of a scenario over `horizon` steps.

    x is the (horizon+1, P) parameter trajectory; row 0 is the initial draw
    and all rows coincide when no state transition is configured.  Channel
    and noise arrays are indexed by step k-1 for k = 1..horizon.
    """

    seed: object
    x: np.ndarray          # (K+1, P)
    H: np.ndarray          # (K, NL, P)
    G: np.ndarray          # (K, S, M)
    v: np.ndarray          # (K, NL)
    alpha: np.ndarray      # (K, ML)
    eps: np.ndarray        # (K, S)

    @property
    def horizon(self) -> int:
        return self.H.shape[0]

    def model_at(self, k: int, base: SignalModel) -> SignalModel:
        """Model bound to the channel draws of step k (1-based)."""
        return base.with_channels(self.H[k - 1], self.G[k - 1])


def _chol_or_zero(cov: np.ndarray) -> np.ndarray:
    if np.abs(cov).max(initial=0.0) == 0.0:
        return np.zeros_like(cov)
    return np.linalg.cholesky(cov)


def draw_realization(
    model: SignalModel,
    horizon: int,
    seed: int,
    transition: tuple[np.ndarray, np.ndarray] | None = None,
) -> Realization:
    """Draw a reproducible realization of the scenario.

    Channel matrices have i.i.d. standard normal entries redrawn each step;
    noises are zero mean with the model's covariances.  `transition`
    optionally gives (A_s, R_ns) for a first-order Gauss-Markov parameter
    trajectory; omitted, the parameter stays at its initial draw.

    Independent child streams (from numpy's SeedSequence spawn) feed each
    component, so changing one component's usage cannot desynchronize the
    rest, and parallel trials can split seeds safely.
    """
    d = model.dims
    K = int(horizon)
    if K < 1:
        raise ModelError(f"horizon must be >= 1, got {horizon}")
    ss = seed if isinstance(seed, np.random.SeedSequence) \
        else np.random.SeedSequence(seed)
    streams = [np.random.default_rng(s) for s in ss.spawn(7)]
    rng_x, rng_H, rng_G, rng_v, rng_a, rng_e, rng_s = streams

    cx = _chol_or_zero(model.R_x)
    x0 = model.x0 + cx @ rng_x.standard_normal(d.P)
    x = np.tile(x0, (K + 1, 1))
    if transition is not None:
        A_s = np.asarray(transition[0], dtype=float)
        R_ns = np.asarray(transition[1], dtype=float)
        if A_s.shape != (d.P, d.P) or R_ns.shape != (d.P, d.P):
            raise ModelError("transition matrices must be P x P")
        cs = _chol_or_zero(R_ns)
        for k in range(1, K + 1):
            x[k] = A_s @ x[k - 1] + cs @ rng_s.standard_normal(d.P)

    H = rng_H.standard_normal((K, d.NL, d.P))
    G = rng_G.standard_normal((K, d.S, d.M))

    cv = np.linalg.cholesky(model.R_v)
    ca = np.linalg.cholesky(model.R_alpha)
    ce = np.linalg.cholesky(model.R_eps)
    v = rng_v.standard_normal((K, d.NL)) @ cv.T
    alpha = rng_a.standard_normal((K, d.ML)) @ ca.T
    eps = rng_e.standard_normal((K, d.S)) @ ce.T

    return Realization(seed=seed, x=x, H=H, G=G, v=v, alpha=alpha, eps=eps)
