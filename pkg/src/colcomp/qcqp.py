"""Quadratic solvers for the collaboration/compression design problems.

Two solvers live here:

* a convex multi-constraint QCQP solver (log-barrier Newton with
  backtracking line search) for problems of the form

      minimize    x^T Om0 x - 2 d^T x + eta0
      subject to  x^T Om_i x + eta_i <= mu_i,   i = 1..m

  with Om0 and every Om_i symmetric positive definite and x = 0 strictly
  feasible (eta_i < mu_i);

* a single-equality indefinite QCQP solver for

      minimize    t^T Om1 t - 2 ell^T t
      subject to  t^T Om2 t = 0

  with Om1 positive definite and Om2 symmetric (indefinite allowed), solved
  by simultaneous whitening of the pair and a secular-equation bisection on
  the multiplier, with a boundary KKT branch for the singular case.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import is_symmetric, solve_psd, sym

# Barrier schedule (fixed): start t = 1, multiply by 10 each outer round,
# stop once m / t < BARRIER_GAP.  Armijo backtracking with c = 1e-4, halving.
BARRIER_GAP = 1e-9
ARMIJO_C = 1e-4
MAX_INNER = 60


class InfeasibleStartError(ValueError):
    """x = 0 is not strictly feasible (some eta_i >= mu_i)."""


class WhiteningError(np.linalg.LinAlgError):
    """Simultaneous whitening failed its internal verification."""


@dataclass
class ConvexQcqp:
    """Convex QCQP data.  Constraint i reads x^T Om[i] x + eta[i] <= mu[i]."""

    Omega0: np.ndarray          # (n, n) symmetric PD
    d: np.ndarray               # (n,)
    eta0: float
    Omegas: np.ndarray          # (m, n, n) symmetric PD each
    etas: np.ndarray            # (m,)
    mus: np.ndarray             # (m,)

    def __post_init__(self):
        self.Omega0 = np.asarray(self.Omega0, dtype=float)
        self.d = np.asarray(self.d, dtype=float)
        n = self.d.shape[0]
        self.Omegas = np.asarray(self.Omegas, dtype=float).reshape(-1, n, n)
        self.etas = np.atleast_1d(np.asarray(self.etas, dtype=float))
        self.mus = np.atleast_1d(np.asarray(self.mus, dtype=float))
        bad = self.etas >= self.mus
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise InfeasibleStartError(
                f"constraint {i}: offset {self.etas[i]:.6e} >= budget "
                f"{self.mus[i]:.6e}; x = 0 is not strictly feasible"
            )

    @property
    def n(self) -> int:
        return self.d.shape[0]

    @property
    def m(self) -> int:
        return self.Omegas.shape[0]

    def objective(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.Omega0 @ x - 2.0 * self.d @ x + self.eta0)

    def constraint_values(self, x: np.ndarray) -> np.ndarray:
        """Left-hand sides x^T Om_i x + eta_i."""
        x = np.asarray(x, dtype=float)
        if self.m == 0:
            return np.zeros(0)
        return np.einsum("mij,i,j->m", self.Omegas, x, x) + self.etas

    def validate(self) -> None:
        """Full invariant check (symmetry and positive definiteness)."""
        if not is_symmetric(self.Omega0):
            raise ValueError("Omega0 is not symmetric")
        if np.linalg.eigvalsh(self.Omega0)[0] <= 0:
            raise ValueError("Omega0 is not positive definite")
        for i in range(self.m):
            if not is_symmetric(self.Omegas[i]):
                raise ValueError(f"constraint matrix {i} is not symmetric")
            if np.linalg.eigvalsh(self.Omegas[i])[0] <= 0:
                raise ValueError(f"constraint matrix {i} is not positive definite")


@dataclass(frozen=True)
class QcqpSolution:
    x: np.ndarray
    objective: float
    status: str                 # "optimal" | "max-iterations"
    newton_iters: int
    kkt_residual: float
    multipliers: np.ndarray


def _centering(x, t, Om0, d, Om, slack0, inner_tol=1e-11):
    """Newton minimization of t*(x'Om0 x - 2d'x) - sum log(slack)."""
    n = x.shape[0]
    m = slack0.shape[0]
    Ox = Om @ x                                   # (m, n)
    vals = Ox @ x
    s = slack0 - vals
    f = t * (x @ (Om0 @ x) - 2.0 * (d @ x)) - np.log(s).sum()
    iters = 0
    converged = False
    for _ in range(MAX_INNER):
        iters += 1
        g0 = 2.0 * (Om0 @ x - d)
        Rs = Ox / s[:, None]                      # (m, n)
        grad = t * g0 + 2.0 * Rs.sum(axis=0)
        hess = 2.0 * t * Om0 + 2.0 * np.tensordot(1.0 / s, Om, axes=1) \
            + 4.0 * Rs.T @ Rs
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            hess = hess + (1e-12 * np.trace(hess) / n) * np.eye(n)
            step = -np.linalg.solve(hess, grad)
        lam2 = float(-grad @ step)
        if lam2 <= 2.0 * inner_tol:
            converged = True
            break
        if lam2 <= 0.0625:
            # Quadratic-convergence region of the self-concordant barrier:
            # take full Newton steps (the Armijo test would drown in the
            # floating-point noise of t * f0 at large t), only backing off
            # if a step leaves the interior.
            alpha = 1.0
            while alpha > 1e-14:
                xn = x + alpha * step
                Oxn = Om @ xn
                sn = slack0 - Oxn @ xn
                if (sn > 0).all():
                    break
                alpha *= 0.5
            if alpha <= 1e-14:
                break
            fn = t * (xn @ (Om0 @ xn) - 2.0 * (d @ xn)) - np.log(sn).sum()
        else:
            slope = float(grad @ step)
            alpha = 1.0
            while True:
                xn = x + alpha * step
                Oxn = Om @ xn
                sn = slack0 - Oxn @ xn
                if (sn > 0).all():
                    fn = t * (xn @ (Om0 @ xn) - 2.0 * (d @ xn)) - np.log(sn).sum()
                    if fn <= f + ARMIJO_C * alpha * slope:
                        break
                alpha *= 0.5
                if alpha < 1e-14:
                    xn, Oxn, sn, fn = x, Ox, s, f     # stalled; keep iterate
                    break
            if alpha < 1e-14:
                break
        x, Ox, s, f = xn, Oxn, sn, fn
    return x, s, iters, converged


def solve_convex_qcqp(problem: ConvexQcqp, tol: float = 1e-8) -> QcqpSolution:
    """Solve a convex QCQP by the log-barrier method from the strictly
    feasible start x = 0.

    Returns the interior-point solution with its KKT stationarity residual
    and barrier multipliers.  Status "max-iterations" marks a centering that
    hit its Newton cap; the returned iterate is still feasible.
    """
    Om0, d = problem.Omega0, problem.d
    n, m = problem.n, problem.m
    if m == 0:
        x = solve_psd(Om0, d)
        return QcqpSolution(x=x, objective=problem.objective(x), status="optimal",
                            newton_iters=0, kkt_residual=0.0,
                            multipliers=np.zeros(0))
    Om = problem.Omegas
    slack0 = problem.mus - problem.etas
    x = np.zeros(n)
    t = 1.0
    total_iters = 0
    all_converged = True
    while True:
        final = m / t < BARRIER_GAP
        # Intermediate centerings only need to track the central path; the
        # final one is polished to full accuracy.
        x, s, iters, converged = _centering(
            x, t, Om0, d, Om, slack0,
            inner_tol=1e-11 if final else 1e-5,
        )
        total_iters += iters
        if final:
            all_converged = all_converged and converged
            break
        t *= 10.0
    lam = 1.0 / (t * s)
    grad = 2.0 * (Om0 @ x - d) + 2.0 * np.tensordot(lam, Om @ x, axes=1)
    scale = max(np.linalg.norm(d), np.abs(Om0).max() * max(np.linalg.norm(x), 1.0), 1e-300)
    kkt = float(np.linalg.norm(grad)) / scale
    return QcqpSolution(
        x=x,
        objective=problem.objective(x),
        status="optimal" if all_converged else "max-iterations",
        newton_iters=total_iters,
        kkt_residual=kkt,
        multipliers=lam,
    )


# ---------------------------------------------------------------------------
# Single-equality indefinite QCQP
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SingleEqualityQcqp:
    """minimize t' Om1 t - 2 ell' t  subject to  t' Om2 t = 0."""

    Omega1: np.ndarray
    Omega2: np.ndarray
    ell: np.ndarray


@dataclass(frozen=True)
class WhitenedPair:
    """Whitening transform: Mmat Om1 Mmat' = I and Mmat Om2 Mmat' = diag(sigma),
    with sigma sorted descending."""

    Mmat: np.ndarray
    sigma: np.ndarray


@dataclass(frozen=True)
class SingleEqualitySolution:
    t: np.ndarray | None
    beta: float
    case: str                  # "unconstrained" | "interior-root" | "boundary-kkt" | "none"
    status: str                # "optimal" | "no-stationary-point"
    objective: float
    constraint_residual: float
    stationarity_residual: float


def whiten_pair(Omega1: np.ndarray, Omega2: np.ndarray,
                verify_rtol: float = 1e-10) -> WhitenedPair:
    """Simultaneously whiten a PD/symmetric pair.

    Both identities are verified to `verify_rtol` relative error before
    returning; failure (e.g. numerically singular Omega1) raises
    WhiteningError.
    """
    Omega1 = sym(np.asarray(Omega1, dtype=float))
    Omega2 = sym(np.asarray(Omega2, dtype=float))
    delta, U1 = np.linalg.eigh(Omega1)
    if delta[0] <= 0 or delta[0] < 1e-14 * delta[-1]:
        raise WhiteningError(
            f"Omega1 numerically singular: eigenvalue range [{delta[0]:.3e}, {delta[-1]:.3e}]"
        )
    S = (U1 * (delta ** -0.5)) @ U1.T              # symmetric inverse sqrt
    sigma, U2 = np.linalg.eigh(sym(S @ Omega2 @ S))
    order = np.argsort(sigma)[::-1]
    sigma = sigma[order]
    Mmat = U2[:, order].T @ S

    eye_err = np.abs(Mmat @ Omega1 @ Mmat.T - np.eye(len(sigma))).max()
    diag_err = np.abs(Mmat @ Omega2 @ Mmat.T - np.diag(sigma)).max()
    scale2 = max(np.abs(sigma).max(initial=0.0), 1e-300)
    if eye_err > verify_rtol or diag_err > verify_rtol * max(scale2, 1.0):
        raise WhiteningError(
            f"whitening verification failed (identity error {eye_err:.3e}, "
            f"diagonalization error {diag_err:.3e})"
        )
    return WhitenedPair(Mmat=Mmat, sigma=sigma)


def secular_function(beta: float, sigma: np.ndarray, m: np.ndarray) -> float:
    """sum_i sigma_i m_i^2 / (1 + beta sigma_i)^2; strictly decreasing in beta
    wherever 1 + beta sigma_i > 0 for all i."""
    sigma = np.asarray(sigma, dtype=float)
    m = np.asarray(m, dtype=float)
    den = 1.0 + beta * sigma
    if np.any(den == 0.0):
        raise ZeroDivisionError(f"secular function pole at beta = {beta}")
    return float(np.sum(sigma * m * m / (den * den)))


def _secular_derivative(beta: float, sigma: np.ndarray, m: np.ndarray) -> float:
    den = 1.0 + beta * sigma
    return float(-2.0 * np.sum(sigma * sigma * m * m / (den * den * den)))


def _bracket_root(phi, beta0, endpoint, pole_rtol=1e-9):
    """March from beta0 geometrically toward a finite endpoint until the
    secular function changes sign.  Returns a bracket or None."""
    f0 = phi(beta0)
    gap = endpoint - beta0
    lo, flo = beta0, f0
    for _ in range(200):
        gap *= 0.5
        b = endpoint - gap
        fb = phi(b)
        if fb == 0.0:
            return (b, b)
        if np.sign(fb) != np.sign(flo):
            return (lo, b) if lo < b else (b, lo)
        lo, flo = b, fb
        if abs(gap) <= pole_rtol * max(1.0, abs(endpoint)):
            return None
    return None


def _bisect(phi, a, b, max_iter=200, width=1e-12):
    fa = phi(a)
    if fa == 0.0:
        return a
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        if b - a <= max(width, 1e-15 * max(abs(a), abs(b))):
            return mid
        fm = phi(mid)
        if fm == 0.0:
            return mid
        if np.sign(fm) == np.sign(fa):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)


def solve_single_equality_qcqp(problem: SingleEqualityQcqp,
                               tol: float = 1e-10) -> SingleEqualitySolution:
    """Whitening + secular-equation solution of the single-equality QCQP.

    Case one finds the interior multiplier root by bracketed bisection with a
    Newton polish; case two solves the boundary KKT system, choosing the free
    null-space components to zero the constraint.  When the eigenvalues of
    the constraint matrix are one-signed and no stationary point exists the
    status "no-stationary-point" is reported.
    """
    Om1 = np.asarray(problem.Omega1, dtype=float)
    Om2 = sym(np.asarray(problem.Omega2, dtype=float))
    ell = np.asarray(problem.ell, dtype=float)

    def _finish(t, beta, case, status):
        if t is None:
            return SingleEqualitySolution(None, beta, case, status,
                                          np.inf, np.inf, np.inf)
        obj = float(t @ Om1 @ t - 2.0 * ell @ t)
        cres = abs(float(t @ Om2 @ t))
        sres = np.linalg.norm((Om1 + beta * Om2) @ t - ell) \
            / max(np.linalg.norm(ell), 1e-300)
        return SingleEqualitySolution(t, beta, case, status, obj, cres, sres)

    if np.abs(Om2).max(initial=0.0) == 0.0:
        t = solve_psd(Om1, ell)
        return _finish(t, 0.0, "unconstrained", "optimal")

    wp = whiten_pair(Om1, Om2)
    sigma = wp.sigma.copy()
    m = wp.Mmat @ ell
    smax = np.abs(sigma).max()
    sigma[np.abs(sigma) < 1e-12 * smax] = 0.0     # drop numerically zero modes
    if np.abs(sigma).max(initial=0.0) == 0.0:
        t = solve_psd(Om1, ell)
        return _finish(t, 0.0, "unconstrained", "optimal")

    def phi(beta):
        return secular_function(beta, sigma, m)

    def pull_back(r, beta, case):
        t = wp.Mmat.T @ r
        return _finish(t, beta, case, "optimal")

    has_pos = (sigma > 0).any()
    has_neg = (sigma < 0).any()
    lo = -1.0 / sigma.max() if has_pos else -np.inf
    hi = -1.0 / sigma.min() if has_neg else np.inf

    phi0 = phi(0.0)
    if phi0 == 0.0:
        return pull_back(m.copy(), 0.0, "interior-root")

    bracket = None
    if phi0 > 0 and np.isfinite(hi):
        bracket = _bracket_root(phi, 0.0, hi)
    elif phi0 < 0 and np.isfinite(lo):
        bracket = _bracket_root(phi, 0.0, lo)

    if bracket is not None:
        a, b = bracket
        beta = _bisect(phi, a, b) if a != b else a
        # Newton polish inside the PD interval
        for _ in range(8):
            der = _secular_derivative(beta, sigma, m)
            if der == 0.0:
                break
            step = -phi(beta) / der
            cand = beta + step
            if not (lo < cand < hi):
                break
            beta = cand
            if abs(step) <= 1e-15 * max(1.0, abs(beta)):
                break
        r = m / (1.0 + beta * sigma)
        return pull_back(r, beta, "interior-root")

    # Case two: boundary multiplier with singular I + beta Sigma2.
    candidates = []
    if has_pos:
        candidates.append((-1.0 / sigma.max(), sigma.max()))
    if has_neg:
        candidates.append((-1.0 / sigma.min(), sigma.min()))
    best = None
    mnorm2 = float(m @ m)
    for beta, sig_b in candidates:
        null = np.abs(sigma - sig_b) <= 1e-12 * smax
        if float(m[null] @ m[null]) > tol * max(mnorm2, 1e-300):
            continue                               # KKT system unsolvable
        den = 1.0 + beta * sigma
        r = np.zeros_like(m)
        live = ~null
        r[live] = m[live] / den[live]
        resid = float(np.sum(sigma[live] * r[live] ** 2))
        q2 = -resid / sig_b
        if q2 < -tol * max(mnorm2, 1e-300):
            continue                               # cannot zero the constraint
        free = np.flatnonzero(null)[0]
        r[free] = np.sqrt(max(q2, 0.0))
        obj = float(r @ r - 2.0 * m @ r)
        if best is None or obj < best[0]:
            best = (obj, r, beta)
    if best is not None:
        _, r, beta = best
        return pull_back(r, beta, "boundary-kkt")

    return SingleEqualitySolution(None, np.nan, "none", "no-stationary-point",
                                  np.inf, np.inf, np.inf)
