"""
Matrix analysis primitives and the Riccati / Lyapunov solvers.

Every steady-state quantity in cmdf reduces to one of two equations:

    DARE:  P = A P A^T + Q - A P C^T (C P C^T + R)^{-1} C P A^T
    DLE:   X = F X F^T + W

The DARE is solved by plain fixed-point iteration of the Riccati recursion
(the same recursion the filter runs), the DLE by a Kronecker linear solve for
small state dimensions and Smith doubling otherwise.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .config import tol
from .errors import (
    ConvergenceError,
    DivergenceError,
    InstabilityError,
    InvalidInputError,
    NumericalError,
    SingularityError,
)

logger = logging.getLogger(__name__)

_TINY = np.finfo(float).tiny


def as_square(M, name="matrix"):
    """Coerce ``M`` to a finite float n x n array (scalars become 1 x 1)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise InvalidInputError(f"{name} must be a non-empty square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return M


def as_observation(C, n, name="C"):
    """Coerce ``C`` to a p x n array; an empty input becomes a 0 x n matrix."""
    C = np.asarray(C, dtype=float)
    if C.size == 0:
        return np.zeros((0, n))
    if C.ndim == 1:
        C = C.reshape(1, -1)
    if C.ndim != 2 or C.shape[1] != n:
        raise InvalidInputError(f"{name} must have {n} columns, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return C


def symmetrize(X):
    return 0.5 * (X + np.swapaxes(X, -1, -2))


def norm2(M):
    """Spectral norm (largest singular value); 0 for empty matrices."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    try:
        return float(np.linalg.norm(np.atleast_2d(M), 2))
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"SVD failed: {e}") from e


def check_cov(X, name="covariance", definite=False):
    """Validate a covariance matrix and return its symmetrized copy.

    Symmetry and semidefiniteness are checked relative to ``||X||_2``; with
    ``definite=True`` the smallest eigenvalue must be strictly positive.
    """
    X = as_square(X, name)
    scale = norm2(X)
    if norm2(X - X.T) > tol("cov_sym_rtol") * scale:
        raise InvalidInputError(f"{name} is not symmetric")
    X = symmetrize(X)
    lam_min = float(np.linalg.eigvalsh(X)[0])
    if definite and lam_min <= 0.0:
        raise InvalidInputError(f"{name} must be positive definite (min eigenvalue {lam_min:.3g})")
    if lam_min < -tol("cov_psd_rtol") * scale:
        raise InvalidInputError(f"{name} must be positive semidefinite (min eigenvalue {lam_min:.3g})")
    return X


def numerical_rank(M, n=None):
    """Rank with singular values below ``n * eps * sigma_max`` treated as zero."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[0] == 0.0:
        return 0
    n = max(M.shape) if n is None else n
    return int(np.sum(sv > n * np.finfo(float).eps * sv[0]))


def spectral_radius(M):
    """max |lambda(M)|."""
    M = as_square(M)
    try:
        eigs = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"eigenvalue computation did not converge: {e}") from e
    return float(np.max(np.abs(eigs)))


def power_norm_bound(M, k):
    """Upper bound on ``||M^k||_2`` from the spectral radius and the 2-norm of ``M``.

        sqrt(n) * sum_{j=0}^{n-1} C(n-1, j) C(k, j) ||M||_2^j rho(M)^(k-j)

    with C(k, j) = 0 for j > k. Overflow saturates to +inf.
    """
    M = as_square(M)
    k = int(k)
    if k < 0:
        raise InvalidInputError(f"power k must be >= 0, got {k}")
    n = M.shape[0]
    sigma = np.float64(norm2(M))
    rho = np.float64(spectral_radius(M))

    total = np.float64(0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(min(n - 1, k) + 1):
            try:
                coeff = np.float64(float(math.comb(n - 1, j) * math.comb(k, j)))
            except OverflowError:
                coeff = np.float64(np.inf)
            total += coeff * sigma**j * rho ** (k - j)
        bound = float(np.sqrt(n) * total)

    if math.isnan(bound) or math.isinf(bound):
        logger.warning("power_norm_bound saturated to +inf (n=%d, k=%d)", n, k)
        return math.inf
    return bound


def matrix_inversion_gap(P, Q, C):
    """Relative 2-norm gap between both sides of the matrix inversion lemma.

        (P^{-1} + C^T Q^{-1} C)^{-1}  vs  P - P C^T (C P C^T + Q)^{-1} C P
    """
    P = as_square(P, "P")
    Q = as_square(Q, "Q")
    C = as_observation(C, P.shape[0])
    try:
        left = np.linalg.inv(np.linalg.inv(P) + C.T @ np.linalg.solve(Q, C))
        right = P - P @ C.T @ np.linalg.solve(C @ P @ C.T + Q, C @ P)
    except np.linalg.LinAlgError as e:
        raise SingularityError(f"matrix inversion lemma operands are singular: {e}") from e
    return norm2(left - right) / max(norm2(right), _TINY)


def information(C, R):
    """Return ``(C^T R^{-1} C, R^{-1} C)`` for a p x n ``C`` and p x p ``R``."""
    n = C.shape[1]
    if C.shape[0] == 0:
        return np.zeros((n, n)), np.zeros((0, n))
    R = np.asarray(R, dtype=float)
    if R.shape != (C.shape[0], C.shape[0]):
        raise InvalidInputError(f"R must be {C.shape[0]}x{C.shape[0]} to match C, got {R.shape}")
    try:
        weighted = np.linalg.solve(R, C)
    except np.linalg.LinAlgError as e:
        raise SingularityError(f"measurement noise covariance is singular: {e}") from e
    return symmetrize(C.T @ weighted), weighted


def information_update(P, S):
    """``(P^{-1} + S)^{-1}`` evaluated as ``(I + P S)^{-1} P``."""
    n = P.shape[0]
    try:
        return symmetrize(np.linalg.solve(np.eye(n) + P @ S, P))
    except np.linalg.LinAlgError as e:
        raise SingularityError(f"information update is singular: {e}") from e


def _riccati_step(A, C, Q, R, P, info=None):
    # information form keeps tiny-weight blocks of R (huge variances) well conditioned
    if info is None:
        info = information(C, R)[0]
    return symmetrize(A @ information_update(P, info) @ A.T + Q)


def _check_noise(R, p, name="R"):
    if p == 0:
        return np.zeros((0, 0))
    R = check_cov(R, name, definite=True)
    if R.shape != (p, p):
        raise InvalidInputError(f"{name} must be {p}x{p}, got {R.shape}")
    return R


def dare_residual(A, C, Q, R, P):
    """Relative Frobenius residual of ``P`` as a DARE solution."""
    return float(
        np.linalg.norm(_riccati_step(A, C, Q, R, P) - P, "fro")
        / max(np.linalg.norm(P, "fro"), _TINY)
    )


def solve_dare(A, C, Q, R, P0=None):
    """Solve the filtering DARE by fixed-point iteration from ``P0 = Q``.

    Stops when the relative Frobenius change falls below ``dare_step_rtol``;
    raises ``DivergenceError`` when the iterate blows up (unobservable pair
    with unstable ``A``) and ``ConvergenceError`` when the iteration cap or
    the residual target is missed.
    """
    A = as_square(A, "A")
    n = A.shape[0]
    C = as_observation(C, n)
    Q = check_cov(Q, "Q", definite=True)
    if Q.shape != (n, n):
        raise InvalidInputError(f"Q must be {n}x{n}, got {Q.shape}")
    R = _check_noise(R, C.shape[0])

    step_rtol = tol("dare_step_rtol")
    max_iter = tol("dare_max_iter")
    blowup = tol("dare_blowup") * max(1.0, norm2(Q))

    info = information(C, R)[0]
    P = Q.copy() if P0 is None else check_cov(P0, "P0")
    half_norm = None
    converged = False
    for it in range(1, max_iter + 1):
        P_next = _riccati_step(A, C, Q, R, P, info)
        size = np.linalg.norm(P_next, "fro")
        if not np.isfinite(size) or size > blowup:
            raise DivergenceError(
                f"Riccati iterate diverged after {it} iterations (||P||_F={size:.3g}); "
                "the pair (A, C) is probably not observable"
            )
        change = np.linalg.norm(P_next - P, "fro") / max(size, _TINY)
        P = P_next
        if it == max_iter // 2:
            half_norm = size
        if change <= step_rtol:
            converged = True
            break

    if not converged:
        if half_norm is not None and np.linalg.norm(P, "fro") > 2.0 * half_norm:
            raise DivergenceError(f"Riccati iterate still growing after {max_iter} iterations")
        raise ConvergenceError(f"Riccati iteration did not settle within {max_iter} iterations")

    residual = dare_residual(A, C, Q, R, P)
    if residual > tol("dare_residual_rtol"):
        raise ConvergenceError(f"DARE residual {residual:.3g} above tolerance")
    logger.debug("DARE converged in %d iterations (residual %.2e)", it, residual)
    return P


def lyapunov_series(F, W, terms, F_right=None):
    """Truncated two-sided series ``sum_{k<terms} F^k W (F_right^T)^k``."""
    F = np.asarray(F, dtype=float)
    G = F if F_right is None else np.asarray(F_right, dtype=float)
    W = np.asarray(W, dtype=float)
    total = np.zeros_like(W)
    left = np.eye(F.shape[0])
    right = np.eye(G.shape[0])
    for _ in range(int(terms)):
        total += left @ W @ right.T
        left = left @ F
        right = right @ G
    return total


def solve_dle(F, W):
    """Solve ``X = F X F^T + W`` for Schur-stable ``F``."""
    F = as_square(F, "F")
    n = F.shape[0]
    W = check_cov(W, "W")
    if W.shape != (n, n):
        raise InvalidInputError(f"W must be {n}x{n}, got {W.shape}")
    rho = spectral_radius(F)
    if rho >= 1.0:
        raise InstabilityError(
            f"rho(F) = {rho:.6g} >= 1: the error covariance may diverge"
        )

    if n <= tol("dle_direct_max_n"):
        system = np.eye(n * n) - np.kron(F, F)
        try:
            X = np.linalg.solve(system, W.reshape(-1)).reshape(n, n)
        except np.linalg.LinAlgError as e:
            raise SingularityError(f"Lyapunov system is singular: {e}") from e
    else:
        X = W.copy()
        Fk = F.copy()
        for _ in range(tol("dle_max_doublings")):
            increment = Fk @ X @ Fk.T
            X = X + increment
            Fk = Fk @ Fk
            if norm2(increment) <= np.finfo(float).eps * max(norm2(X), _TINY):
                break
    X = symmetrize(X)

    residual = norm2(F @ X @ F.T + W - X) / max(norm2(X), _TINY)
    if residual > tol("dle_residual_rtol"):
        raise ConvergenceError(f"DLE residual {residual:.3g} above tolerance")
    return X


@dataclass(frozen=True)
class ClosedLoop:
    """Steady-state Kalman closed loop built from a DARE solution.

    gain      K = A P C^T (C P C^T + R)^{-1}
    feedback  A - K C
    posterior P - P C^T (C P C^T + R)^{-1} C P  = (P^{-1} + C^T R^{-1} C)^{-1}
    """

    gain: np.ndarray
    feedback: np.ndarray
    posterior: np.ndarray


def closed_loop(A, C, P, R):
    A = as_square(A, "A")
    n = A.shape[0]
    C = as_observation(C, n)
    P = as_square(P, "P")
    if C.shape[0] == 0:
        return ClosedLoop(gain=np.zeros((n, 0)), feedback=A.copy(), posterior=symmetrize(P))

    info, weighted = information(C, as_square(R, "R"))
    posterior = information_update(P, info)
    gain = A @ posterior @ weighted.T
    return ClosedLoop(gain=gain, feedback=A - gain @ C, posterior=posterior)


def kalman_identity_gap(A, C, P, R, loop):
    """Relative gap between ``loop.gain`` and the innovation form ``A P C^T (C P C^T + R)^{-1}``."""
    C = np.asarray(C, dtype=float)
    if C.shape[0] == 0:
        return 0.0
    innovation = C @ P @ C.T + R
    try:
        other = np.linalg.solve(innovation, C @ P @ A.T).T
    except np.linalg.LinAlgError as e:
        raise SingularityError(f"innovation covariance is singular: {e}") from e
    return norm2(loop.gain - other) / max(norm2(loop.gain), _TINY)


def closed_loop_bounds(P, Q):
    """Bounds on the spectral radius and 2-norm of the DARE closed loop.

        rho(A - K C)   <= sqrt(1 - lambda_min(Q) / lambda_max(P))
        ||A - K C||_2  <= sqrt(lambda_max(P) / lambda_min(Q))
    """
    P = check_cov(P, "P")
    Q = check_cov(Q, "Q")
    lam_min_q = float(np.linalg.eigvalsh(Q)[0])
    lam_max_p = float(np.linalg.eigvalsh(P)[-1])
    if lam_min_q <= 0.0:
        raise InvalidInputError(f"lambda_min(Q) = {lam_min_q:.3g} must be positive")
    if lam_max_p <= 0.0:
        raise InvalidInputError(f"lambda_max(P) = {lam_max_p:.3g} must be positive")
    rho_bound = math.sqrt(max(0.0, 1.0 - lam_min_q / lam_max_p))
    norm_bound = math.sqrt(lam_max_p / lam_min_q)
    return rho_bound, norm_bound


def _noise_information_difference(R1, R2):
    return np.linalg.inv(R2) - np.linalg.inv(R1)


def dare_gap_series(A, C, Q, R1, R2, terms):
    """Series representation of ``dare(A, C, Q, R1) - dare(A, C, Q, R2)``.

        sum_{k<terms} F1^k A Pbar1 C^T (R2^{-1} - R1^{-1}) C Pbar2 A^T (F2^T)^k

    where ``F`` and ``Pbar`` are the feedback and posterior of each closed loop.
    """
    A = as_square(A, "A")
    C = as_observation(C, A.shape[0])
    if C.shape[0] == 0:
        return np.zeros_like(A)
    P1 = solve_dare(A, C, Q, R1)
    P2 = solve_dare(A, C, Q, R2)
    loop1 = closed_loop(A, C, P1, R1)
    loop2 = closed_loop(A, C, P2, R2)
    middle = (
        A @ loop1.posterior @ C.T
        @ _noise_information_difference(np.atleast_2d(R1), np.atleast_2d(R2))
        @ C @ loop2.posterior @ A.T
    )
    return lyapunov_series(loop1.feedback, middle, terms, F_right=loop2.feedback)


def riccati_difference_bound(A, C, Q, R1, R2, terms=500):
    """A-priori bound on ``||dare(., R1) - dare(., R2)||_2`` from the series form."""
    A = as_square(A, "A")
    C = as_observation(C, A.shape[0])
    if C.shape[0] == 0:
        return 0.0
    R1 = np.atleast_2d(np.asarray(R1, dtype=float))
    R2 = np.atleast_2d(np.asarray(R2, dtype=float))
    loop1 = closed_loop(A, C, solve_dare(A, C, Q, R1), R1)
    loop2 = closed_loop(A, C, solve_dare(A, C, Q, R2), R2)
    power_sum = 0.0
    F1k = np.eye(A.shape[0])
    F2k = np.eye(A.shape[0])
    for _ in range(int(terms)):
        power_sum += norm2(F1k) * norm2(F2k)
        F1k = F1k @ loop1.feedback
        F2k = F2k @ loop2.feedback
    return (
        norm2(loop1.posterior) * norm2(loop2.posterior) * norm2(C) ** 2
        * norm2(_noise_information_difference(R1, R2)) * norm2(A) ** 2 * power_sum
    )
