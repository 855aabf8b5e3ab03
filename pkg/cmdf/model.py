"""
System and sensor descriptions, observability, and the per-node modified
observation seen after L fusion rounds.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .config import tol
from .errors import InvalidInputError, NumericalError
from .network import weight_power
from .numerics import as_observation, as_square, check_cov, information, norm2, numerical_rank

logger = logging.getLogger(__name__)


def _frozen(array):
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class SystemModel:
    """x_{k+1} = A x_k + w_k with w_k ~ N(0, Q), Q positive definite."""

    A: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        A = as_square(self.A, "A")
        Q = check_cov(self.Q, "Q", definite=True)
        if Q.shape != A.shape:
            raise InvalidInputError(f"Q must be {A.shape[0]}x{A.shape[0]}, got {Q.shape}")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "Q", _frozen(Q))

    @property
    def n(self):
        return self.A.shape[0]


@dataclass(frozen=True, eq=False)
class SensorModel:
    """y_i = C_i x + v_i with v_i ~ N(0, R_i).

    A sensor whose ``C`` is empty or entirely zero is a naive node and is
    stored with ``C`` of shape (0, n).
    """

    C: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float)
        if C.ndim == 1:
            C = C.reshape(1, -1)
        if C.ndim != 2:
            raise InvalidInputError(f"C must be a matrix, got {C.ndim} dimensions")
        n = C.shape[1]
        C = as_observation(C, n)
        if C.size and not np.any(C):
            C = np.zeros((0, n))
        if C.shape[0] == 0:
            R = np.zeros((0, 0))
        else:
            R = check_cov(self.R, "R", definite=True)
            if R.shape != (C.shape[0], C.shape[0]):
                raise InvalidInputError(f"R must be {C.shape[0]}x{C.shape[0]}, got {R.shape}")
        object.__setattr__(self, "C", _frozen(C))
        object.__setattr__(self, "R", _frozen(R))

    @classmethod
    def naive(cls, n):
        return cls(np.zeros((0, n)), np.zeros((0, 0)))

    @property
    def dim(self):
        return self.C.shape[0]

    @property
    def state_dim(self):
        return self.C.shape[1]

    @property
    def is_naive(self):
        return self.dim == 0


def check_sensors(sys, sensors, N=None):
    if N is not None and len(sensors) != N:
        raise InvalidInputError(f"expected {N} sensors (one per node), got {len(sensors)}")
    for i, sensor in enumerate(sensors):
        if sensor.state_dim != sys.n:
            raise InvalidInputError(f"sensor {i} observes {sensor.state_dim} states, system has {sys.n}")


def stacked_observation(sensors):
    """Stack the non-naive sensors into (C, blockdiag R)."""
    if not sensors:
        raise InvalidInputError("need at least one sensor to stack")
    n = sensors[0].state_dim
    blocks = [s for s in sensors if not s.is_naive]
    if not blocks:
        return np.zeros((0, n)), np.zeros((0, 0))
    return np.vstack([s.C for s in blocks]), block_diag(*[s.R for s in blocks])


def observability_matrix(A, C):
    A = as_square(A, "A")
    C = as_observation(C, A.shape[0])
    rows = []
    block = C
    for _ in range(A.shape[0]):
        rows.append(block)
        block = block @ A
    return np.vstack(rows)


def is_observable(A, C):
    """Rank test on [C; CA; ...; CA^{n-1}]."""
    A = as_square(A, "A")
    n = A.shape[0]
    C = as_observation(C, n)
    if C.shape[0] == 0:
        return False
    return numerical_rank(observability_matrix(A, C), n) == n


def collective_observability(sys, sensors):
    C, _ = stacked_observation(sensors)
    return is_observable(sys.A, C)


@dataclass(frozen=True, eq=False)
class ModifiedObservation:
    """Node ``node``'s observation model after ``L`` fusion rounds.

    ``included`` lists the non-naive nodes j with l_ij^(L) > 0, in order.
    R_tilde has blocks R_j / (N l_ij^(L)); R_bar has blocks R_j.
    """

    node: int
    L: int
    included: tuple
    C_tilde: np.ndarray
    R_tilde: np.ndarray
    R_bar: np.ndarray
    S: np.ndarray

    def is_observable(self, A):
        return is_observable(A, self.C_tilde)


def modified_observation(sys, sensors, W, i, L):
    N = W.node_count
    check_sensors(sys, sensors, N)
    if not 0 <= i < N:
        raise InvalidInputError(f"node {i} outside 0..{N - 1}")
    weights = weight_power(W, L)[i]

    included = tuple(j for j in range(N) if weights[j] > 0.0 and not sensors[j].is_naive)
    S = np.zeros((sys.n, sys.n))
    for j in included:
        S += N * weights[j] * information(sensors[j].C, sensors[j].R)[0]
    S = 0.5 * (S + S.T)

    if not included:
        return ModifiedObservation(
            node=i, L=int(L), included=(),
            C_tilde=np.zeros((0, sys.n)), R_tilde=np.zeros((0, 0)), R_bar=np.zeros((0, 0)), S=S,
        )

    C_tilde = np.vstack([sensors[j].C for j in included])
    R_tilde = block_diag(*[sensors[j].R / (N * weights[j]) for j in included])
    R_bar = block_diag(*[sensors[j].R for j in included])

    stacked = information(C_tilde, R_tilde)[0]
    gap = norm2(stacked - S) / max(norm2(S), np.finfo(float).tiny)
    if gap > tol("identity_rtol"):
        raise NumericalError(
            f"node {i}, L={L}: stacked information disagrees with fused information (rel. gap {gap:.3g})"
        )
    logger.debug("node %d, L=%d: %d of %d sensors in the modified observation", i, L, len(included), N)
    return ModifiedObservation(
        node=i, L=int(L), included=included,
        C_tilde=C_tilde, R_tilde=R_tilde, R_bar=R_bar, S=S,
    )
