"""
The consensus-on-measurement filter: predict, L fusion rounds, correct.

The network-wide state keeps every node's estimate in stacked arrays
``x`` (N, n) and ``P`` (N, n, n); the single-node operations run the same
kernels on arrays without the leading node axis.
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import SingularityError, UsageError
from .model import check_sensors
from .network import WeightMatrix
from .numerics import information, symmetrize

logger = logging.getLogger(__name__)


class Phase(Enum):
    PRIOR = "prior"
    POSTERIOR = "posterior"


@dataclass(frozen=True, eq=False)
class NodeFilterState:
    x_hat: np.ndarray
    P: np.ndarray
    phase: Phase = Phase.POSTERIOR


@dataclass(frozen=True, eq=False)
class FusionRegisters:
    S: np.ndarray
    I: np.ndarray  # noqa: E741


@dataclass(frozen=True, eq=False)
class NetworkFilterState:
    """All node estimates at sampling instant ``k``."""

    x: np.ndarray
    P: np.ndarray
    k: int = 0
    phase: Phase = Phase.POSTERIOR

    @property
    def node_count(self):
        return self.x.shape[0]

    @property
    def nodes(self):
        return [NodeFilterState(self.x[i], self.P[i], self.phase) for i in range(self.node_count)]


def initial_network_state(sys, N, x0=None, P0=None):
    """x_hat_{i,0|0} = x0 (default 0) and P_{i,0|0} = P0 (default I) at every node."""
    x0 = np.zeros(sys.n) if x0 is None else np.asarray(x0, dtype=float)
    P0 = np.eye(sys.n) if P0 is None else np.asarray(P0, dtype=float)
    if x0.shape != (sys.n,) or P0.shape != (sys.n, sys.n):
        raise UsageError(f"initial state must be ({sys.n},) and ({sys.n}, {sys.n})")
    return NetworkFilterState(
        x=np.tile(x0, (N, 1)),
        P=np.tile(P0, (N, 1, 1)),
        k=0,
        phase=Phase.POSTERIOR,
    )


def _predict(x, P, A, Q):
    return x @ A.T, symmetrize(A @ P @ A.T + Q)


def _correct(x, P, S, I):  # noqa: E741
    n = P.shape[-1]
    try:
        np.linalg.cholesky(P)
        gain = np.linalg.solve(np.eye(n) + P @ S, np.concatenate([P, x[..., None]], axis=-1))
    except np.linalg.LinAlgError as e:
        raise SingularityError(f"prior covariance is singular: {e}") from e
    # (P^{-1} + S)^{-1} = (I + P S)^{-1} P  and  P_new P^{-1} x = (I + P S)^{-1} x
    P_new = symmetrize(gain[..., :n])
    x_new = gain[..., n] + (P_new @ I[..., None])[..., 0]
    return x_new, P_new


def _fuse(W, S, I):  # noqa: E741
    N = S.shape[0]
    return (W @ S.reshape(N, -1)).reshape(S.shape), W @ I


def _check_phase(phase, expected, op):
    if phase is not expected:
        raise UsageError(f"{op} needs a {expected.value} state, got {phase.value}")


def predict(state, sys):
    """x <- A x, P <- A P A^T + Q."""
    _check_phase(state.phase, Phase.POSTERIOR, "predict")
    if state.x_hat.shape != (sys.n,) or state.P.shape != (sys.n, sys.n):
        raise UsageError(f"state dimensions do not match a {sys.n}-state system")
    x, P = _predict(state.x_hat, state.P, sys.A, sys.Q)
    return NodeFilterState(x, P, Phase.PRIOR)


def _measurement(sensor, y):
    if sensor.is_naive:
        return np.zeros(0)
    y = np.atleast_1d(np.asarray(y, dtype=float)) if y is not None else np.zeros(0)
    if y.shape != (sensor.dim,):
        raise UsageError(f"measurement must have {sensor.dim} entries, got shape {y.shape}")
    return y


def init_registers(sensor, y, N):
    """S = N C^T R^{-1} C, I = N C^T R^{-1} y; zeros for a naive node."""
    y = _measurement(sensor, y)
    info, weighted = information(sensor.C, sensor.R)
    return FusionRegisters(S=N * info, I=N * (weighted.T @ y))


def fuse_round(registers, W):
    """One synchronous consensus round: every node takes the W-weighted sum of its neighbours' registers."""
    entries = W.entries if isinstance(W, WeightMatrix) else np.asarray(W, dtype=float)
    if len(registers) != entries.shape[0]:
        raise UsageError(f"expected {entries.shape[0]} registers, got {len(registers)}")
    S, I = _fuse(entries, np.stack([r.S for r in registers]), np.stack([r.I for r in registers]))  # noqa: E741
    return [FusionRegisters(S[i], I[i]) for i in range(len(registers))]


def correct(state, regs):
    """P <- (P^{-1} + S)^{-1}, x <- P_new (P^{-1} x + I)."""
    _check_phase(state.phase, Phase.PRIOR, "correct")
    x, P = _correct(state.x_hat, state.P, regs.S, regs.I)
    return NodeFilterState(x, P, Phase.POSTERIOR)


def predict_network(net, sys):
    _check_phase(net.phase, Phase.POSTERIOR, "predict")
    x, P = _predict(net.x, net.P, sys.A, sys.Q)
    return NetworkFilterState(x, P, net.k + 1, Phase.PRIOR)


@dataclass(frozen=True, eq=False)
class RegisterMap:
    """Per-node S^(0) = N C_i^T R_i^{-1} C_i and the map y_i -> I^(0) = N C_i^T R_i^{-1} y_i."""

    sensors: tuple
    S: np.ndarray
    maps: tuple

    def registers(self, measurements):
        if len(measurements) != len(self.sensors):
            raise UsageError(f"expected {len(self.sensors)} measurements (one per node), got {len(measurements)}")
        I = np.stack([  # noqa: E741
            m @ _measurement(s, y) for s, m, y in zip(self.sensors, self.maps, measurements)
        ])
        return self.S.copy(), I


def register_map(sensors, N):
    S, maps = [], []
    for sensor in sensors:
        regs = init_registers(sensor, np.zeros(sensor.dim), N)
        S.append(regs.S)
        maps.append(N * information(sensor.C, sensor.R)[1].T)
    return RegisterMap(tuple(sensors), np.stack(S), tuple(maps))


def update_network(net, sensors, W, L, measurements, rmap=None):
    """Fuse the measurements of instant ``net.k`` over ``L`` rounds and correct every node."""
    _check_phase(net.phase, Phase.PRIOR, "correct")
    entries = W.entries
    if rmap is None:
        rmap = register_map(sensors, entries.shape[0])
    S, I = rmap.registers(measurements)  # noqa: E741
    for _ in range(int(L)):
        S, I = _fuse(entries, S, I)  # noqa: E741
    x, P = _correct(net.x, net.P, S, I)
    return NetworkFilterState(x, P, net.k, Phase.POSTERIOR)


def step(net, sys, sensors, W, L, measurements):
    """One sampling instant of the whole network: predict, init registers, L fusion rounds, correct."""
    if L < 0:
        raise UsageError(f"fusion depth must be >= 0, got {L}")
    check_sensors(sys, sensors, W.node_count)
    if net.node_count != W.node_count:
        raise UsageError(f"state holds {net.node_count} nodes, weight matrix {W.node_count}")
    return update_network(predict_network(net, sys), sensors, W, L, measurements)
