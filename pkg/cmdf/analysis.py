"""
Closed-form steady-state analysis of the fused filter.

For node i and fusion depth L:

    P          centralized DARE solution on (A, stacked C, Q, blockdiag R)
    P_i^(L)    DARE solution on the modified pair (C_tilde, R_tilde); the filter's own belief
    Pt_i^(L)   DLE solution on (A - K C_tilde, Q + K R_bar K^T); the true prior error covariance

and the three gaps ||P - P_i||, ||Pt_i - P_i||, ||Pt_i - P|| with their
exponential decay in L.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .config import tol
from .errors import InsufficientDataError, InvalidInputError, UnobservableError
from .model import collective_observability, is_observable, modified_observation, stacked_observation
from .network import Graph, graph_metrics, weight_power
from .numerics import closed_loop, information, lyapunov_series, norm2, solve_dare, solve_dle, symmetrize

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SteadyStateReport:
    node: int
    L: int
    P_central: np.ndarray
    P_param: np.ndarray
    P_true: np.ndarray
    P_true_posterior: np.ndarray
    gap_param: float
    gap_consistency: float
    gap_total: float
    mse_theory: float
    mse_theory_posterior: float
    mse_central: float
    mse_central_posterior: float
    bound_param: float
    bound_consistency: float


@dataclass(frozen=True)
class RateFit:
    """gap(L) ~ M q^L fitted in log space.

    ``residual`` is the RMS log deviation; ``relative_residual`` divides it by
    the spread (max - min) of the log gaps that entered the fit.
    """

    M: float
    q: float
    fit_range: tuple
    residual: float
    points: int
    relative_residual: float


@dataclass(frozen=True, eq=False)
class NodeSteadyState:
    observation: object
    P: np.ndarray
    loop: object
    P_true: np.ndarray
    P_true_posterior: np.ndarray


def centralized_steady(sys, sensors):
    if not collective_observability(sys, sensors):
        raise UnobservableError("the stacked pair (A, C) is not observable; the network is not collectively observable")
    C, R = stacked_observation(sensors)
    return solve_dare(sys.A, C, sys.Q, R)


def _modified_pair(sys, sensors, W, i, L):
    mo = modified_observation(sys, sensors, W, i, L)
    if not is_observable(sys.A, mo.C_tilde):
        raise UnobservableError(
            f"node {i}: (A, C_tilde) is not observable at L={L}; "
            "its error covariance may diverge for an unstable A",
            node=i, L=L,
        )
    return mo


def node_steady_state(sys, sensors, W, i, L):
    """Modified pair, DARE solution, closed loop and true prior/posterior covariances of one node."""
    mo = _modified_pair(sys, sensors, W, i, L)
    P = solve_dare(sys.A, mo.C_tilde, sys.Q, mo.R_tilde)
    loop = closed_loop(sys.A, mo.C_tilde, P, mo.R_tilde)
    K = loop.gain
    P_true = solve_dle(loop.feedback, sys.Q + K @ mo.R_bar @ K.T)

    # posterior: e+ = (I - Pbar S) e- - Pbar C_tilde^T R_tilde^{-1} v
    _, weighted = information(mo.C_tilde, mo.R_tilde)
    contraction = np.eye(sys.n) - loop.posterior @ mo.S
    noise = weighted.T @ mo.R_bar @ weighted
    P_true_posterior = symmetrize(
        contraction @ P_true @ contraction.T + loop.posterior @ noise @ loop.posterior
    )
    return NodeSteadyState(mo, P, loop, P_true, P_true_posterior)


def node_param_steady(sys, sensors, W, i, L):
    mo = _modified_pair(sys, sensors, W, i, L)
    return solve_dare(sys.A, mo.C_tilde, sys.Q, mo.R_tilde)


def node_true_steady(sys, sensors, W, i, L):
    return node_steady_state(sys, sensors, W, i, L).P_true


def node_true_posterior(sys, sensors, W, i, L):
    return node_steady_state(sys, sensors, W, i, L).P_true_posterior


def consistency_gap_series(A, C_tilde, Q, R_tilde, R_bar, terms):
    """sum_{k<terms} F^k K (R_bar - R_tilde) K^T (F^T)^k, which tends to Pt_i - P_i."""
    P = solve_dare(A, C_tilde, Q, R_tilde)
    loop = closed_loop(A, C_tilde, P, R_tilde)
    K = loop.gain
    return lyapunov_series(loop.feedback, K @ (R_bar - R_tilde) @ K.T, terms)


def _power_sum(F1, F2, terms):
    total = 0.0
    F1k = np.eye(F1.shape[0])
    F2k = np.eye(F2.shape[0])
    for _ in range(int(terms)):
        term = norm2(F1k) * norm2(F2k)
        total += term
        if term <= np.finfo(float).eps * total:
            break
        F1k = F1k @ F1
        F2k = F2k @ F2
    return total


def _degradation_bounds(sys, sensors, W, L, central_loop, state, terms):
    N = len(sensors)
    weights = weight_power(W, L)[state.observation.node]
    C_full, _ = stacked_observation(sensors)
    # fused minus centralized noise information; blocks with l_ij = 0 carry -R_j^{-1}
    mismatch = block_diag(*[
        (N * weights[j] - 1.0) * np.linalg.inv(s.R) for j, s in enumerate(sensors) if not s.is_naive
    ])
    bound_param = (
        norm2(central_loop.posterior) * norm2(state.loop.posterior) * norm2(C_full) ** 2
        * norm2(mismatch) * norm2(sys.A) ** 2
        * _power_sum(central_loop.feedback, state.loop.feedback, terms)
    )
    mo = state.observation
    F = state.loop.feedback
    bound_consistency = norm2(state.loop.gain) ** 2 * norm2(mo.R_bar - mo.R_tilde) * _power_sum(F, F, terms)
    return bound_param, bound_consistency


def centralized_closed_loop(sys, sensors):
    """Centralized prior covariance and its closed loop; ``loop.posterior`` is the posterior covariance."""
    P_central = centralized_steady(sys, sensors)
    C, R = stacked_observation(sensors)
    return P_central, closed_loop(sys.A, C, P_central, R)


def degradation_bounds(sys, sensors, W, i, L, terms=500):
    """A-priori upper bounds on (gap_param, gap_consistency) for node ``i``."""
    _, central_loop = centralized_closed_loop(sys, sensors)
    state = node_steady_state(sys, sensors, W, i, L)
    return _degradation_bounds(sys, sensors, W, L, central_loop, state, terms)


def gap_report(sys, sensors, W, L_range, terms=500, with_bounds=True):
    """One SteadyStateReport per (L, node), L-major; bounds are NaN when ``with_bounds`` is off."""
    P_central, central_loop = centralized_closed_loop(sys, sensors)
    mse_central = float(np.trace(P_central))
    mse_central_posterior = float(np.trace(central_loop.posterior))
    reports = []
    for L in L_range:
        for i in range(W.node_count):
            state = node_steady_state(sys, sensors, W, i, L)
            bound_param = bound_consistency = math.nan
            if with_bounds:
                bound_param, bound_consistency = _degradation_bounds(
                    sys, sensors, W, L, central_loop, state, terms
                )
            reports.append(SteadyStateReport(
                node=i,
                L=int(L),
                P_central=P_central,
                P_param=state.P,
                P_true=state.P_true,
                P_true_posterior=state.P_true_posterior,
                gap_param=norm2(P_central - state.P),
                gap_consistency=norm2(state.P_true - state.P),
                gap_total=norm2(state.P_true - P_central),
                mse_theory=float(np.trace(state.P_true)),
                mse_theory_posterior=float(np.trace(state.P_true_posterior)),
                mse_central=mse_central,
                mse_central_posterior=mse_central_posterior,
                bound_param=bound_param,
                bound_consistency=bound_consistency,
            ))
        logger.info("L=%d: max gap_total %.3e", L, max(r.gap_total for r in reports[-W.node_count:]))
    return reports


def fit_rate(series):
    """Least-squares fit of log(gap) = log(M) + L log(q) over points above the floor.

    ``series`` is an iterable of ``(L, gap)`` pairs.
    """
    pairs = [(float(L), float(g)) for L, g in series]
    floor = tol("fit_floor")
    usable = [(L, g) for L, g in pairs if math.isfinite(g) and g > floor]
    if len(usable) < tol("fit_min_points"):
        raise InsufficientDataError(
            f"only {len(usable)} of {len(pairs)} points lie above the {floor:g} floor; "
            f"need at least {tol('fit_min_points')}"
        )
    Ls = np.array([L for L, _ in usable])
    logs = np.log([g for _, g in usable])
    slope, intercept = np.polyfit(Ls, logs, 1)
    residual = float(np.sqrt(np.mean((logs - (intercept + slope * Ls)) ** 2)))
    spread = float(logs.max() - logs.min())
    relative = residual / spread if spread > 0.0 else 0.0
    q = float(np.exp(slope))
    if q >= 1.0:
        logger.warning("fitted rate q=%.4f is not below 1; the series does not decay", q)
    return RateFit(
        M=float(np.exp(intercept)),
        q=q,
        fit_range=(int(Ls.min()), int(Ls.max())),
        residual=residual,
        points=len(usable),
        relative_residual=relative,
    )


def weight_deviation(W, L):
    """(N l_ij^(L) - 1)^2 + (N l_ij^(L) - 1), elementwise."""
    power = weight_power(W, L)
    deviation = power.shape[0] * power - 1.0
    return deviation**2 + deviation


def _support_graph(W):
    if W.graph is not None:
        return W.graph
    ii, jj = np.nonzero(np.triu(W.entries + W.entries.T, k=1))
    return Graph(W.node_count, frozenset(zip(ii.tolist(), jj.tolist())))


def minimal_fusion_scan(sys, sensors, W):
    """Smallest L in [1, diameter] with (A, C_tilde_i^(L)) observable, per node; None if there is none."""
    if not collective_observability(sys, sensors):
        raise UnobservableError("the network is not collectively observable")
    diameter = graph_metrics(_support_graph(W)).diameter
    minima = []
    for i in range(W.node_count):
        found = None
        for L in range(1, max(diameter, 1) + 1):
            if is_observable(sys.A, modified_observation(sys, sensors, W, i, L).C_tilde):
                found = L
                break
        minima.append(found)
    return minima


def fit_gap_rates(reports, L_min=None, L_max=None):
    """Rate fits of gap_param, gap_consistency and gap_total per node and over the node-wise max.

    Returns a list of ``(quantity, node, RateFit)`` where ``node`` is an int or ``"all"``.
    """
    if not reports:
        raise InvalidInputError("no reports to fit")
    selected = [
        r for r in reports
        if (L_min is None or r.L >= L_min) and (L_max is None or r.L <= L_max)
    ]
    nodes = sorted({r.node for r in selected})
    Ls = sorted({r.L for r in selected})
    fits = []
    for quantity in ("gap_param", "gap_consistency", "gap_total"):
        for node in nodes:
            series = [(r.L, getattr(r, quantity)) for r in selected if r.node == node]
            fits.append((quantity, node, _fit_or_none(series, quantity, node)))
        worst = [(L, max(getattr(r, quantity) for r in selected if r.L == L)) for L in Ls]
        fits.append((quantity, "all", _fit_or_none(worst, quantity, "all")))
    return fits


def _fit_or_none(series, quantity, node):
    try:
        return fit_rate(series)
    except InsufficientDataError as e:
        logger.debug("no %s fit for node %s: %s", quantity, node, e)
        return None
