"""
Seeded Monte Carlo runs of the fused filter.

Each trial owns a Philox stream keyed by ``(seed, trial)``; all standard
normals for the trial are drawn up front as a (steps, n + sum n_i) block, so
the sample used at a given (step, node) never depends on how trials are
scheduled across workers.
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from joblib import Parallel, delayed

from .config import num_jobs
from .errors import InvalidInputError
from .filter import initial_network_state, predict_network, register_map, update_network
from .model import SensorModel, SystemModel, check_sensors

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TrialConfig:
    steps: int = 200
    trials: int = 1000
    seed: int = 0
    eval_window: int = 1
    x0: np.ndarray | None = None
    P0: np.ndarray | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidInputError(f"trials must be >= 1, got {self.trials}")
        if not 1 <= self.eval_window <= self.steps:
            raise InvalidInputError(
                f"need steps >= eval_window >= 1, got steps={self.steps}, eval_window={self.eval_window}"
            )


@dataclass(frozen=True, eq=False)
class MonteCarloResult:
    """Per-node statistics over trials at the evaluation instant.

    ``mse`` averages ||x_hat_i - x||^2 over the evaluation window; the
    covariances are E[e e^T] of the prior and posterior errors at the final step.
    """

    mse: np.ndarray
    mse_stderr: np.ndarray
    prior_cov: np.ndarray
    prior_cov_stderr: np.ndarray
    posterior_cov: np.ndarray
    posterior_cov_stderr: np.ndarray
    trials: int


class GraphParams(NamedTuple):
    N: int
    width: float
    radius: float


class PaperScenario(NamedTuple):
    system: SystemModel
    sensors: list
    graph: GraphParams


def paper_scenario():
    """Two decoupled constant-velocity targets observed by 3 + 3 position sensors and 14 naive nodes."""
    a = np.array([[1.0, 1.0], [0.0, 1.0]])
    A = np.block([[a, np.zeros((2, 2))], [np.zeros((2, 2)), a]])
    G = np.array([[1.0 / 3.0, 0.5], [0.5, 1.0]])
    Q = np.block([[G, 0.5 * G], [0.5 * G, G]])
    system = SystemModel(A, Q)

    R = np.eye(1)
    sensors = (
        [SensorModel(np.array([[1.0, 0.0, 0.0, 0.0]]), R) for _ in range(3)]
        + [SensorModel(np.array([[0.0, 0.0, 1.0, 0.0]]), R) for _ in range(3)]
        + [SensorModel(np.zeros((1, 4)), R) for _ in range(14)]
    )
    return PaperScenario(system, sensors, GraphParams(N=20, width=300.0, radius=130.0))


def _noise_factors(sys, sensors):
    chol_Q = np.linalg.cholesky(sys.Q)
    chol_R = [None if s.is_naive else np.linalg.cholesky(s.R) for s in sensors]
    return chol_Q, chol_R


def _trial_normals(sys, sensors, cfg, trial_index):
    width = sys.n + sum(s.dim for s in sensors)
    stream = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, trial_index])))
    return stream.standard_normal((cfg.steps, width))


def generate_trajectory(sys, sensors, cfg, trial_index):
    """True states x_0..x_steps and per-step measurement lists for one trial.

    x_k = A x_{k-1} + w_{k-1},  y_{i,k} = C_i x_k + v_{i,k},  k = 1..steps.
    Naive nodes get empty measurement vectors.
    """
    chol_Q, chol_R = _noise_factors(sys, sensors)
    z = _trial_normals(sys, sensors, cfg, trial_index)
    x = np.zeros(sys.n) if cfg.x0 is None else np.asarray(cfg.x0, dtype=float)

    states = [x]
    measurements = []
    for k in range(cfg.steps):
        x = sys.A @ x + chol_Q @ z[k, :sys.n]
        offset = sys.n
        ys = []
        for sensor, chol in zip(sensors, chol_R):
            if chol is None:
                ys.append(np.zeros(0))
                continue
            ys.append(sensor.C @ x + chol @ z[k, offset:offset + sensor.dim])
            offset += sensor.dim
        states.append(x)
        measurements.append(ys)
    return np.array(states), measurements


def _trial_errors(sys, sensors, W, L, cfg, trial_index):
    states, measurements = generate_trajectory(sys, sensors, cfg, trial_index)
    net = initial_network_state(sys, W.node_count, cfg.x0, cfg.P0)
    rmap = register_map(sensors, W.node_count)
    window_start = cfg.steps - cfg.eval_window
    sq_err = np.zeros(W.node_count)
    prior_err = post_err = None
    for k in range(cfg.steps):
        prior = predict_network(net, sys)
        net = update_network(prior, sensors, W, L, measurements[k], rmap)
        if k >= window_start:
            err = net.x - states[k + 1]
            sq_err += np.sum(err**2, axis=1)
        if k == cfg.steps - 1:
            prior_err = prior.x - states[k + 1]
            post_err = net.x - states[k + 1]
    return sq_err / cfg.eval_window, prior_err, post_err


def run_trial(sys, sensors, W, L, cfg, trial_index):
    """Per-node squared estimation error averaged over the evaluation window."""
    check_sensors(sys, sensors, W.node_count)
    return _trial_errors(sys, sensors, W, L, cfg, trial_index)[0]


def _outer_stats(errors):
    # errors: (trials, N, n) -> mean and standard error of e e^T per node
    outer = errors[:, :, :, None] * errors[:, :, None, :]
    mean = outer.mean(axis=0)
    T = errors.shape[0]
    stderr = outer.std(axis=0, ddof=1) / np.sqrt(T) if T > 1 else np.zeros_like(mean)
    return mean, stderr


def monte_carlo_mse(sys, sensors, W, L, cfg, n_jobs=None):
    """Average ``cfg.trials`` independent trials; worker count from ``CMDF_NUM_THREADS`` unless given."""
    check_sensors(sys, sensors, W.node_count)
    n_jobs = num_jobs() if n_jobs is None else n_jobs
    logger.info("Monte Carlo: L=%d, %d trials x %d steps on %d worker(s)", L, cfg.trials, cfg.steps, n_jobs)

    results = Parallel(n_jobs=n_jobs)(
        delayed(_trial_errors)(sys, sensors, W, L, cfg, t) for t in range(cfg.trials)
    )
    sq = np.array([r[0] for r in results])
    prior = np.array([r[1] for r in results])
    post = np.array([r[2] for r in results])

    T = cfg.trials
    mse_stderr = sq.std(axis=0, ddof=1) / np.sqrt(T) if T > 1 else np.zeros(sq.shape[1])
    prior_cov, prior_se = _outer_stats(prior)
    post_cov, post_se = _outer_stats(post)
    return MonteCarloResult(
        mse=sq.mean(axis=0),
        mse_stderr=mse_stderr,
        prior_cov=prior_cov,
        prior_cov_stderr=prior_se,
        posterior_cov=post_cov,
        posterior_cov_stderr=post_se,
        trials=T,
    )


def covariance_agreement(result, theory, n_sigma=3.0, kind="prior"):
    """Fraction of covariance entries (all nodes) within ``n_sigma`` standard errors of ``theory``."""
    if kind == "prior":
        empirical, stderr = result.prior_cov, result.prior_cov_stderr
    elif kind == "posterior":
        empirical, stderr = result.posterior_cov, result.posterior_cov_stderr
    else:
        raise InvalidInputError(f"kind must be 'prior' or 'posterior', got {kind!r}")
    theory = np.asarray(theory, dtype=float)
    if theory.shape != empirical.shape:
        raise InvalidInputError(f"theory shape {theory.shape} does not match {empirical.shape}")
    within = np.abs(empirical - theory) <= n_sigma * stderr
    return float(np.mean(within))
