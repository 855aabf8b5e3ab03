import numpy as np
import pytest

from cmdf.analysis import node_param_steady
from cmdf.errors import SingularityError, UsageError
from cmdf.filter import (
    FusionRegisters,
    NodeFilterState,
    Phase,
    correct,
    fuse_round,
    init_registers,
    initial_network_state,
    predict,
    predict_network,
    register_map,
    step,
    update_network,
)
from cmdf.model import SensorModel, SystemModel, modified_observation, stacked_observation
from cmdf.network import WeightMatrix, uniform_weights
from cmdf.numerics import norm2


def _zero_measurements(sensors):
    return [np.zeros(s.dim) for s in sensors]


class TestPredict:
    def test_identity_dynamics(self):
        sys = SystemModel(np.eye(2), np.eye(2))
        out = predict(NodeFilterState(np.zeros(2), np.eye(2)), sys)
        np.testing.assert_array_equal(out.x_hat, np.zeros(2))
        np.testing.assert_array_equal(out.P, 2.0 * np.eye(2))
        assert out.phase is Phase.PRIOR

    def test_zero_dynamics(self):
        Q = np.array([[1.0, 0.2], [0.2, 0.5]])
        sys = SystemModel(np.zeros((2, 2)), Q)
        out = predict(NodeFilterState(np.ones(2), np.eye(2)), sys)
        np.testing.assert_array_equal(out.x_hat, np.zeros(2))
        np.testing.assert_allclose(out.P, Q)

    def test_scalar(self, scalar_system):
        out = predict(NodeFilterState(np.array([2.0]), np.array([[1.0]])), scalar_system)
        assert out.x_hat[0] == pytest.approx(1.0)
        assert out.P[0, 0] == pytest.approx(1.25)

    def test_needs_posterior(self, scalar_system):
        state = NodeFilterState(np.zeros(1), np.eye(1), Phase.PRIOR)
        with pytest.raises(UsageError, match="posterior"):
            predict(state, scalar_system)

    def test_dimension_mismatch(self, scalar_system):
        with pytest.raises(UsageError):
            predict(NodeFilterState(np.zeros(2), np.eye(2)), scalar_system)


class TestRegisters:
    def test_naive(self):
        regs = init_registers(SensorModel.naive(3), None, 5)
        np.testing.assert_array_equal(regs.S, np.zeros((3, 3)))
        np.testing.assert_array_equal(regs.I, np.zeros(3))

    def test_scalar(self):
        regs = init_registers(SensorModel(np.array([[1.0]]), np.array([[1.0]])), 3.0, 2)
        assert regs.S[0, 0] == pytest.approx(2.0)
        assert regs.I[0] == pytest.approx(6.0)

    def test_single_node_identity(self):
        y = np.array([0.5, -1.0, 2.0])
        regs = init_registers(SensorModel(np.eye(3), np.eye(3)), y, 1)
        np.testing.assert_allclose(regs.S, np.eye(3))
        np.testing.assert_allclose(regs.I, y)

    def test_measurement_size(self):
        with pytest.raises(UsageError, match="2 entries"):
            init_registers(SensorModel(np.eye(2), np.eye(2)), np.zeros(3), 1)


class TestFuseRound:
    def test_two_node_average(self):
        W = WeightMatrix(np.full((2, 2), 0.5))
        regs = [FusionRegisters(np.array([[2.0]]), np.array([4.0])),
                FusionRegisters(np.array([[0.0]]), np.array([0.0]))]
        out = fuse_round(regs, W)
        for r in out:
            assert r.S[0, 0] == pytest.approx(1.0)
            assert r.I[0] == pytest.approx(2.0)

    def test_identity_weights(self):
        regs = [FusionRegisters(np.eye(2) * k, np.full(2, float(k))) for k in range(3)]
        out = fuse_round(regs, WeightMatrix(np.eye(3)))
        for before, after in zip(regs, out):
            np.testing.assert_array_equal(before.S, after.S)
            np.testing.assert_array_equal(before.I, after.I)

    def test_register_count(self, path3):
        _, W = path3
        with pytest.raises(UsageError):
            fuse_round([FusionRegisters(np.eye(1), np.zeros(1))], W)

    def test_rounds_reproduce_modified_information(self, paper):
        system, sensors, _, W, d = paper
        N = W.node_count
        rng = np.random.default_rng(1)
        regs = [init_registers(s, rng.standard_normal(s.dim), N) for s in sensors]
        total_S = sum(r.S for r in regs)
        total_I = sum(r.I for r in regs)
        for L in range(1, d + 2):
            regs = fuse_round(regs, W)
            np.testing.assert_allclose(sum(r.S for r in regs), total_S, atol=1e-10)
            np.testing.assert_allclose(sum(r.I for r in regs), total_I, atol=1e-10)
            for i in (0, N // 2, N - 1):
                expected = modified_observation(system, sensors, W, i, L).S
                np.testing.assert_allclose(regs[i].S, expected, rtol=1e-10, atol=1e-14)


class TestCorrect:
    def test_no_information(self):
        state = NodeFilterState(np.array([1.0, -2.0]), np.diag([2.0, 3.0]), Phase.PRIOR)
        out = correct(state, FusionRegisters(np.zeros((2, 2)), np.zeros(2)))
        np.testing.assert_allclose(out.x_hat, state.x_hat)
        np.testing.assert_allclose(out.P, state.P)
        assert out.phase is Phase.POSTERIOR

    def test_scalar(self):
        state = NodeFilterState(np.zeros(1), np.eye(1), Phase.PRIOR)
        out = correct(state, FusionRegisters(np.eye(1), np.array([2.0])))
        assert out.P[0, 0] == pytest.approx(0.5)
        assert out.x_hat[0] == pytest.approx(1.0)

    def test_matches_innovation_form(self, chain):
        system, sensors, _, W = chain
        rng = np.random.default_rng(4)
        X = rng.standard_normal((4, 4))
        P = X @ X.T + np.eye(4)
        for i in range(W.node_count):
            mo = modified_observation(system, sensors, W, i, 5)
            out = correct(NodeFilterState(np.zeros(4), P, Phase.PRIOR), FusionRegisters(mo.S, np.zeros(4)))
            C, R = mo.C_tilde, mo.R_tilde
            expected = P - P @ C.T @ np.linalg.solve(C @ P @ C.T + R, C @ P)
            assert norm2(out.P - expected) <= 1e-9 * norm2(expected)

    def test_posterior_below_prior(self, paper):
        system, sensors, _, W, d = paper
        rng = np.random.default_rng(2)
        for i in range(0, W.node_count, 4):
            X = rng.standard_normal((4, 4))
            P = X @ X.T + 0.1 * np.eye(4)
            S = modified_observation(system, sensors, W, i, d).S
            out = correct(NodeFilterState(np.zeros(4), P, Phase.PRIOR), FusionRegisters(S, np.zeros(4)))
            assert np.linalg.eigvalsh(P - out.P)[0] >= -1e-12 * norm2(P)

    def test_needs_prior(self):
        with pytest.raises(UsageError, match="prior"):
            correct(NodeFilterState(np.zeros(1), np.eye(1)), FusionRegisters(np.eye(1), np.zeros(1)))

    def test_singular_prior(self):
        state = NodeFilterState(np.zeros(2), np.diag([1.0, 0.0]), Phase.PRIOR)
        with pytest.raises(SingularityError):
            correct(state, FusionRegisters(np.eye(2), np.zeros(2)))


class TestNetworkStep:
    def test_initial_state(self, tracking):
        net = initial_network_state(tracking, 3)
        assert net.x.shape == (3, 4) and net.P.shape == (3, 4, 4)
        np.testing.assert_array_equal(net.P[1], np.eye(4))
        assert net.k == 0 and net.phase is Phase.POSTERIOR
        assert len(net.nodes) == 3

    def test_initial_state_shape(self, tracking):
        with pytest.raises(UsageError):
            initial_network_state(tracking, 3, x0=np.zeros(2))

    def test_increments_instant(self, chain):
        system, sensors, _, W = chain
        net = step(initial_network_state(system, 5), system, sensors, W, 2, _zero_measurements(sensors))
        assert net.k == 1 and net.phase is Phase.POSTERIOR

    def test_matches_single_node_operations(self, chain):
        system, sensors, _, W = chain
        rng = np.random.default_rng(6)
        ys = [rng.standard_normal(s.dim) for s in sensors]
        net = step(initial_network_state(system, 5), system, sensors, W, 3, ys)

        regs = [init_registers(s, y, 5) for s, y in zip(sensors, ys)]
        for _ in range(3):
            regs = fuse_round(regs, W)
        for i, node in enumerate(initial_network_state(system, 5).nodes):
            expected = correct(predict(node, system), regs[i])
            np.testing.assert_allclose(net.x[i], expected.x_hat, rtol=1e-12, atol=1e-14)
            np.testing.assert_allclose(net.P[i], expected.P, rtol=1e-12, atol=1e-14)

    def test_uniform_weights_equal_centralized_filter(self, complete5):
        system, sensors, W = complete5
        C, R = stacked_observation(sensors)
        rng = np.random.default_rng(8)
        net = initial_network_state(system, 5)
        x, P = np.zeros(4), np.eye(4)
        for _ in range(30):
            ys = [rng.standard_normal(s.dim) for s in sensors]
            net = step(net, system, sensors, W, 1, ys)
            x, P = system.A @ x, system.A @ P @ system.A.T + system.Q
            K = P @ C.T @ np.linalg.inv(C @ P @ C.T + R)
            x = x + K @ (np.concatenate([y for y in ys if y.size]) - C @ x)
            P = (np.eye(4) - K @ C) @ P
            for i in range(5):
                np.testing.assert_allclose(net.x[i], x, rtol=1e-9, atol=1e-10)
                np.testing.assert_allclose(net.P[i], P, rtol=1e-9, atol=1e-12)

    def test_no_fusion_runs_local_filters(self, chain):
        system, sensors, _, W = chain
        ys = [np.full(s.dim, 0.7) for s in sensors]
        net = step(initial_network_state(system, 5), system, sensors, W, 0, ys)
        prior = system.A @ system.A.T + system.Q
        for i, s in enumerate(sensors):
            expected = prior if s.is_naive else np.linalg.inv(np.linalg.inv(prior) + 5.0 * s.C.T @ s.C)
            np.testing.assert_allclose(net.P[i], expected, rtol=1e-10, atol=1e-12)

    def test_measurement_count(self, chain):
        system, sensors, _, W = chain
        prior = predict_network(initial_network_state(system, 5), system)
        with pytest.raises(UsageError, match="5 measurements"):
            update_network(prior, sensors, W, 1, _zero_measurements(sensors)[:4])

    def test_negative_depth(self, chain):
        system, sensors, _, W = chain
        with pytest.raises(UsageError):
            step(initial_network_state(system, 5), system, sensors, W, -1, _zero_measurements(sensors))

    def test_update_needs_prior(self, chain):
        system, sensors, _, W = chain
        with pytest.raises(UsageError):
            update_network(initial_network_state(system, 5), sensors, W, 1, _zero_measurements(sensors))

    def test_prior_converges_to_modified_riccati(self, paper):
        system, sensors, _, W, d = paper
        N = W.node_count
        rmap = register_map(sensors, N)
        zeros = _zero_measurements(sensors)
        net = initial_network_state(system, N)
        for _ in range(500):
            net = update_network(predict_network(net, system), sensors, W, d, zeros, rmap)
        prior = predict_network(net, system)
        for i in range(N):
            assert norm2(prior.P[i] - node_param_steady(system, sensors, W, i, d)) <= 1e-6

    def test_replay_is_bit_identical(self, chain):
        system, sensors, _, W = chain
        rng = np.random.default_rng(10)
        inputs = [[rng.standard_normal(s.dim) for s in sensors] for _ in range(20)]
        runs = []
        for _ in range(2):
            net = initial_network_state(system, 5)
            for ys in inputs:
                net = step(net, system, sensors, W, 2, ys)
            runs.append(net)
        np.testing.assert_array_equal(runs[0].x, runs[1].x)
        np.testing.assert_array_equal(runs[0].P, runs[1].P)


def test_uniform_helper_is_complete(complete5):
    _, _, W = complete5
    np.testing.assert_array_equal(W.entries, uniform_weights(5).entries)
