"""Tests for the control filter update laws, per node and node-stacked."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from app.services.control.control_service import (
    ControlFilterState,
    ControlNetwork,
    FilteredReferenceBank,
    control_output,
    cost,
    filtered_reference_step,
    local_gradient,
    mefxlms_update,
    mgdfxlms_update,
    wcfxlms_update,
)
from app.services.scene.scene_service import synthesize_scene
from app.services.signal.signal_service import NoiseSource, TappedDelayLine
from app.services.simulation.simulation_service import run_scenario
from app.utils.exceptions import ConfigurationError, NumericalAbortError, ProtocolError
from app.utils.models import GradientFusion

pytestmark = pytest.mark.unit


def _line(samples, capacity=None):
    line = TappedDelayLine(capacity or len(samples))
    for x in samples:
        line.push(x)
    return line


def _fed_bank(scene, x, capacity, cross):
    """Bank and reference line after streaming ``x`` through the scene estimates."""
    bank = FilteredReferenceBank(scene.nodes, capacity, cross=cross)
    line = TappedDelayLine(max(capacity, scene.estimate_length))
    for sample in x:
        line.push(sample)
        bank.feed(scene, line)
    return bank, line


# ---------------------------------------------------------------------------
# Per-node operations
# ---------------------------------------------------------------------------


class TestPerNode:
    def test_control_output(self):
        state = ControlFilterState(np.array([1.0, 2.0]), np.zeros(2), mu=0.1)
        assert control_output(state, _line([3.0, 4.0])) == pytest.approx(10.0)

    def test_local_gradient_carries_step_size(self):
        state = ControlFilterState.zeros(2, mu=0.1)
        assert_allclose(local_gradient(state, np.array([1.0, 2.0]), 2.0), [0.2, 0.4])

    def test_local_gradient_extended_taps(self):
        state = ControlFilterState.zeros(2, mu=1.0)
        g = local_gradient(state, _line([1.0, 2.0, 3.0, 4.0]), 1.0, taps=4)
        assert_allclose(g, [4.0, 3.0, 2.0, 1.0])

    def test_filtered_reference_step(self, scene3):
        line = _line([1.0, 0.0, 0.0], capacity=scene3.estimate_length)
        out = filtered_reference_step(line, scene3.estimate(0, 1))
        assert out == pytest.approx(scene3.secondary_est[0, 1, 2])

    def test_wcfxlms_hand_example(self):
        state = ControlFilterState(np.array([1.0, 0.0]), np.zeros(2), mu=0.1, alpha=2.0)
        wcfxlms_update(state, np.array([1.0, 1.0]), 1.0)
        assert_allclose(state.w, [0.9, 0.1])
        assert_allclose(state.w_center, [0.0, 0.0])

    def test_wcfxlms_without_penalty_is_fxlms(self, rng):
        w0 = rng.standard_normal(4)
        hist = rng.standard_normal(4)
        a = ControlFilterState(w0.copy(), rng.standard_normal(4), mu=0.05, alpha=0.0)
        wcfxlms_update(a, hist, 0.7)
        assert_allclose(a.w, w0 + 0.05 * 0.7 * hist)

    def test_wcfxlms_relaxes_toward_center(self):
        state = ControlFilterState(np.array([2.0, -1.0]), np.array([1.0, 1.0]), mu=0.1, alpha=2.0)
        for _ in range(25):
            wcfxlms_update(state, np.zeros(2), 0.0)
        assert_allclose(state.w - state.w_center, 0.8**25 * np.array([1.0, -2.0]))

    def test_wcfxlms_contraction_required(self):
        state = ControlFilterState.zeros(2, mu=0.5, alpha=2.0)
        with pytest.raises(ConfigurationError):
            wcfxlms_update(state, np.zeros(2), 0.0)

    @pytest.mark.parametrize("seed", range(100))
    def test_wcfxlms_step_follows_cost_gradient(self, seed):
        """Increment is -μ/2 times d/dw of e² + α‖w̃ - w‖² with e frozen at n."""
        rng = np.random.default_rng(seed)
        taps = int(rng.integers(2, 9))
        s = rng.standard_normal(int(rng.integers(1, 7)))
        x = rng.standard_normal(40)
        w = rng.standard_normal(taps)
        center = rng.standard_normal(taps)
        mu = float(rng.uniform(1e-3, 0.1))
        alpha = float(rng.uniform(0.0, 5.0))
        d = float(rng.standard_normal())

        def error(weights):
            y = np.convolve(x, weights)[: x.size]
            return d - np.convolve(y, s)[: x.size][-1]

        def objective(weights):
            state = ControlFilterState(weights, center.copy(), mu, alpha)
            return cost(error(weights), state)

        xprime = np.convolve(x, s)[: x.size][::-1]
        state = ControlFilterState(w.copy(), center.copy(), mu, alpha)
        wcfxlms_update(state, xprime, error(w))
        increment = state.w - w

        h = 1e-6
        basis = np.eye(taps)
        numeric = np.array(
            [
                (objective(w + h * basis[i]) - objective(w - h * basis[i])) / (2 * h)
                for i in range(taps)
            ]
        )
        assert_allclose(increment, -0.5 * mu * numeric, rtol=1e-5, atol=1e-7 * mu)

    def test_cost(self):
        state = ControlFilterState(np.array([1.0, 0.0]), np.array([0.0, 1.0]), mu=0.1, alpha=3.0)
        assert cost(2.0, state) == pytest.approx(4.0 + 3.0 * 2.0)

    def test_state_validation(self):
        with pytest.raises(ConfigurationError):
            ControlFilterState(np.zeros(2), np.zeros(3), mu=0.1)
        with pytest.raises(ConfigurationError):
            ControlFilterState.zeros(2, mu=0.0)
        with pytest.raises(ConfigurationError):
            ControlFilterState.zeros(2, mu=0.1, alpha=-1.0)


class TestMixedGradient:
    def test_truncated_hand_example(self):
        state = ControlFilterState.zeros(3, mu=1.0)
        own = np.array([1.0, 0.0, 0.0])
        received = [(np.array([1.0, 2.0, 3.0]), np.array([1.0, 1.0]))]
        mgdfxlms_update(state, own, received, GradientFusion.TRUNCATED)
        assert_allclose(state.w, [2.0, 3.0, 5.0])

    def test_aligned_hand_example(self):
        state = ControlFilterState.zeros(3, mu=1.0)
        received = [(np.array([1.0, 2.0, 3.0, 4.0]), np.array([1.0, 0.5]))]
        mgdfxlms_update(state, np.zeros(3), received, GradientFusion.ALIGNED)
        assert_allclose(state.w, [2.0, 3.5, 5.0])

    def test_without_neighbours_is_fxlms(self):
        state = ControlFilterState(np.ones(2), np.zeros(2), mu=1.0)
        mgdfxlms_update(state, np.array([0.5, -0.5]), [])
        assert_allclose(state.w, [1.5, 0.5])

    def test_gradient_length_checked(self):
        state = ControlFilterState.zeros(3, mu=1.0)
        with pytest.raises(ProtocolError):
            mgdfxlms_update(state, np.zeros(2), [])
        with pytest.raises(ProtocolError):
            mgdfxlms_update(
                state, np.zeros(3), [(np.zeros(3), np.ones(2))], GradientFusion.ALIGNED
            )


# ---------------------------------------------------------------------------
# Filtered reference bank
# ---------------------------------------------------------------------------


class TestFilteredReferenceBank:
    def test_cross_lines_follow_estimates(self, scene3, rng):
        x = rng.standard_normal(50)
        bank, _ = _fed_bank(scene3, x, 8, cross=True)
        for k in range(3):
            for m in range(3):
                expected = np.convolve(x, scene3.secondary_est[m, k])[:50][::-1][:8]
                assert_allclose(bank.line(k, m), expected, atol=1e-12)

    def test_self_bank_matches_cross_diagonal(self, scene3, rng):
        x = rng.standard_normal(30)
        cross, _ = _fed_bank(scene3, x, 8, cross=True)
        own, _ = _fed_bank(scene3, x, 8, cross=False)
        assert_allclose(own.self_window(8), cross.self_window(8))

    def test_self_bank_has_no_cross_lines(self):
        bank = FilteredReferenceBank(3, 4, cross=False)
        with pytest.raises(ConfigurationError):
            bank.line(0, 1)
        with pytest.raises(ConfigurationError):
            bank.cross_window(4)

    def test_reference_line_too_short(self, scene3):
        bank = FilteredReferenceBank(3, 4)
        with pytest.raises(ConfigurationError):
            bank.feed(scene3, TappedDelayLine(scene3.estimate_length - 1))


# ---------------------------------------------------------------------------
# Node-stacked network
# ---------------------------------------------------------------------------


class TestControlNetwork:
    def test_states_view_network_rows(self):
        net = ControlNetwork(2, 3, [0.1, 0.2], [0.0, 1.0])
        net.states[1].w[0] = 5.0
        assert net.weights[1, 0] == 5.0
        net.weights[0, 2] = -1.0
        assert net.states[0].w[2] == -1.0
        assert net.states[1].alpha == 1.0

    def test_outputs(self, rng):
        net = ControlNetwork(2, 3, [0.1, 0.1], [0.0, 0.0])
        net.weights[...] = rng.standard_normal((2, 3))
        line = _line(rng.standard_normal(5))
        assert_allclose(
            net.outputs(line), [control_output(s, line) for s in net.states]
        )

    def test_fxlms_and_wcfxlms_match_per_node(self, scene3, rng):
        bank, _ = _fed_bank(scene3, rng.standard_normal(40), 6, cross=False)
        errors = rng.standard_normal(3)
        net = ControlNetwork(3, 6, [0.01, 0.02, 0.03], [5.0, 10.0, 0.0])
        net.weights[...] = rng.standard_normal((3, 6))
        net.centers[...] = rng.standard_normal((3, 6))
        states = [
            ControlFilterState(s.w.copy(), s.w_center.copy(), s.mu, s.alpha)
            for s in net.states
        ]

        net.apply_wcfxlms(net.gradients(errors, bank.self_window(6)))
        for k, state in enumerate(states):
            wcfxlms_update(state, bank.self_window(6)[k], errors[k])
            assert_allclose(net.weights[k], state.w, rtol=1e-12)

    def test_wcfxlms_contraction_required(self):
        net = ControlNetwork(2, 2, [0.5, 0.1], [2.0, 1.0])
        with pytest.raises(ConfigurationError):
            net.apply_wcfxlms(np.zeros((2, 2)))

    def test_mefxlms_matches_per_node(self, scene3, rng):
        bank, _ = _fed_bank(scene3, rng.standard_normal(40), 6, cross=True)
        errors = rng.standard_normal(3)
        net = ControlNetwork(3, 6, [0.01, 0.02, 0.03], [0.0] * 3)
        states = [ControlFilterState.zeros(6, s.mu) for s in net.states]

        net.apply_mefxlms(errors, bank.cross_window(6))
        mefxlms_update(states, bank, list(errors))
        for k in range(3):
            assert_allclose(net.weights[k], states[k].w, rtol=1e-12, atol=1e-15)

    @pytest.mark.parametrize("fusion", list(GradientFusion))
    def test_mgdfxlms_matches_per_node(self, scene3, rng, fusion):
        length, l_c = 6, 3
        taps = length + l_c - 1 if fusion is GradientFusion.ALIGNED else length
        bank, _ = _fed_bank(scene3, rng.standard_normal(40), taps, cross=False)
        errors = rng.standard_normal(3)
        kernel = rng.standard_normal((3, 3, l_c))
        kernel[np.arange(3), np.arange(3)] = 0.0

        net = ControlNetwork(3, length, [0.01, 0.02, 0.03], [0.0] * 3)
        grads = net.gradients(errors, bank.self_window(taps))
        net.apply_mgdfxlms(grads, kernel, fusion)

        for k in range(3):
            state = ControlFilterState.zeros(length, net.mu[k])
            received = [(grads[m], kernel[m, k]) for m in range(3) if m != k]
            mgdfxlms_update(state, grads[k, :length], received, fusion)
            assert_allclose(net.weights[k], state.w, rtol=1e-12, atol=1e-15)

    def test_aligned_needs_extended_gradients(self):
        net = ControlNetwork(2, 4, [0.1, 0.1], [0.0, 0.0])
        with pytest.raises(ProtocolError):
            net.apply_mgdfxlms(np.zeros((2, 4)), np.zeros((2, 2, 3)), GradientFusion.ALIGNED)

    def test_aligned_mixed_gradient_equals_centralized(self, factorable3, rng):
        """With exact compensation, distributed gradient fusion reproduces MEFxLMS."""
        scene, kernel = factorable3.scene, factorable3.compensation
        length, l_c = 12, kernel.shape[2]
        mu = [0.01] * 3
        x = rng.standard_normal(80)
        errors = rng.standard_normal(3)

        cross, _ = _fed_bank(scene, x, length, cross=True)
        own, _ = _fed_bank(scene, x, length + l_c - 1, cross=False)

        central = ControlNetwork(3, length, mu, [0.0] * 3)
        central.apply_mefxlms(errors, cross.cross_window(length))
        distributed = ControlNetwork(3, length, mu, [0.0] * 3)
        distributed.apply_mgdfxlms(
            distributed.gradients(errors, own.self_window(length + l_c - 1)),
            kernel,
            GradientFusion.ALIGNED,
        )
        assert_allclose(distributed.weights, central.weights, rtol=1e-10, atol=1e-14)

    def test_single_node_mixed_gradient(self):
        net = ControlNetwork(1, 3, [0.1], [0.0])
        net.apply_mgdfxlms(np.ones((1, 5)), np.zeros((1, 1, 3)), GradientFusion.ALIGNED)
        assert_allclose(net.weights, [[1.0, 1.0, 1.0]])

    def test_reset_and_differences(self):
        net = ControlNetwork(2, 2, [0.1, 0.1], [0.0, 0.0])
        net.weights[...] = 3.0
        net.centers[...] = 1.0
        assert_allclose(net.weight_differences(), 2.0)
        assert net.is_finite()
        net.weights[0, 0] = np.nan
        assert not net.is_finite()
        net.reset()
        assert not np.any(net.weights)
        assert not np.any(net.centers)


@pytest.mark.slow
class TestCrosstalk:
    def test_centralized_control_reduces_coupled_noise(self, make_config):
        """MEFxLMS on a strongly coupled scene drives the residual well below the disturbance."""
        config = make_config(
            algorithm="MEFxLMS",
            nodes=2,
            filter_length=32,
            duration=2.0,
            step_size=2e-3,
            anse_window=2000,
            scene={"synthesis": {"cross_attenuation": 0.6}},
        )
        scene = synthesize_scene(config.scene.synthesis, 2, fs=config.fs, seed=config.scene_seed)
        source = NoiseSource(config.noise, config.fs, seed=config.noise_seed)
        log = run_scenario(config, scene, source)
        assert log.final_anse < -3.0



    def test_penalty_keeps_strongly_coupled_nodes_bounded(self, make_config):
        """The penalty bounds filters that diverge without it at heavy crosstalk."""

        def run(penalty):
            config = make_config(
                algorithm="WCFxLMS",
                duration=5.0,
                step_size=5e-3,
                penalty=penalty,
                scene={"synthesis": {"cross_attenuation": 0.9}},
            )
            scene = synthesize_scene(
                config.scene.synthesis, config.nodes, fs=config.fs, seed=config.scene_seed
            )
            source = NoiseSource(config.noise, config.fs, seed=config.noise_seed)
            return run_scenario(config, scene, source)

        constrained = run(20.0)
        assert constrained.samples == 40000
        assert np.all(np.isfinite(constrained.weights))
        assert np.all(np.isfinite(constrained.errors))
        bound = np.linalg.norm(constrained.weights)
        assert bound < 1.0
        peak = np.max(np.abs(constrained.disturbances))
        assert np.max(np.abs(constrained.errors[-4000:])) < 10.0 * peak

        try:
            plain = run(0.0)
        except NumericalAbortError:
            return
        assert np.linalg.norm(plain.weights) > 10.0 * bound
