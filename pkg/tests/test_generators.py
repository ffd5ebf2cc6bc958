import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from agentstate.deep_trace import (
    DECAY_BOUNDS,
    generate_deep_traces,
    sample_decay,
    select_source,
    source_candidates,
)
from agentstate.imprinting import (
    add_if_new,
    generate_imprints,
    ltu_fires,
    make_imprint,
    select_observations,
    should_generate,
)
from agentstate.network import AgentStateNetwork, FeatureKind, build_input, compute_state
from agentstate.td import LearnerState
from agentstate.tester import UtilityTrace


def parts(n_obs=1, cd=0, ci=0):
    net = AgentStateNetwork(n_obs, cd, ci)
    learner = LearnerState(net.prediction_size, net.n)
    return net, learner, UtilityTrace(net.n)


class TestSampleDecay:
    def test_range(self):
        rng = np.random.default_rng(0)
        d = [sample_decay(rng) for _ in range(10_000)]
        assert min(d) > DECAY_BOUNDS[0] and max(d) < DECAY_BOUNDS[1]

    def test_mean(self):
        rng = np.random.default_rng(1)
        assert abs(np.mean([sample_decay(rng) for _ in range(100_000)]) - 0.5) < 0.02

    def test_reproducible(self):
        a = [sample_decay(np.random.default_rng(7)) for _ in range(3)]
        b = [sample_decay(np.random.default_rng(7)) for _ in range(3)]
        assert a == b


class TestSelectSource:
    def test_degenerate(self):
        net, learner, _ = parts(n_obs=3)
        learner.w[:3] = [0.0, 0.0, 1.0]
        rng = np.random.default_rng(0)
        assert {select_source(learner, net, rng) for _ in range(1000)} == {2}

    def test_proportional_to_magnitude(self):
        net, learner, _ = parts(n_obs=2)
        learner.w[:2] = [1.0, -1.0]
        rng = np.random.default_rng(1)
        picks = np.array([select_source(learner, net, rng) for _ in range(100_000)])
        assert abs(np.mean(picks == 0) - 0.5) < 0.02

    def test_unequal_weights(self):
        net, learner, _ = parts(n_obs=2)
        learner.w[:2] = [1.0, 3.0]
        rng = np.random.default_rng(2)
        picks = np.array([select_source(learner, net, rng) for _ in range(100_000)])
        assert abs(np.mean(picks == 1) - 0.75) < 0.01

    def test_uniform_when_all_zero(self):
        net, learner, _ = parts(n_obs=3)
        rng = np.random.default_rng(3)
        picks = np.array([select_source(learner, net, rng) for _ in range(30_000)])
        for j in range(3):
            assert abs(np.mean(picks == j) - 1 / 3) < 0.02

    def test_bias_and_dead_slots_never_chosen(self):
        net, learner, _ = parts(n_obs=1, cd=3)
        learner.w[:] = 1.0  # dead slots and bias carry weight but are not candidates
        rng = np.random.default_rng(4)
        assert {select_source(learner, net, rng) for _ in range(500)} == {net.n}
        np.testing.assert_array_equal(source_candidates(net), [net.n])


class TestGenerateDeepTraces:
    def test_capacity_clamp(self):
        net, learner, util = parts(n_obs=1, cd=100)
        rng = np.random.default_rng(0)
        for _ in range(99):
            net.add_deep_trace(net.n, 0.5)
        assert len(generate_deep_traces(net, learner, util, rng, 2)) == 1
        assert generate_deep_traces(net, learner, util, rng, 2) == []

    def test_sources_only_observation_in_empty_network(self):
        net, learner, util = parts(n_obs=1, cd=1)
        (slot,) = generate_deep_traces(net, learner, util, np.random.default_rng(0), 2)
        assert net.source[slot] == net.n
        assert net.state[slot] == 0.0

    def test_next_step_activation(self):
        net, learner, util = parts(n_obs=1, cd=1)
        (slot,) = generate_deep_traces(net, learner, util, np.random.default_rng(0), 1)
        s = compute_state(net, build_input(net.state, np.array([1.0]), net))
        assert s[slot] == pytest.approx(1.0 - net.decay[slot])

    def test_new_feature_state_reset_and_median_utility(self):
        net, learner, util = parts(n_obs=1, cd=4)
        for u in (0.1, 0.3, 0.5):
            slot = net.add_deep_trace(net.n, 0.5)
            util.values[slot] = u
        learner.w[3] = 9.0
        learner.z[3] = 9.0
        (slot,) = generate_deep_traces(net, learner, util, np.random.default_rng(0), 1)
        assert slot == 3
        assert learner.w[3] == 0.0 and learner.z[3] == 0.0
        assert util.values[3] == 0.3
        net.check_invariants()

    def test_reproducible(self):
        def pairs(seed):
            net, learner, util = parts(n_obs=2, cd=20)
            learner.w[net.n:net.n + 2] = [0.2, 0.7]
            rng = np.random.default_rng(seed)
            out = []
            for _ in range(10):
                for s in generate_deep_traces(net, learner, util, rng, 2):
                    out.append((int(net.source[s]), float(net.decay[s])))
            return out

        assert pairs(11) == pairs(11)
        assert pairs(11) != pairs(12)

    def test_rows_sum_to_one(self):
        net, learner, util = parts(n_obs=2, cd=50)
        generate_deep_traces(net, learner, util, np.random.default_rng(0), 50)
        live = net.live_slots(FeatureKind.DEEP_TRACE)
        assert live.size == 50
        # the stored pair is exactly (decay, 1 - decay)
        assert np.all(np.abs(net.decay[live] + (1.0 - net.decay[live]) - 1.0) <= 1e-15)
        net.check_invariants()


class TestImprintGeneration:
    @pytest.mark.parametrize("obs,expected", [((0, 0, 0), False), ((0, 1, 0), True), ((1, 1, 1), True)])
    def test_should_generate(self, obs, expected):
        assert should_generate(np.array(obs, dtype=float)) is expected

    def test_equal_weights_boundary(self):
        sel = select_observations(np.array([0.3, -0.3]), noise=np.zeros(2))
        np.testing.assert_array_equal(sel, [0, 1])

    def test_single_dominant_weight(self):
        sel = select_observations(np.array([1.0, 0.0, 0.0, 0.0]), noise=np.zeros(4))
        np.testing.assert_array_equal(sel, [0])

    def test_zero_weights_select_half(self):
        rng = np.random.default_rng(0)
        hits = np.zeros(4)
        trials = 100_000 // 4
        for _ in range(trials):
            hits[select_observations(np.zeros(4), rng)] += 1
        np.testing.assert_allclose(hits / trials, 0.5, atol=0.02)

    def test_candidates_restrict_selection(self):
        rng = np.random.default_rng(1)
        cands = np.array([0, 1, 2])
        for _ in range(200):
            sel = select_observations(np.array([0.0, 0.0, 0.0, 5.0]), rng, cands)
            assert set(sel.tolist()) <= {0, 1, 2}

    def test_noise_std_override(self):
        rng = np.random.default_rng(2)
        w = np.array([0.5, 0.3, 0.1, 0.1])
        for _ in range(100):
            sel = select_observations(w, rng, noise_std=1e-9)
            np.testing.assert_array_equal(sel, [0, 1])

    def test_make_imprint_signs(self):
        node = make_imprint(np.array([1.0, 0.0]), [0, 1])
        assert node.connections == {0: 1, 1: -1}
        assert node.activation == 1.0
        assert node.kind is FeatureKind.IMPRINTING

    def test_single_positive(self):
        node = make_imprint(np.array([1.0, 1.0]), [0])
        assert node.connections == {0: 1}
        assert ltu_fires(node.connections, np.array([1.0, 0.0]))
        assert not ltu_fires(node.connections, np.array([0.0, 1.0]))

    def test_single_negative_always_fires(self):
        node = make_imprint(np.array([0.0]), [0])
        assert node.connections == {0: -1}
        assert ltu_fires(node.connections, np.array([0.0]))
        assert ltu_fires(node.connections, np.array([1.0]))

    def test_empty_selection_rejected(self):
        with pytest.raises(ValueError):
            make_imprint(np.array([1.0]), [])

    @given(st.lists(st.sampled_from([0.0, 1.0]), min_size=1, max_size=10), st.data())
    def test_fires_on_creating_observation(self, obs, data):
        obs = np.array(obs)
        selected = data.draw(st.sets(st.integers(0, obs.size - 1), min_size=1))
        for rule in ("sum", "match"):
            assert make_imprint(obs, sorted(selected), rule).activation == 1.0

    def test_add_if_new(self):
        net = AgentStateNetwork(2, capacity_imprint=2)
        a = make_imprint(np.array([1.0, 0.0]), [0, 1])
        b = make_imprint(np.array([1.0, 1.0]), [0, 1])
        assert add_if_new(net, a) is not None
        assert add_if_new(net, a) is None
        assert add_if_new(net, b) is not None  # differs in one sign
        c = make_imprint(np.array([0.0, 0.0]), [0, 1])
        assert add_if_new(net, c) is None  # full

    def test_at_capacity_60(self):
        net = AgentStateNetwork(8, capacity_imprint=60)
        rng = np.random.default_rng(0)
        while net.n_imprint < 60:
            add_if_new(net, make_imprint(rng.integers(0, 2, 8).astype(float), range(8)))
        assert add_if_new(net, make_imprint(np.ones(8), [0])) is None

    def test_no_generation_without_activity(self):
        net, learner, util = parts(n_obs=3, ci=5)
        assert generate_imprints(net, learner, util, np.zeros(3), np.random.default_rng(0), 2) == []

    def test_only_candidate_activity_triggers(self):
        net, learner, util = parts(n_obs=3, ci=5)
        signals = np.array([0.0, 0.0, 1.0])  # only the excluded signal is on
        added = generate_imprints(net, learner, util, signals, np.random.default_rng(0), 2,
                                  candidates=np.array([0, 1]))
        assert added == []

    def test_generation_adds_distinct_live_features(self):
        net, learner, util = parts(n_obs=6, ci=30)
        rng = np.random.default_rng(0)
        for _ in range(50):
            signals = rng.integers(0, 2, 6).astype(float)
            for slot in generate_imprints(net, learner, util, signals, rng, 2):
                assert learner.w[slot] == 0.0
                conns = net.imprint_connections(slot)
                assert conns and ltu_fires(conns, signals)
        assert net.n_imprint <= 30
        net.check_invariants()
