import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agentstate.environments import (
    TraceConditioning,
    TraceConditioningConfig,
    TracePatterning,
    TracePatterningConfig,
)
from agentstate.errors import ConfigError


def roll(env, steps):
    signals, cumulants, anns = [], [], []
    for _ in range(steps):
        o, a = env.step()
        signals.append(o.signals)
        cumulants.append(o.cumulant)
        if a is not None:
            anns.append(a)
    return np.array(signals), np.array(cumulants), anns


@pytest.fixture(scope="module")
def stream():
    return roll(TraceConditioning(TraceConditioningConfig(), 0), 50_000)


@pytest.fixture(scope="module")
def run():
    env = TracePatterning(TracePatterningConfig(), 1)
    sig, c, anns = roll(env, 10_000 * 115)
    return env, sig, c, anns


class TestTraceConditioning:
    def test_isi(self, stream):
        _, _, anns = stream
        assert all(a.us_onset_step - a.cs_onset_step == 10 for a in anns)

    def test_cs_lasts_four_steps(self, stream):
        sig, _, anns = stream
        for a in anns[:-1]:
            t = a.cs_onset_step
            assert sig[t:t + 4, 0].tolist() == [1, 1, 1, 1]
            assert sig[t + 4, 0] == 0 and (t == 0 or sig[t - 1, 0] == 0)
        assert sig[:, 0].sum() == sum(min(4, len(sig) - a.cs_onset_step) for a in anns)

    def test_us_follows_cs_and_is_the_cumulant(self, stream):
        sig, c, anns = stream
        np.testing.assert_array_equal(sig[:, -1], c)
        us_steps = set(np.flatnonzero(c).tolist())
        expected = {a.us_onset_step + k for a in anns for k in range(2)}
        assert us_steps == {t for t in expected if t < len(c)}

    def test_iti_range(self, stream):
        _, _, anns = stream
        gaps = np.diff([a.cs_onset_step for a in anns]) - 10
        assert gaps.min() >= 80 and gaps.max() <= 120

    def test_distractor_rates(self, stream):
        sig, _, _ = stream
        onsets = (sig[1:, 1:11] == 1) & (sig[:-1, 1:11] == 0)
        rate = onsets.mean(axis=0)
        # an onset can only happen while off: rate_on = p / (1 + 3p) for 4-step episodes
        p = np.array([1 / (10 * k) for k in range(1, 11)])
        np.testing.assert_allclose(rate, p / (1 + 3 * p), rtol=0.25)

    def test_distractor_episodes_last_four_steps(self, stream):
        sig, _, _ = stream
        col = sig[:, 1]
        runs = np.diff(np.flatnonzero(np.diff(np.concatenate(([0], col, [0])))))[::2]
        assert np.all(runs % 4 == 0)

    def test_binary(self, stream):
        sig, _, _ = stream
        assert set(np.unique(sig)) <= {0.0, 1.0}

    def test_gamma(self):
        assert TraceConditioningConfig(isi=20).gamma == pytest.approx(0.95)

    def test_expected_length(self):
        # 20000 trials at ISI 30 with mean ITI 100
        assert 2e6 <= 20000 * (30 + 100) <= 2e7

    def test_reproducible(self):
        a = roll(TraceConditioning(TraceConditioningConfig(), 5), 3000)
        b = roll(TraceConditioning(TraceConditioningConfig(), 5), 3000)
        np.testing.assert_array_equal(a[0], b[0])

    def test_us_not_in_obs(self):
        env = TraceConditioning(TraceConditioningConfig(us_in_obs=False), 0)
        assert env.n_obs == 11 and env.us_index is None

    @pytest.mark.parametrize("kw", [{"isi": 2}, {"iti_min": 5}, {"distractor_rates": (1.5,)},
                                    {"us_duration": 0}, {"iti_min": 130}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            TraceConditioningConfig(**kw)


class TestTracePatterning:
    def test_pattern_has_three_active(self, run):
        env, *_ = run
        assert env.pattern.sum() == 3

    def test_pattern_frequency(self, run):
        _, _, _, anns = run
        assert len(anns) >= 10_000
        assert abs(np.mean([a.pattern_present for a in anns]) - 0.5) < 0.01

    def test_us_only_after_pattern(self, run):
        env, sig, c, anns = run
        expected = set()
        for a in anns:
            t = a.cs_onset_step
            if a.pattern_present:
                assert a.us_onset_step == t + 10
                expected |= {t + 10, t + 11}
                np.testing.assert_array_equal(sig[t, :6], env.pattern)
            else:
                assert a.us_onset_step is None
                assert not np.array_equal(sig[t, :6], env.pattern)
        assert set(np.flatnonzero(c).tolist()) == {t for t in expected if t < len(c)}

    def test_stimuli_co_onset_for_four_steps(self, run):
        _, sig, _, anns = run
        for a in anns[:200]:
            t = a.cs_onset_step
            block = sig[t:t + 4, :16]
            assert np.all(block == block[0])
            assert np.all(sig[t + 4:t + 10, :16] == 0)

    def test_non_pattern_codes_uniform(self, run):
        env, sig, _, anns = run
        codes = [int(sig[a.cs_onset_step, :6] @ (1 << np.arange(6))) for a in anns if not a.pattern_present]
        counts = np.bincount(codes, minlength=64)
        assert counts[int(env.pattern @ (1 << np.arange(6)))] == 0
        assert np.count_nonzero(counts) == 63
        expected = len(codes) / 63
        chi2 = ((counts[counts > 0] - expected) ** 2 / expected).sum()
        assert chi2 < 110  # 62 degrees of freedom, p ~ 1e-4

    def test_distractor_probability(self, run):
        _, sig, _, anns = run
        d = np.array([sig[a.cs_onset_step, 6:16] for a in anns])
        np.testing.assert_allclose(d.mean(axis=0), 0.5, atol=0.02)

    def test_step_mode_varies_within_trial(self):
        env = TracePatterning(TracePatterningConfig(distractor_mode="step"), 2)
        sig, _, anns = roll(env, 3000)
        varied = [np.any(sig[a.cs_onset_step:a.cs_onset_step + 4, 6:16] != sig[a.cs_onset_step, 6:16])
                  for a in anns]
        assert any(varied)

    def test_fixed_pattern(self):
        env = TracePatterning(TracePatterningConfig(pattern=(1, 1, 1, 0, 0, 0)), 0)
        np.testing.assert_array_equal(env.pattern, [1, 1, 1, 0, 0, 0])

    @pytest.mark.parametrize("kw", [{"pattern": (1, 1, 1, 1, 0, 0)}, {"num_cs": 3},
                                    {"distractor_mode": "x"}, {"pattern_rate": 2.0}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            TracePatterningConfig(**kw)

    def test_gamma(self):
        assert TracePatterningConfig().gamma == 0.9

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_reproducible_and_binary(self, seed):
        a = roll(TracePatterning(TracePatterningConfig(), seed), 1500)
        b = roll(TracePatterning(TracePatterningConfig(), seed), 1500)
        np.testing.assert_array_equal(a[0], b[0])
        assert set(np.unique(a[0])) <= {0.0, 1.0}
