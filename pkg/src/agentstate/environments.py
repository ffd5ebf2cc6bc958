"""Trace conditioning and trace patterning stimulus streams.

Both environments emit one ``ObservationVector`` per step and, on the
first step of each trial, a ``TrialAnnotation``. The US is both the
cumulant and (unless disabled) the last observation signal. Trials follow
each other back to back: the next trial starts ITI steps after the (actual
or would-be) US onset, ITI ~ UniformInt[iti_min, iti_max].
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import ConfigError
from .network import ObservationVector


class TrialAnnotation(NamedTuple):
    trial_index: int
    cs_onset_step: int
    us_onset_step: int | None
    pattern_present: bool = True


def _default_rates() -> tuple[float, ...]:
    return tuple(1.0 / (10 * k) for k in range(1, 11))


def _check_common(cfg) -> None:
    if cfg.us_duration < 1:
        raise ConfigError("must be >= 1", "us_duration")
    if not 0 < cfg.iti_min <= cfg.iti_max:
        raise ConfigError(f"need 0 < iti_min <= iti_max, got ({cfg.iti_min}, {cfg.iti_max})", "iti")
    if cfg.iti_min <= cfg.isi + cfg.us_duration:
        raise ConfigError("iti_min must exceed isi + us_duration", "iti_min")


@dataclass
class TraceConditioningConfig:
    isi: int = 10
    cs_duration: int = 4
    us_duration: int = 2
    iti_min: int = 80
    iti_max: int = 120
    distractor_rates: tuple[float, ...] = field(default_factory=_default_rates)
    distractor_duration: int = 4
    us_in_obs: bool = True

    def __post_init__(self):
        self.distractor_rates = tuple(float(r) for r in self.distractor_rates)
        if self.cs_duration < 1:
            raise ConfigError("must be >= 1", "cs_duration")
        if self.isi < self.cs_duration:
            raise ConfigError("isi must be >= cs_duration", "isi")
        _check_common(self)
        if any(not 0.0 <= r <= 1.0 for r in self.distractor_rates):
            raise ConfigError("rates must be probabilities", "distractor_rates")
        if self.distractor_duration < 1:
            raise ConfigError("must be >= 1", "distractor_duration")

    @property
    def gamma(self) -> float:
        return 1.0 - 1.0 / self.isi

    @property
    def n_obs(self) -> int:
        return 1 + len(self.distractor_rates) + int(self.us_in_obs)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["distractor_rates"] = list(self.distractor_rates)
        return d


@dataclass
class TracePatterningConfig:
    num_cs: int = 6
    num_distractors: int = 10
    stimulus_duration: int = 4
    isi: int = 10
    us_duration: int = 2
    distractor_prob: float = 0.5
    pattern_rate: float = 0.5
    iti_min: int = 80
    iti_max: int = 120
    distractor_mode: str = "trial"
    pattern: tuple[int, ...] | None = None
    us_in_obs: bool = True

    def __post_init__(self):
        if self.num_cs < 2 or self.num_cs % 2:
            raise ConfigError("need an even number of CSs >= 2", "num_cs")
        if self.stimulus_duration < 1 or self.isi < self.stimulus_duration:
            raise ConfigError("need 1 <= stimulus_duration <= isi", "stimulus_duration")
        _check_common(self)
        for name in ("distractor_prob", "pattern_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError("must be a probability", name)
        if self.distractor_mode not in ("trial", "step"):
            raise ConfigError("must be 'trial' or 'step'", "distractor_mode")
        if self.pattern is not None:
            self.pattern = tuple(int(v) for v in self.pattern)
            if len(self.pattern) != self.num_cs or set(self.pattern) - {0, 1}:
                raise ConfigError("pattern must be a 0/1 vector over the CSs", "pattern")
            if sum(self.pattern) != self.num_cs // 2:
                raise ConfigError("pattern needs exactly half of the CSs active", "pattern")

    @property
    def gamma(self) -> float:
        return 0.9

    @property
    def n_obs(self) -> int:
        return self.num_cs + self.num_distractors + int(self.us_in_obs)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if self.pattern is not None:
            d["pattern"] = list(self.pattern)
        return d


class TraceConditioning:
    """Signals: [CS, distractor_1 .. distractor_k, US?]."""

    def __init__(self, config: TraceConditioningConfig, rng: np.random.Generator | int | None = None):
        self.config = config
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.n_obs = config.n_obs
        self.us_index = self.n_obs - 1 if config.us_in_obs else None
        self._rates = np.array(config.distractor_rates)
        self._remaining = np.zeros(len(config.distractor_rates), dtype=np.int64)
        self._block = np.zeros((0, self._rates.size))
        self._row = 0
        self.t = 0
        self.trial_index = -1
        self._next_onset = 0
        self._cs_onset = -(10**9)
        self._us_onset = -(10**9)

    def step(self) -> tuple[ObservationVector, TrialAnnotation | None]:
        cfg, t = self.config, self.t
        annotation = None
        if t == self._next_onset:
            self.trial_index += 1
            self._cs_onset = t
            self._us_onset = t + cfg.isi
            self._next_onset = self._us_onset + int(self.rng.integers(cfg.iti_min, cfg.iti_max + 1))
            annotation = TrialAnnotation(self.trial_index, t, self._us_onset, True)

        k = self._rates.size
        signals = np.zeros(self.n_obs)
        signals[0] = self._cs_onset <= t < self._cs_onset + cfg.cs_duration
        us = float(self._us_onset <= t < self._us_onset + cfg.us_duration)
        if k:
            if self._row == self._block.shape[0]:
                self._refill()
            signals[1:1 + k] = self._block[self._row]
            self._row += 1
        if self.us_index is not None:
            signals[self.us_index] = us
        self.t += 1
        return ObservationVector.trusted(signals, us), annotation


    def _refill(self, steps: int = 1024) -> None:
        # Onsets are Bernoulli per step and suppressed while the distractor is on.
        draws = self.rng.random((steps, self._rates.size))
        self._block = np.empty_like(draws)
        _kernels.distractor_block(draws, self._rates, self._remaining,
                                  self.config.distractor_duration, self._block)
        self._row = 0


class TracePatterning:
    """Signals: [CS_1 .. CS_c, distractor_1 .. distractor_k, US?].

    ``pattern`` (drawn once per run unless fixed in the config) is the CS
    configuration that is followed by the US.
    """

    def __init__(self, config: TracePatterningConfig, rng: np.random.Generator | int | None = None):
        self.config = config
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        c = config.num_cs
        if config.pattern is not None:
            self.pattern = np.array(config.pattern, dtype=np.float64)
        else:
            self.pattern = np.zeros(c)
            self.pattern[self.rng.permutation(c)[: c // 2]] = 1.0
        self._pattern_code = int(self.pattern @ (1 << np.arange(c)))
        self.n_obs = config.n_obs
        self.us_index = self.n_obs - 1 if config.us_in_obs else None
        self.t = 0
        self.trial_index = -1
        self._next_onset = 0
        self._onset = -(10**9)
        self._us_onset: int | None = None
        self._cs = np.zeros(c)
        self._distractors = np.zeros(config.num_distractors)

    def _config_bits(self, code: int) -> np.ndarray:
        return ((code >> np.arange(self.config.num_cs)) & 1).astype(np.float64)

    def step(self) -> tuple[ObservationVector, TrialAnnotation | None]:
        cfg, t, rng = self.config, self.t, self.rng
        annotation = None
        if t == self._next_onset:
            self.trial_index += 1
            self._onset = t
            present = bool(rng.random() < cfg.pattern_rate)
            if present:
                self._cs = self.pattern.copy()
            else:
                code = int(rng.integers((1 << cfg.num_cs) - 1))
                if code >= self._pattern_code:
                    code += 1
                self._cs = self._config_bits(code)
            if cfg.distractor_mode == "trial":
                self._distractors = (rng.random(cfg.num_distractors) < cfg.distractor_prob).astype(np.float64)
            self._us_onset = t + cfg.isi if present else None
            self._next_onset = t + cfg.isi + int(rng.integers(cfg.iti_min, cfg.iti_max + 1))
            annotation = TrialAnnotation(self.trial_index, t, self._us_onset, present)

        c, k = cfg.num_cs, cfg.num_distractors
        signals = np.zeros(self.n_obs)
        if self._onset <= t < self._onset + cfg.stimulus_duration:
            signals[:c] = self._cs
            if cfg.distractor_mode == "step":
                signals[c:c + k] = rng.random(k) < cfg.distractor_prob
            else:
                signals[c:c + k] = self._distractors
        us = 0.0
        if self._us_onset is not None and self._us_onset <= t < self._us_onset + cfg.us_duration:
            us = 1.0
        if self.us_index is not None:
            signals[self.us_index] = us
        self.t += 1
        return ObservationVector.trusted(signals, us), annotation
