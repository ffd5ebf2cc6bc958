"""The generate-and-test agent: one call to ``Agent.step`` per observation.

Per-step order:

1. imprinting generation (only when some signal is active and there is room)
2. state update s_t = u(s_{t-1}, o_t)
3. prediction y_t = f_t . w
4. TD(lambda) and step-size update with c_t as cumulant
5. utility update, then deep-trace generation up to capacity
6. pruning of each kind that is at capacity

A deep trace created in step 5 has activation 0 until the next call.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .deep_trace import generate_deep_traces
from .errors import ConfigError, NumericalDivergence
from .imprinting import generate_imprints
from .network import IMPRINT_RULES, AgentStateNetwork, FeatureKind, ObservationVector, compute_state
from .td import TRACE_INPUTS, LearnerState, reset_weight, td_step
from .tester import UtilityTrace, select_prunable, update_utilities


@dataclass
class AgentConfig:
    alpha: float = 0.01
    theta: float = 0.01
    lam: float = 0.9
    gamma: float = 0.9
    capacity_deep: int = 100
    generate_deep: int = 2
    remove_deep: int = 2
    keep_deep: float = 0.5
    capacity_imprint: int = 0
    generate_imprint: int = 2
    remove_imprint: int = 2
    keep_imprint: float = 0.5
    utility_decay: float = 0.999
    decay_min: float = 0.01
    decay_max: float = 0.99
    bias: bool = True
    adaptive: bool = True
    normalize_step: bool = True
    trace_input: str = "prediction"
    deep_enabled: bool = True
    imprint_enabled: bool = True
    imprint_include_us: bool = False
    imprint_noise_std: float | None = None
    imprint_rule: str = "sum"
    debug: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def need(ok: bool, name: str, msg: str):
            if not ok:
                raise ConfigError(msg, name)

        need(0.0 < self.alpha <= 1.0, "alpha", f"must be in (0, 1], got {self.alpha}")
        need(self.theta >= 0.0, "theta", f"must be >= 0, got {self.theta}")
        need(0.0 <= self.lam <= 1.0, "lam", f"must be in [0, 1], got {self.lam}")
        need(0.0 <= self.gamma < 1.0, "gamma", f"must be in [0, 1), got {self.gamma}")
        for name in ("capacity_deep", "generate_deep", "remove_deep",
                     "capacity_imprint", "generate_imprint", "remove_imprint"):
            value = getattr(self, name)
            need(isinstance(value, int) and not isinstance(value, bool) and value >= 0,
                 name, f"must be a non-negative integer, got {value!r}")
        for name in ("keep_deep", "keep_imprint"):
            value = getattr(self, name)
            need(0.0 <= value < 1.0, name, f"must be in [0, 1), got {value}")
        need(0.0 < self.utility_decay < 1.0, "utility_decay", f"must be in (0, 1), got {self.utility_decay}")
        need(0.0 < self.decay_min < self.decay_max < 1.0, "decay_min/decay_max",
             f"need 0 < min < max < 1, got ({self.decay_min}, {self.decay_max})")
        need(self.trace_input in TRACE_INPUTS, "trace_input", f"must be one of {TRACE_INPUTS}")
        need(self.imprint_rule in IMPRINT_RULES, "imprint_rule", f"must be one of {IMPRINT_RULES}")
        need(self.imprint_noise_std is None or self.imprint_noise_std >= 0.0,
             "imprint_noise_std", "must be >= 0")

    @classmethod
    def from_dict(cls, data: dict) -> "AgentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown keys {unknown}", "agent")
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def presence(self) -> bool:
        return not (self.deep_enabled or self.imprint_enabled)


class StepRecord(NamedTuple):
    prediction: float
    td_error: float
    n_deep: int
    n_imprint: int


class Agent:
    """Agent state network, TD learner and generate-and-test loop for one run."""

    def __init__(
        self,
        config: AgentConfig,
        n_obs: int,
        rng: np.random.Generator | int | None = None,
        us_index: int | None = None,
        context: dict | None = None,
    ):
        self.config = config
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.context = context or {}
        cd = config.capacity_deep if config.deep_enabled else 0
        ci = config.capacity_imprint if config.imprint_enabled else 0
        self.network = AgentStateNetwork(n_obs, cd, ci, bias=config.bias, debug=config.debug,
                                           imprint_rule=config.imprint_rule)
        net = self.network
        self.learner = LearnerState(
            net.prediction_size,
            net.n,
            alpha0=config.alpha,
            theta=config.theta,
            gamma=config.gamma,
            lam=config.lam,
            adaptive=config.adaptive,
            trace_input=config.trace_input,
            normalize=config.normalize_step,
        )
        self.utilities = UtilityTrace(net.n, config.utility_decay)
        candidates = np.arange(n_obs)
        if us_index is not None and not config.imprint_include_us:
            candidates = candidates[candidates != us_index]
        self.imprint_candidates = candidates
        self.decay_bounds = (config.decay_min, config.decay_max)
        self.t = 0
        self._f_prev: np.ndarray | None = None
        self._x = np.zeros(net.input_size)

    def step(self, obs: ObservationVector | np.ndarray, cumulant: float | None = None) -> StepRecord:
        if isinstance(obs, ObservationVector):
            signals, cumulant = obs.signals, obs.cumulant
        else:
            signals = obs
        cfg, net, learner = self.config, self.network, self.learner
        n, m = net.n, net.m

        if net.capacity_imprint:
            generate_imprints(
                net, learner, self.utilities, signals, self.rng, cfg.generate_imprint,
                self.imprint_candidates, cfg.imprint_noise_std,
            )

        x = self._x
        x[:n] = net.state
        x[n:] = signals
        s = compute_state(net, x)

        f = np.empty(net.prediction_size)
        f[:n] = s
        f[n:n + m] = signals
        if net.bias_enabled:
            f[-1] = 1.0
        y = float(_kernels.dot(f, learner.w))

        delta = 0.0
        if self._f_prev is not None:
            try:
                delta = td_step(learner, self._f_prev, f, cumulant)
            except NumericalDivergence as exc:
                raise NumericalDivergence(
                    self.t, exc.detail, {"config": cfg.to_dict(), **self.context}
                ) from exc

        if n:
            update_utilities(self.utilities, learner, net)
            if net.capacity_deep:
                generate_deep_traces(
                    net, learner, self.utilities, self.rng, cfg.generate_deep, self.decay_bounds
                )
                for slot in select_prunable(net, self.utilities, FeatureKind.DEEP_TRACE,
                                            cfg.keep_deep, cfg.remove_deep):
                    self._delete(slot, f)
            if net.capacity_imprint:
                for slot in select_prunable(net, self.utilities, FeatureKind.IMPRINTING,
                                            cfg.keep_imprint, cfg.remove_imprint):
                    self._delete(slot, f)
            if net.debug:
                net.check_invariants()

        self._f_prev = f
        self.t += 1
        return StepRecord(y, delta, net.n_deep, net.n_imprint)

    def _delete(self, slot: int, f: np.ndarray) -> None:
        self.network.remove(slot)
        reset_weight(self.learner, slot)
        self.utilities.values[slot] = 0.0
        f[slot] = 0.0

    def utility_quantiles(self, kind: FeatureKind, q=(0.1, 0.5, 0.9)) -> list[float]:
        live = self.network.live_slots(kind)
        if live.size == 0:
            return [float("nan")] * len(q)
        return [float(v) for v in np.quantile(self.utilities.values[live], q)]
