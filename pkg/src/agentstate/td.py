"""Linear semi-gradient TD(lambda) with per-weight step-size adaptation.

Time alignment: ``td_step`` is called at step t+1 with f_t (``f_prev``),
f_{t+1} (``f_curr``) and the cumulant c_{t+1} that arrived with o_{t+1}:

    delta = c_{t+1} + gamma * f_{t+1}.w - f_t.w
    z     = gamma * lambda * z + f_t
    w    += alpha * delta * z

Step sizes follow a semi-gradient TD form of IDBD with exponential
parameterisation (alpha_i = exp(beta_i)):

    beta_i += theta * delta * z_i * h_i
    w_i    += alpha_i * delta * z_i
    h_i     = h_i * max(0, 1 - alpha_i * f_i * z_i) + alpha_i * delta * z_i

When sum_i alpha_i * f_i * z_i exceeds 1 the effective step sizes of that
update are scaled down to bring it back to 1.
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels
from .errors import ConfigError, ContractViolation, NumericalDivergence

TRACE_INPUTS = ("prediction", "state")


class LearnerState:
    """Weights, eligibility trace and step-size adaptation state.

    ``n_features`` is the length of the generated-feature segment at the
    front of f; only those weights may be reset. With ``trace_input="state"``
    the eligibility trace accumulates the feature segment only, so
    observation and bias weights never learn.
    """

    def __init__(
        self,
        size: int,
        n_features: int = 0,
        *,
        alpha0: float = 0.01,
        theta: float = 0.01,
        gamma: float = 0.9,
        lam: float = 0.9,
        adaptive: bool = True,
        trace_input: str = "prediction",
        normalize: bool = True,
    ):
        if not 0.0 < alpha0 <= 1.0:
            raise ConfigError(f"must be in (0, 1], got {alpha0}", "alpha")
        if theta < 0.0:
            raise ConfigError(f"must be >= 0, got {theta}", "theta")
        if not 0.0 <= gamma < 1.0:
            raise ConfigError(f"must be in [0, 1), got {gamma}", "gamma")
        if not 0.0 <= lam <= 1.0:
            raise ConfigError(f"must be in [0, 1], got {lam}", "lambda")
        if trace_input not in TRACE_INPUTS:
            raise ConfigError(f"must be one of {TRACE_INPUTS}", "trace_input")
        if not 0 <= n_features <= size:
            raise ContractViolation("feature segment larger than the weight vector")
        self.size = size
        self.n_features = n_features
        self.alpha0 = alpha0
        self.theta = theta
        self.gamma = gamma
        self.lam = lam
        self.adaptive = adaptive
        self.trace_input = trace_input
        self.normalize = normalize
        self.log_alpha0 = math.log(alpha0)

        self.w = np.zeros(size)
        self.z = np.zeros(size)
        self.beta = np.full(size, self.log_alpha0)
        self.h = np.zeros(size)
        self.steps = 0

    @property
    def step_sizes(self) -> np.ndarray:
        if self.adaptive:
            return np.exp(self.beta)
        return np.full(self.size, self.alpha0)


def td_step(learner: LearnerState, f_prev: np.ndarray, f_curr: np.ndarray, cumulant: float) -> float:
    """One TD(lambda) update; returns the TD error."""
    if f_prev.shape[0] != learner.size or f_curr.shape[0] != learner.size:
        raise ContractViolation(
            f"feature vectors of length {f_prev.shape[0]}/{f_curr.shape[0]} "
            f"for {learner.size} weights"
        )
    learner.steps += 1
    trace_limit = learner.size if learner.trace_input == "prediction" else learner.n_features
    delta, wsum = _kernels.td_update(
        learner.w, learner.z, learner.beta, learner.h, f_prev, f_curr, float(cumulant),
        learner.gamma, learner.lam, learner.theta, learner.alpha0,
        learner.adaptive, learner.normalize, trace_limit,
    )
    if not math.isfinite(delta):
        raise NumericalDivergence(learner.steps, "TD error")
    if not math.isfinite(wsum):
        raise NumericalDivergence(learner.steps, "weights")
    return delta


def reset_weight(learner: LearnerState, index: int) -> None:
    """Zero a generated feature's weight, trace and adaptation state."""
    if not 0 <= index < learner.n_features:
        raise ContractViolation(
            f"index {index} is outside the feature segment [0, {learner.n_features}); "
            "observation weights are never reset"
        )
    learner.w[index] = 0.0
    learner.z[index] = 0.0
    learner.beta[index] = learner.log_alpha0
    learner.h[index] = 0.0
