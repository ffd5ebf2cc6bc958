"""Offline return computation, squared-return-error binning and aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, ContractViolation

TRUNCATION_EPSILON = 1e-6


@dataclass
class ReturnSeries:
    """``returns[t]`` is G_t = sum_k gamma^k c_{t+k+1}.

    The last ``horizon`` entries are missing future cumulants beyond the log
    and are flagged False in ``valid``.
    """

    returns: np.ndarray
    valid: np.ndarray
    horizon: int
    truncation_epsilon: float = TRUNCATION_EPSILON


@dataclass
class BinnedError:
    bin_size: int
    msre: np.ndarray
    counts: np.ndarray

    @property
    def steps(self) -> np.ndarray:
        """Index of the first step covered by each bin."""
        return np.arange(self.msre.size) * self.bin_size

    @property
    def full(self) -> np.ndarray:
        return self.counts == self.bin_size


@dataclass
class AggregatedError:
    mean: np.ndarray
    stderr: np.ndarray
    n_runs: int
    single_run: bool


def truncation_horizon(gamma: float, epsilon: float = TRUNCATION_EPSILON) -> int:
    """Steps after which gamma^k drops below ``epsilon``."""
    if gamma <= 0.0:
        return 1
    return max(1, math.ceil(math.log(epsilon) / math.log(gamma)))


def compute_returns(cumulants: Sequence[float] | np.ndarray, gamma: float,
                    epsilon: float = TRUNCATION_EPSILON) -> ReturnSeries:
    """Backward recursion G_t = c_{t+1} + gamma G_{t+1}, with c beyond the log taken as 0."""
    if not 0.0 <= gamma < 1.0:
        raise ConfigError(f"returns need 0 <= gamma < 1, got {gamma}", "gamma")
    c = np.asarray(cumulants, dtype=np.float64)
    T = c.size
    g = np.zeros(T)
    acc = 0.0
    for t in range(T - 2, -1, -1):
        acc = c[t + 1] + gamma * acc
        g[t] = acc
    horizon = truncation_horizon(gamma, epsilon)
    valid = np.ones(T, dtype=bool)
    valid[max(0, T - horizon):] = False
    return ReturnSeries(g, valid, horizon, epsilon)


def bin_msre(predictions, returns, bin_size: int = 1000, valid=None) -> BinnedError:
    """Mean of (y_t - G_t)^2 over consecutive bins of ``bin_size`` steps.

    ``returns`` may be an array or a ReturnSeries; in the latter case its
    truncated tail is excluded. Invalid steps are dropped before binning,
    the final bin may be partial (see ``counts``).
    """
    if isinstance(returns, ReturnSeries):
        if valid is None:
            valid = returns.valid
        returns = returns.returns
    y = np.asarray(predictions, dtype=np.float64)
    g = np.asarray(returns, dtype=np.float64)
    if y.shape != g.shape:
        raise ContractViolation(f"{y.size} predictions vs {g.size} returns")
    if bin_size < 1:
        raise ContractViolation("bin_size must be positive")
    sre = (y - g) ** 2
    if valid is not None:
        sre = sre[np.asarray(valid, dtype=bool)]
    n_bins = -(-sre.size // bin_size)
    idx = np.arange(sre.size) // bin_size
    sums = np.bincount(idx, weights=sre, minlength=n_bins)
    counts = np.bincount(idx, minlength=n_bins)
    msre = np.divide(sums, counts, out=np.zeros(n_bins), where=counts > 0)
    return BinnedError(bin_size, msre, counts)


def aggregate_runs(runs: Sequence[BinnedError]) -> AggregatedError:
    """Per-bin mean and standard error (sample std / sqrt(runs)).

    Runs are truncated to the shortest. A single run reports stderr 0 and
    sets ``single_run``.
    """
    if not runs:
        raise ContractViolation("no runs to aggregate")
    length = min(r.msre.size for r in runs)
    data = np.stack([r.msre[:length] for r in runs])
    mean = data.mean(axis=0)
    if len(runs) == 1:
        return AggregatedError(mean, np.zeros(length), 1, True)
    stderr = data.std(axis=0, ddof=1) / math.sqrt(len(runs))
    return AggregatedError(mean, stderr, len(runs), False)
