"""Compiled inner loops for the per-step hot path.

Each kernel is wrapped by a public function elsewhere in the package that
validates arguments; call those instead.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def forward_state(decay, source_weight, gather, connections, threshold, x, n, out):
    cd = decay.shape[0]
    for i in range(cd):
        out[i] = decay[i] * x[i] + source_weight[i] * x[gather[i]]
    ci, m = connections.shape
    for r in range(ci):
        acc = 0.0
        for j in range(m):
            acc += connections[r, j] * x[n + j]
        out[cd + r] = 1.0 if acc >= threshold[r] else 0.0


@njit(cache=True)
def dot(a, b):
    acc = 0.0
    for i in range(a.shape[0]):
        acc += a[i] * b[i]
    return acc


@njit(cache=True)
def td_update(w, z, beta, h, f_prev, f_curr, cumulant, gamma, lam, theta, alpha0,
              adaptive, normalize, trace_limit):
    """Returns (delta, sum of w after the update)."""
    size = w.shape[0]
    delta = cumulant + gamma * dot(f_curr, w) - dot(f_prev, w)
    if not math.isfinite(delta):
        return delta, 0.0
    decay = gamma * lam
    for i in range(size):
        if i < trace_limit:
            z[i] = decay * z[i] + f_prev[i]
        else:
            z[i] = decay * z[i]
    wsum = 0.0
    if adaptive:
        step = np.empty(size)
        total = 0.0
        for i in range(size):
            beta[i] += theta * delta * z[i] * h[i]
            step[i] = math.exp(beta[i]) * z[i]
            total += step[i] * f_prev[i]
        if normalize and total > 1.0:
            for i in range(size):
                step[i] = step[i] / total
        for i in range(size):
            w[i] += delta * step[i]
            keep = 1.0 - step[i] * f_prev[i]
            if keep < 0.0:
                keep = 0.0
            h[i] = h[i] * keep + delta * step[i]
            wsum += w[i]
    else:
        rate = alpha0 * delta
        for i in range(size):
            w[i] += rate * z[i]
            wsum += w[i]
    return delta, wsum


@njit(cache=True)
def utility_update(u, w, alive, decay):
    keep = 1.0 - decay
    for i in range(u.shape[0]):
        if alive[i]:
            u[i] = decay * u[i] + keep * abs(w[i])
        else:
            u[i] = 0.0


@njit(cache=True)
def live_median(values, alive, start, stop):
    buf = np.empty(stop - start)
    k = 0
    for i in range(start, stop):
        if alive[i]:
            buf[k] = values[i]
            k += 1
    if k == 0:
        return 0.0
    return np.median(buf[:k])


@njit(cache=True)
def weighted_pick(w, alive, n, n_inputs, u):
    """Index of x_t drawn proportional to |w| over live features and observations.

    ``u`` is one uniform draw on [0, 1). Falls back to a uniform choice when
    every candidate weight is zero. Returns -1 when there are no candidates.
    """
    total = 0.0
    count = 0
    for i in range(n_inputs):
        if i >= n or alive[i]:
            total += abs(w[i])
            count += 1
    if count == 0:
        return -1
    if total > 0.0:
        target = u * total
        acc = 0.0
        last = -1
        for i in range(n_inputs):
            if i >= n or alive[i]:
                a = abs(w[i])
                if a > 0.0:
                    acc += a
                    last = i
                    if acc > target:
                        return i
        return last
    k = min(int(u * count), count - 1)
    for i in range(n_inputs):
        if i >= n or alive[i]:
            if k == 0:
                return i
            k -= 1
    return -1


@njit(cache=True)
def prunable(values, birth, alive, refcount, start, stop, keep_fraction, count):
    """Walk live slots in ascending (utility, birth) order through the bottom
    fraction, collecting up to ``count`` that are not a deep-trace source."""
    k = 0
    for i in range(start, stop):
        if alive[i]:
            k += 1
    bottom = int(math.floor((1.0 - keep_fraction) * k + 1e-9))
    out = np.empty(min(count, bottom), dtype=np.int64)
    picked = 0
    prev_v = -np.inf
    prev_b = -1
    for _ in range(bottom):
        if picked == out.shape[0]:
            break
        best = -1
        best_v = 0.0
        best_b = 0
        for i in range(start, stop):
            if not alive[i]:
                continue
            v = values[i]
            b = birth[i]
            if v < prev_v or (v == prev_v and b <= prev_b):
                continue
            if best < 0 or v < best_v or (v == best_v and b < best_b):
                best = i
                best_v = v
                best_b = b
        prev_v = best_v
        prev_b = best_b
        if refcount[best] == 0:
            out[picked] = best
            picked += 1
    return out[:picked]


@njit(cache=True)
def distractor_block(draws, rates, remaining, duration, out):
    """Fill ``out`` (steps x k) with on/off distractor signals.

    A distractor that is off turns on when its draw falls below its rate and
    then stays on for ``duration`` steps.
    """
    steps, k = draws.shape
    for t in range(steps):
        for j in range(k):
            if remaining[j] == 0 and draws[t, j] < rates[j]:
                remaining[j] = duration
            if remaining[j] > 0:
                out[t, j] = 1.0
                remaining[j] -= 1
            else:
                out[t, j] = 0.0
