"""Experiment configuration, seeded multi-run orchestration and CSV output.

A run is fully determined by its resolved ``ExperimentConfig`` and a
``numpy.random.SeedSequence``. Run ``k`` of an experiment with master seed
``S`` uses ``SeedSequence(S).spawn(n)[k]``, which in turn spawns one stream
for the environment and one for the agent.
"""

from __future__ import annotations

import copy
import csv
import dataclasses
import io
import json
import logging
import os
import platform
import time
from array import array
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import __version__
from .agent import Agent, AgentConfig
from .environments import (
    TraceConditioning,
    TraceConditioningConfig,
    TracePatterning,
    TracePatterningConfig,
)
from .errors import ConfigError, NumericalDivergence
from .evaluation import (
    BinnedError,
    aggregate_runs,
    bin_msre,
    compute_returns,
    truncation_horizon,
)
from .network import FeatureKind

log = logging.getLogger(__name__)

WORKERS_ENV = "AGENTSTATE_WORKERS"
PROBLEMS = ("trace_conditioning", "trace_patterning")

PRESETS: dict[str, dict] = {
    "tc-isi10": {
        "problem": "trace_conditioning",
        "trials": 20000,
        "environment": {"isi": 10},
        "agent": {"capacity_deep": 100, "capacity_imprint": 0, "imprint_enabled": False},
    },
    "tc-isi20": {
        "problem": "trace_conditioning",
        "trials": 20000,
        "environment": {"isi": 20},
        "agent": {"capacity_deep": 200, "capacity_imprint": 0, "imprint_enabled": False},
    },
    "tc-isi30": {
        "problem": "trace_conditioning",
        "trials": 20000,
        "environment": {"isi": 30},
        "agent": {"capacity_deep": 300, "capacity_imprint": 0, "imprint_enabled": False},
    },
    "tp": {
        "problem": "trace_patterning",
        "trials": 20000,
        "environment": {},
        "agent": {"capacity_deep": 200, "capacity_imprint": 60},
    },
    "presence": {
        "problem": "trace_conditioning",
        "trials": 20000,
        "environment": {"isi": 10},
        "agent": {"deep_enabled": False, "imprint_enabled": False},
    },
}


@dataclass
class ExperimentConfig:
    problem: str = "trace_conditioning"
    trials: int = 20000
    bin_size: int = 1000
    name: str = "experiment"
    environment: TraceConditioningConfig | TracePatterningConfig = field(
        default_factory=TraceConditioningConfig
    )
    agent: AgentConfig = field(default_factory=AgentConfig)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "problem": self.problem,
            "trials": self.trials,
            "bin_size": self.bin_size,
            "environment": self.environment.to_dict(),
            "agent": self.agent.to_dict(),
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def as_baseline(self) -> "ExperimentConfig":
        """Presence representation: both generators off, everything else unchanged."""
        agent = dataclasses.replace(self.agent, deep_enabled=False, imprint_enabled=False)
        return dataclasses.replace(self, agent=agent, name=f"{self.name}-presence")


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _apply_override(data: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"expected key=value, got {assignment!r}", "--set")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = data
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{part} is not a section", key)
    node[parts[-1]] = yaml.safe_load(raw)


def build_config(data: dict) -> ExperimentConfig:
    """Validate a plain mapping into an ExperimentConfig.

    ``preset`` (optional) names a base from PRESETS; the rest of the mapping
    is merged on top. The agent's discount defaults to the problem's
    (1 - 1/ISI for trace conditioning, 0.9 for trace patterning).
    """
    data = dict(data)
    preset = data.pop("preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}", "preset")
        data = _merge(PRESETS[preset], data)
        data.setdefault("name", preset)
    known = {"problem", "trials", "bin_size", "name", "environment", "agent"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown keys {unknown}", "config")
    problem = data.get("problem", "trace_conditioning")
    if problem not in PROBLEMS:
        raise ConfigError(f"must be one of {PROBLEMS}", "problem")
    env_data = data.get("environment") or {}
    agent_data = dict(data.get("agent") or {})
    env_cls = TraceConditioningConfig if problem == "trace_conditioning" else TracePatterningConfig
    env_fields = {f.name for f in dataclasses.fields(env_cls)}
    bad = sorted(set(env_data) - env_fields)
    if bad:
        raise ConfigError(f"unknown keys {bad}", "environment")
    try:
        env = env_cls(**env_data)
        agent_data.setdefault("gamma", env.gamma)
        agent = AgentConfig.from_dict(agent_data)
    except TypeError as exc:
        raise ConfigError(str(exc), "config") from exc
    trials = data.get("trials", 20000)
    bin_size = data.get("bin_size", 1000)
    for name, value in (("trials", trials), ("bin_size", bin_size)):
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise ConfigError(f"must be a positive integer, got {value!r}", name)
    return ExperimentConfig(problem, trials, bin_size, data.get("name", "experiment"), env, agent)


def load_config(path: str | os.PathLike | None = None, preset: str | None = None,
                overrides: list[str] | tuple = ()) -> ExperimentConfig:
    data: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(str(exc), "config") from exc
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"not valid YAML: {exc}", "config") from exc
        if not isinstance(data, dict):
            raise ConfigError("top level must be a mapping", "config")
    if preset is not None:
        data["preset"] = preset
    for assignment in overrides:
        _apply_override(data, assignment)
    return build_config(data)


def make_environment(exp: ExperimentConfig, rng: np.random.Generator):
    if exp.problem == "trace_conditioning":
        return TraceConditioning(exp.environment, rng)
    return TracePatterning(exp.environment, rng)


def run_seeds(master_seed: int, n_runs: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(master_seed).spawn(n_runs)


def make_run(exp: ExperimentConfig, seed: np.random.SeedSequence, context: dict | None = None):
    env_seed, agent_seed = seed.spawn(2)
    env = make_environment(exp, np.random.default_rng(env_seed))
    agent = Agent(exp.agent, env.n_obs, np.random.default_rng(agent_seed), env.us_index, context)
    return env, agent


@dataclass
class RunResult:
    index: int
    spawn_key: tuple
    status: str = "ok"
    error: str | None = None
    steps: int = 0
    trials: int = 0
    binned: BinnedError | None = None
    diagnostics: list[dict] = field(default_factory=list)
    last_trial: list[dict] = field(default_factory=list)
    onset_predictions: list[dict] = field(default_factory=list)
    seconds: float = 0.0


def _trial_rows(signals, cumulants, predictions, returns, td_errors, start, stop, trial, valid=None):
    """``valid`` marks steps whose return is exact to the truncation epsilon."""
    rows = []
    for t in range(start, stop):
        row = {"step": t, "trial": trial, "trial_step": t - start}
        for j, v in enumerate(signals[t - start]):
            row[f"obs_{j}"] = int(v)
        row.update(cumulant=cumulants[t], prediction=predictions[t], **{"return": returns[t]},
                   td_error=td_errors[t], valid=1 if valid is None else int(valid[t]))
        rows.append(row)
    return rows


def run_single(exp: ExperimentConfig, seed: np.random.SeedSequence, index: int = 0) -> RunResult:
    """Run one seed for ``exp.trials`` trials and evaluate it."""
    result = RunResult(index, tuple(seed.spawn_key))
    started = time.perf_counter()
    env, agent = make_run(exp, seed, {"run": index, "entropy": seed.entropy,
                                      "spawn_key": list(seed.spawn_key)})
    bin_size = exp.bin_size
    predictions, cumulants, td_errors = array("d"), array("d"), array("d")
    onsets: list = []
    kinds = (FeatureKind.DEEP_TRACE, FeatureKind.IMPRINTING)
    sq_td = 0.0
    # the last two trials are kept for the per-trial dump
    window: list = []
    try:
        while True:
            obs, ann = env.step()
            if ann is not None:
                if ann.trial_index == exp.trials:
                    break
                onsets.append(ann)
                if ann.trial_index >= exp.trials - 2:
                    window.append((ann, len(predictions), []))
            record = agent.step(obs)
            predictions.append(record.prediction)
            cumulants.append(obs.cumulant)
            td_errors.append(record.td_error)
            sq_td += record.td_error * record.td_error  # ** raises on overflow, * gives inf
            if window:
                window[-1][2].append(obs.signals)
            if len(predictions) % bin_size == 0:
                row = {"bin_index": len(predictions) // bin_size - 1,
                       "n_deep": record.n_deep, "n_imprint": record.n_imprint,
                       "mean_sq_td_error": sq_td / bin_size}
                for kind in kinds:
                    for q, v in zip((10, 50, 90), agent.utility_quantiles(kind)):
                        row[f"{kind.value}_utility_q{q}"] = v
                result.diagnostics.append(row)
                sq_td = 0.0
    except NumericalDivergence as exc:
        result.status = "failed"
        result.error = str(exc)
        log.warning("run %d diverged: %s", index, exc)
    result.steps = len(predictions)
    result.trials = len(onsets)
    result.seconds = time.perf_counter() - started
    if result.status != "ok" or not predictions:
        return result

    y = np.frombuffer(predictions)
    c = np.frombuffer(cumulants)
    td = np.frombuffer(td_errors)
    returns = compute_returns(c, exp.agent.gamma)
    result.binned = bin_msre(y, returns, bin_size)
    for ann in onsets:
        t = ann.cs_onset_step
        result.onset_predictions.append({
            "trial": ann.trial_index, "step": t, "pattern_present": int(ann.pattern_present),
            "prediction": y[t], "return": returns.returns[t], "valid": int(returns.valid[t]),
        })
    if window:
        ann, start, signals = window[0]
        stop = start + len(signals)
        result.last_trial = _trial_rows(signals, c, y, returns.returns, td, start, stop,
                                        ann.trial_index, returns.valid)
    return result


def _write_csv(path: Path, rows: list[dict], fieldnames: list[str] | None = None) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if fieldnames is None:
        fieldnames = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


def versions() -> dict:
    import numba

    return {"agentstate": __version__, "numpy": np.__version__, "numba": numba.__version__,
            "python": platform.python_version()}


def _worker_count(workers: int | None) -> int:
    if workers is not None:
        return max(1, workers)
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}", WORKERS_ENV) from exc


def execute_runs(exp: ExperimentConfig, master_seed: int, n_runs: int,
                 workers: int | None = None) -> list[RunResult]:
    seeds = run_seeds(master_seed, n_runs)
    workers = _worker_count(workers)
    if workers == 1 or n_runs == 1:
        return [run_single(exp, s, i) for i, s in enumerate(seeds)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_single, exp, s, i) for i, s in enumerate(seeds)]
        return [f.result() for f in futures]


def write_results(exp: ExperimentConfig, master_seed: int, results: list[RunResult],
                  out_dir: str | os.PathLike) -> dict:
    """Write per-run and aggregated CSVs, the resolved config and the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(exp.to_yaml())
    ok = [r for r in results if r.status == "ok"]
    for r in results:
        run_dir = out / "runs" / f"run_{r.index:03d}"
        if r.binned is not None:
            rows = [{"bin_index": i, "steps": int(n), "msre": v}
                    for i, (n, v) in enumerate(zip(r.binned.counts, r.binned.msre))]
            _write_csv(run_dir / "msre.csv", rows, ["bin_index", "steps", "msre"])
        if r.diagnostics:
            _write_csv(run_dir / "diagnostics.csv", r.diagnostics)
        if r.onset_predictions:
            _write_csv(run_dir / "onsets.csv", r.onset_predictions)
        if r.last_trial:
            _write_csv(run_dir / "last_trial.csv", r.last_trial)
    agg_rows = []
    if ok:
        agg = aggregate_runs([r.binned for r in ok])
        agg_rows = [{"bin_index": i, "msre_mean": m, "msre_stderr": s, "n_runs": agg.n_runs}
                    for i, (m, s) in enumerate(zip(agg.mean, agg.stderr))]
    _write_csv(out / "aggregate.csv", agg_rows, ["bin_index", "msre_mean", "msre_stderr", "n_runs"])
    manifest = {
        "name": exp.name,
        "master_seed": master_seed,
        "n_runs": len(results),
        "versions": versions(),
        "seed_derivation": "numpy.random.SeedSequence(master_seed).spawn(n_runs)[index]; "
                           "each run spawns (environment, agent) streams",
        "runs": [
            {"index": r.index, "spawn_key": list(r.spawn_key), "status": r.status,
             "error": r.error, "steps": r.steps, "trials": r.trials}
            for r in results
        ],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def run_experiment(exp: ExperimentConfig, master_seed: int, n_runs: int,
                   out_dir: str | os.PathLike, workers: int | None = None) -> list[RunResult]:
    if n_runs < 1:
        raise ConfigError("must be >= 1", "runs")
    results = execute_runs(exp, master_seed, n_runs, workers)
    write_results(exp, master_seed, results, out_dir)
    return results


def run_baseline(exp: ExperimentConfig, master_seed: int, n_runs: int,
                 out_dir: str | os.PathLike, workers: int | None = None) -> list[RunResult]:
    return run_experiment(exp.as_baseline(), master_seed, n_runs, out_dir, workers)


def dump_trial(exp: ExperimentConfig, master_seed: int, trial: int, run: int = 0):
    """Per-step trace of one trial of run ``run``.

    The stream is simulated past the end of the trial far enough that the
    returns of every step in the trial are exact to within the truncation
    epsilon. Returns ``(rows, agent)``; the agent is left at the end of the
    simulated stretch.
    """
    if trial < 0:
        raise ConfigError("must be >= 0", "trial")
    seed = run_seeds(master_seed, run + 1)[run]
    env, agent = make_run(exp, seed)
    horizon = truncation_horizon(exp.agent.gamma)
    signals, cumulants, preds, tds = [], [], [], []
    start = stop = None
    while True:
        obs, ann = env.step()
        if ann is not None:
            if ann.trial_index == trial:
                start = env.t - 1
            elif ann.trial_index == trial + 1:
                stop = env.t - 1
        if stop is not None and env.t - 1 >= stop + horizon:
            break
        rec = agent.step(obs)
        if start is not None:
            signals.append(obs.signals)
            cumulants.append(obs.cumulant)
            preds.append(rec.prediction)
            tds.append(rec.td_error)
    returns = compute_returns(cumulants, exp.agent.gamma).returns
    rows = _trial_rows(signals, np.asarray(cumulants), np.asarray(preds), returns,
                       np.asarray(tds), 0, stop - start, trial)
    for row in rows:
        row["step"] += start
    return rows, agent


def dump_stream(exp: ExperimentConfig, master_seed: int, steps: int, run: int = 0) -> list[dict]:
    """Raw observation matrix of the environment stream (no agent)."""
    seed = run_seeds(master_seed, run + 1)[run]
    env_seed, _ = seed.spawn(2)
    env = make_environment(exp, np.random.default_rng(env_seed))
    rows = []
    trial = -1
    for t in range(steps):
        obs, ann = env.step()
        if ann is not None:
            trial = ann.trial_index
        row: dict[str, Any] = {"step": t, "trial": trial}
        for j, v in enumerate(obs.signals):
            row[f"obs_{j}"] = int(v)
        row["cumulant"] = obs.cumulant
        row["trial_onset"] = int(ann is not None)
        rows.append(row)
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})
    return buf.getvalue()
