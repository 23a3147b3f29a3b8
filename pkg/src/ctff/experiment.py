"""Time-versus-accuracy sweeps over engines and their tolerance parameters.

An experiment file is JSON::

    {
      "model": {"generator": "toroid", "rows": 3, "cols": 3},   # or {"file": "model.json"}
      "initial": {"quarter_split": true},   # or "states", "marginals", "joint", {"floor": 0.05, "seed": 0}
      "timeline": {"events": [...], "queries": [...]},   # or "timeline_file"
      "engines": {"factored_unif": {"theta": [0.5, 2, 8]},
                  "sparse_unif": {"theta": [2], "kappa": [1e-2, 1e-3]},
                  "factored_rkf": {"rkf_tol": [1e-4, 1e-6]}},
      "repetitions": 5,
      "eta": 0.05,
      "reference": "auto",
      "out": "results.csv", "figure": "results.png"
    }

Relative paths resolve against the experiment file's directory.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
import statistics
import time
from pathlib import Path

import numpy as np

from .bounds import epsilon_crude, global_gamma, propagation_bound
from .dense import DenseDistribution, all_marginals, dense_from_factored, kl_divergence
from .errors import ModelValidationError, SparseInconsistencyError
from .factored import FactoredDistribution, PropagationConfig
from .filtering import filter_run, timeline_from_dict
from .generators import floored_initial, generate, quarter_split_states
from .model import load_model, model_from_dict, uniformize

COLUMNS = ["method", "param", "wall_ms", "query_var", "kl", "theorem4_bound", "query_t"]
REFERENCE_CAP = 2**16
CONFIG_KEYS = {"theta", "l", "tail_tol", "rkf_tol", "kappa"}


def _resolve(path, base: Path | None) -> Path:
    p = Path(path)
    return p if p.is_absolute() or base is None else base / p


def build_model(experiment: dict, base: Path | None = None):
    ms = experiment["model"]
    if "file" in ms:
        return load_model(_resolve(ms["file"], base))
    if "generator" in ms:
        params = {k: v for k, v in ms.items() if k != "generator"}
        return generate(ms["generator"], **params)
    if "variables" in ms:
        return model_from_dict(ms)
    raise ModelValidationError("experiment model needs 'file', 'generator' or an inline model")


def build_initial(experiment: dict, model) -> FactoredDistribution | DenseDistribution:
    init = experiment.get("initial", {"uniform": True})
    if "joint" in init:
        return DenseDistribution(init["joint"], tuple(model.cardinalities))
    if "states" in init:
        return FactoredDistribution.deterministic(model, init["states"])
    if init.get("quarter_split"):
        return FactoredDistribution.deterministic(model, quarter_split_states(model.n, init.get("reverse", False)))
    if "marginals" in init:
        return FactoredDistribution(tuple(init["marginals"])).check()
    if "floor" in init:
        return floored_initial(model, np.random.default_rng(init.get("seed", 0)), init["floor"])
    return FactoredDistribution.uniform(model)


def param_grid(grid: dict) -> list[dict]:
    """Cartesian product of the listed parameter values."""
    unknown = set(grid) - CONFIG_KEYS
    if unknown:
        raise ModelValidationError(f"unknown engine parameters {sorted(unknown)}")
    keys = sorted(grid)
    values = [v if isinstance(v, list) else [v] for v in (grid[k] for k in keys)]
    return [dict(zip(keys, combo)) for combo in itertools.product(*values)]


def format_param(params: dict) -> str:
    return ";".join(f"{k}={v:g}" if isinstance(v, (int, float)) else f"{k}={v}" for k, v in sorted(params.items()))


def _timed_run(model, engine, initial, timeline, cfg, repetitions):
    times, result = [], None
    for _ in range(max(1, repetitions)):
        start = time.perf_counter()
        result = filter_run(model, engine, initial, timeline, cfg)
        times.append(time.perf_counter() - start)
    return result, 1000.0 * statistics.median(times)


def run_experiment(experiment: dict, base: Path | None = None) -> list[dict]:
    """Run every engine/parameter cell and score each query against the exact filter."""
    model = build_model(experiment, base)
    initial = build_initial(experiment, model)
    if "timeline_file" in experiment:
        tl_data = json.loads(_resolve(experiment["timeline_file"], base).read_text())
    else:
        tl_data = experiment.get("timeline", {})
    timeline = timeline_from_dict(tl_data, model)
    reps = int(experiment.get("repetitions", 5))
    reference = experiment.get("reference", "auto")
    if reference == "auto":
        reference = model.n_states <= REFERENCE_CAP
    exact = filter_run(model, "dense", initial, timeline) if reference else None

    eta_floor = float(experiment.get("eta", 0.05))
    marginals = all_marginals(initial) if isinstance(initial, DenseDistribution) else initial.marginals
    d0 = 0.0
    if isinstance(initial, DenseDistribution):
        d0 = kl_divergence(initial, dense_from_factored(FactoredDistribution(tuple(marginals))))
    eta = min(eta_floor, min(float(m.min()) for m in marginals))
    has_evidence = bool(timeline.events)
    umodel = uniformize(model)
    gamma = global_gamma(umodel) if umodel.alpha > 0 else None
    epsilon = epsilon_crude(model.n, eta)

    rows = []
    for engine, grid in experiment.get("engines", {}).items():
        for params in param_grid(grid or {}):
            cfg = PropagationConfig(**params)
            label = format_param(params)
            try:
                result, wall_ms = _timed_run(model, engine, initial, timeline, cfg, reps)
            except SparseInconsistencyError:
                for q in timeline.queries:
                    rows.append(dict(method=engine, param=label, wall_ms="", query_var=model.names[q.var],
                                     kl=math.inf, theorem4_bound="", query_t=q.time))
                continue
            snaps = {s.time: s for s in result.snapshots}
            for a in result.answers:
                kl = kl_divergence(exact.marginal(a.var, a.time), a.marginal) if exact else ""
                bound = ""
                if engine == "factored_unif" and not has_evidence and gamma is not None:
                    records = result.trace[: snaps[a.time].trace_len]
                    bound = propagation_bound(umodel, records, epsilon, d0, gamma)
                rows.append(dict(method=engine, param=label, wall_ms=round(wall_ms, 4),
                                 query_var=model.names[a.var], kl=kl, theorem4_bound=bound, query_t=a.time))
    return rows


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "inf" if math.isinf(v) else repr(v)
    return v


def write_csv(rows: list[dict], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=COLUMNS)
        writer.writeheader()
        for r in rows:
            writer.writerow({k: _fmt(r[k]) for k in COLUMNS})


def read_csv(path) -> list[dict]:
    with Path(path).open() as fh:
        return list(csv.DictReader(fh))


def load_experiment(path) -> tuple[dict, Path]:
    path = Path(path)
    return json.loads(path.read_text()), path.parent
