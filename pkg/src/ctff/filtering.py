"""Evidence timelines and the filtering driver shared by all engines."""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dense import (
    DEFAULT_TAIL_TOL,
    DenseDistribution,
    all_marginals,
    condition_dense,
    dense_from_factored,
    normalize,
    propagate_dense,
)
from .errors import CtffError, ModelValidationError
from .factored import (
    FactoredDistribution,
    PropagationConfig,
    condition_point,
    factored_rkf_propagate,
    factored_unif_propagate,
)
from .model import CtbnModel, amalgamate, restrict_for_interval_evidence, uniformize
from .sparse import SparseDistribution, condition_sparse, sparse_from_factored, sparse_unif_propagate


@dataclass(frozen=True)
class PointEvidence:
    time: float
    var: int
    value: int


@dataclass(frozen=True)
class IntervalEvidence:
    t1: float
    t2: float
    var: int
    value: int

    @property
    def time(self) -> float:
        return self.t1


@dataclass(frozen=True)
class Query:
    time: float
    var: int


@dataclass
class EvidenceTimeline:
    events: list = field(default_factory=list)
    queries: list = field(default_factory=list)

    def validate(self, model: CtbnModel) -> "EvidenceTimeline":
        last = 0.0
        for e in self.events:
            if e.time < 0 or e.time < last:
                raise ModelValidationError("evidence times must be nonnegative and nondecreasing")
            last = e.time
            if not 0 <= e.var < model.n or not 0 <= e.value < model.variables[e.var].cardinality:
                raise ModelValidationError(f"evidence {e} out of range")
            if isinstance(e, IntervalEvidence) and not e.t1 < e.t2:
                raise ModelValidationError(f"interval evidence needs t1 < t2: {e}")
        intervals = sorted((e for e in self.events if isinstance(e, IntervalEvidence)), key=lambda e: (e.var, e.t1))
        for a, b in zip(intervals, intervals[1:]):
            if a.var == b.var and b.t1 < a.t2:
                raise ModelValidationError(f"overlapping interval evidence on variable {a.var}")
        for q in self.queries:
            if q.time < 0 or not 0 <= q.var < model.n:
                raise ModelValidationError(f"query {q} out of range")
        return self

    @property
    def horizon(self) -> float:
        times = [0.0] + [q.time for q in self.queries]
        for e in self.events:
            times.append(e.t2 if isinstance(e, IntervalEvidence) else e.time)
        return max(times)


def timeline_from_dict(data: dict, model: CtbnModel) -> EvidenceTimeline:
    events, queries = [], []
    try:
        for e in data.get("events", []):
            var = model.index_of(e["var"])
            if e["type"] == "point":
                events.append(PointEvidence(float(e["t"]), var, int(e["value"])))
            elif e["type"] == "interval":
                events.append(IntervalEvidence(float(e["t"]), float(e["t2"]), var, int(e["value"])))
            else:
                raise ModelValidationError(f"unknown evidence type {e['type']!r}")
        for q in data.get("queries", []):
            queries.append(Query(float(q["t"]), model.index_of(q["var"])))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelValidationError(f"malformed timeline: {exc}") from exc
    events.sort(key=lambda e: e.time)
    return EvidenceTimeline(events, queries).validate(model)


def load_timeline(path, model: CtbnModel) -> EvidenceTimeline:
    return timeline_from_dict(json.loads(Path(path).read_text()), model)


# -- engines ------------------------------------------------------------------


def _factored(initial) -> FactoredDistribution:
    if isinstance(initial, DenseDistribution):
        return FactoredDistribution(tuple(all_marginals(initial))).check()
    return initial


class _Engine:
    """Belief state plus the operations the driver needs."""

    def __init__(self, model: CtbnModel, initial: FactoredDistribution, cfg: PropagationConfig):
        self.cfg = cfg
        self.log_weight = getattr(initial, "log_weight", 0.0)
        self._cache: dict = {}

    def _get(self, model: CtbnModel, kind: str, build):
        key = (model.evidence, kind)
        if key not in self._cache:
            self._cache[key] = build(model)
        return self._cache[key]


class DenseEngine(_Engine):
    name = "dense"

    def __init__(self, model, initial, cfg, tail_tol: float = DEFAULT_TAIL_TOL):
        super().__init__(model, initial, cfg)
        self.tail_tol = tail_tol
        self.state = initial if isinstance(initial, DenseDistribution) else dense_from_factored(initial)

    def propagate(self, model, dt):
        Q = self._get(model, "Q", amalgamate)
        p = propagate_dense(Q, self.state, dt, self.tail_tol)
        self.state, lm = normalize(p)
        self.log_weight += lm

    def condition(self, var, value):
        self.state, lm = condition_dense(self.state, var, value)
        self.log_weight += lm

    def marginals(self):
        return all_marginals(self.state)


class FactoredUnifEngine(_Engine):
    name = "factored_unif"

    def __init__(self, model, initial, cfg):
        super().__init__(model, initial, cfg)
        self.state = _factored(initial)
        self.trace: list = []

    def propagate(self, model, dt):
        um = self._get(model, "U", uniformize)
        self.state = factored_unif_propagate(self.state, um, dt, self.cfg, self.trace)
        self.log_weight = self.state.log_weight

    def condition(self, var, value):
        self.state = condition_point(self.state, var, value)
        self.log_weight = self.state.log_weight

    def marginals(self):
        return [m.copy() for m in self.state.marginals]


class FactoredRKFEngine(FactoredUnifEngine):
    name = "factored_rkf"

    def propagate(self, model, dt):
        self.state = factored_rkf_propagate(self.state, model, dt, self.cfg)
        self.log_weight = self.state.log_weight


class SparseEngine(_Engine):
    name = "sparse_unif"

    def __init__(self, model, initial, cfg):
        super().__init__(model, initial, cfg)
        if isinstance(initial, DenseDistribution):
            nz = {int(x): float(p) for x, p in enumerate(initial.probs) if p > 0}
            self.state = SparseDistribution(nz, initial.cardinalities)
        else:
            self.state = sparse_from_factored(initial)

    def propagate(self, model, dt):
        um = self._get(model, "U", uniformize)
        self.state = sparse_unif_propagate(self.state, um, dt, self.cfg)
        self.log_weight = self.state.log_weight

    def condition(self, var, value):
        self.state = condition_sparse(self.state, var, value)
        self.log_weight = self.state.log_weight

    def marginals(self):
        return [self.state.marginal(i) for i in range(len(self.state.cardinalities))]


ENGINES = {e.name: e for e in (DenseEngine, FactoredUnifEngine, FactoredRKFEngine, SparseEngine)}


# -- driver -------------------------------------------------------------------


@dataclass
class QueryAnswer:
    time: float
    var: int
    marginal: np.ndarray


@dataclass
class Snapshot:
    """Full belief summary at one query time."""

    time: float
    marginals: list
    log_weight: float
    trace_len: int = 0


@dataclass
class FilterResult:
    answers: list[QueryAnswer]
    log_likelihood: float
    timings: list[tuple[float, float, float]]
    snapshots: list[Snapshot]
    trace: list = field(default_factory=list)
    engine: object = field(default=None, repr=False)

    def marginal(self, var: int, t: float) -> np.ndarray:
        for a in self.answers:
            if a.var == var and math.isclose(a.time, t, abs_tol=1e-12):
                return a.marginal
        raise KeyError((var, t))


def filter_run(
    model: CtbnModel,
    engine: str,
    initial: FactoredDistribution | DenseDistribution,
    timeline: EvidenceTimeline,
    cfg: PropagationConfig | None = None,
) -> FilterResult:
    """Filter ``initial`` forward through ``timeline`` with the named engine.

    ``initial`` may be a joint distribution; the factored engines then start
    from its marginals.

    The time axis is cut at every evidence and query time.  Point evidence and
    interval starts are applied at their time before queries there are
    answered; inside an interval the model is restricted so that the observed
    variable cannot leave its value, and the lost mass is accumulated into the
    log-likelihood.
    """
    cfg = cfg or PropagationConfig()
    if engine not in ENGINES:
        raise ModelValidationError(f"unknown engine {engine!r}; choose from {sorted(ENGINES)}")
    timeline.validate(model)
    if isinstance(initial, DenseDistribution):
        if abs(initial.mass - 1) > 1e-9 or initial.cardinalities != tuple(model.cardinalities):
            raise ModelValidationError("initial joint distribution must be normalized over the model's states")
    else:
        initial.check()
    eng = ENGINES[engine](model, initial, cfg)
    intervals = [e for e in timeline.events if isinstance(e, IntervalEvidence)]
    cuts = {0.0}
    for e in timeline.events:
        cuts.add(e.time)
        if isinstance(e, IntervalEvidence):
            cuts.add(e.t2)
    cuts.update(q.time for q in timeline.queries)

    restricted: dict = {}

    def model_for(active):
        key = tuple(active)
        if key not in restricted:
            m = model
            for e in active:
                m = restrict_for_interval_evidence(m, e.var, e.value)
            restricted[key] = m
        return restricted[key]

    answers, timings, snapshots = [], [], []
    now = 0.0
    for b in sorted(cuts):
        if b > now:
            active = [e for e in intervals if e.t1 <= now and b <= e.t2]
            start = time.perf_counter()
            try:
                eng.propagate(model_for(active), b - now)
            except CtffError as exc:
                exc.args = (f"[{engine}] propagating {now:g} -> {b:g}: {exc}",)
                raise
            timings.append((now, b, time.perf_counter() - start))
            now = b
        for e in timeline.events:
            if e.time == b:
                try:
                    eng.condition(e.var, e.value)
                except CtffError as exc:
                    exc.args = (f"[{engine}] evidence at t = {b:g}: {exc}",)
                    raise
        here = [q for q in timeline.queries if q.time == b]
        if here:
            ms = eng.marginals()
            snapshots.append(Snapshot(b, ms, eng.log_weight, len(getattr(eng, "trace", ()))))
            answers.extend(QueryAnswer(b, q.var, ms[q.var]) for q in here)
    return FilterResult(answers, eng.log_weight, timings, snapshots, list(getattr(eng, "trace", [])), eng)
