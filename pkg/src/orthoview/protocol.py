"""Simulated-teacher open-ended evaluation.

A teacher introduces categories one at a time, keeps asking the learner about
unseen instances of known categories and corrects every wrong answer. A new
category is introduced once the accuracy over the last ``window_factor * k``
questions (``k`` known categories) reaches ``intro_threshold``. The run ends
when every category has been learned, when the learner stalls, or when the
teacher runs out of unseen instances.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .cloud_io import PointCloud
from .descriptor import DescriptorConfig, GlobalFeature, global_feature
from .errors import ConfigInvalid, DatasetTooSmall, NoPredictions, NoWindows
from .memory import METRICS, CategoryMemory

EVENT_KINDS = ("teach", "ask", "correct", "introduce", "context_switch")
TERMINATIONS = ("all_learned", "breakpoint_stall", "data_exhausted")
DEFAULT_CONTEXT = "default"
METRIC_FIELDS = ("learned_categories", "qc_iterations", "avg_instances_per_category", "gca", "apa")

Item = Union[GlobalFeature, PointCloud]
Dataset = Mapping[str, Sequence[Item]]


@dataclass(frozen=True)
class ProtocolConfig:
    """Teaching-protocol knobs. All values are tool defaults; every report records the config it ran with.

    ``max_stall`` is per known category: the run stops after
    ``max_stall * k`` questions without a new introduction.
    """

    intro_threshold: float = 0.67
    window_factor: int = 3
    max_stall: int = 100
    seed: int = 0
    metric: str = "cosine"
    tau_unknown: float = math.inf
    context_schedule: Tuple[Tuple[str, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(
            self, "context_schedule", tuple((str(c), int(s)) for c, s in self.context_schedule)
        )
        if not 0 < self.intro_threshold <= 1:
            raise ConfigInvalid(f"intro_threshold must lie in (0, 1], got {self.intro_threshold}")
        if self.window_factor < 1 or self.max_stall < 1:
            raise ConfigInvalid("window_factor and max_stall must be positive")
        if self.metric not in METRICS:
            raise ConfigInvalid(f"metric must be one of {METRICS}, got {self.metric!r}")
        if not self.tau_unknown > 0:
            raise ConfigInvalid("tau_unknown must be positive")
        starts = [s for _, s in self.context_schedule]
        if starts and (starts[0] != 0 or any(b <= a for a, b in zip(starts, starts[1:]))):
            raise ConfigInvalid("context_schedule must start at iteration 0 and be strictly increasing")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["tau_unknown"] = None if math.isinf(self.tau_unknown) else self.tau_unknown
        doc["context_schedule"] = [list(entry) for entry in self.context_schedule]
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ProtocolConfig":
        doc = dict(doc)
        if doc.get("tau_unknown") is None:
            doc["tau_unknown"] = math.inf
        doc["context_schedule"] = tuple(tuple(e) for e in doc.get("context_schedule", ()))
        return cls(**doc)


@dataclass(frozen=True)
class TeachingEvent:
    index: int
    kind: str
    true_label: Optional[str]
    predicted_label: Optional[str] = None
    correct: Optional[bool] = None
    context_id: str = DEFAULT_CONTEXT
    instance: Optional[str] = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "TeachingEvent":
        return cls(**doc)


@dataclass
class ExperimentReport:
    learned_categories: int
    qc_iterations: int
    avg_instances_per_category: float
    gca: float
    apa: float
    termination: str
    events: List[TeachingEvent]
    per_context_gca: Dict[str, float]
    config: ProtocolConfig
    n_dataset_categories: int = 0

    def metrics(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in METRIC_FIELDS}

    def to_dict(self) -> dict:
        """Report document without the event log (events go to JSON lines)."""
        return {
            **self.metrics(),
            "termination": self.termination,
            "per_context_gca": dict(self.per_context_gca),
            "n_dataset_categories": self.n_dataset_categories,
            "n_events": len(self.events),
            "config": self.config.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


# --------------------------------------------------------------------------- metrics


def _ask_events(events: Iterable[TeachingEvent]) -> List[TeachingEvent]:
    return [e for e in events if e.kind == "ask"]


def compute_gca(events: Iterable[TeachingEvent]) -> float:
    asks = _ask_events(events)
    if not asks:
        raise NoPredictions("no ask events to score")
    return sum(1 for e in asks if e.correct) / len(asks)


def _window_accuracy(outcomes: Sequence[bool], known: int, window_factor: int) -> Optional[float]:
    width = window_factor * known
    if known == 0 or len(outcomes) < width:
        return None
    return sum(outcomes[-width:]) / width


def window_accuracies(events: Iterable[TeachingEvent], window_factor: int) -> List[float]:
    """Replay the log and return every windowed accuracy the teacher computed."""
    known = 0
    outcomes: List[bool] = []
    values = []
    for event in events:
        if event.kind == "introduce":
            known += 1
        elif event.kind == "ask":
            outcomes.append(bool(event.correct))
            acc = _window_accuracy(outcomes, known, window_factor)
            if acc is not None:
                values.append(acc)
    return values


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def compute_apa(events: Iterable[TeachingEvent], config: ProtocolConfig) -> float:
    values = window_accuracies(events, config.window_factor)
    if not values:
        raise NoWindows("no accuracy window was ever filled")
    return _mean(values)


def per_context_gca(events: Iterable[TeachingEvent]) -> Dict[str, float]:
    groups: Dict[str, List[bool]] = {}
    for e in _ask_events(events):
        groups.setdefault(e.context_id, []).append(bool(e.correct))
    return {ctx: sum(flags) / len(flags) for ctx, flags in groups.items()}


def summarize(reports: Sequence[ExperimentReport]) -> Dict[str, Dict[str, float]]:
    """Mean and population standard deviation of each metric across runs."""
    if not reports:
        raise ValueError("summarize needs at least one report")
    out = {}
    for name in METRIC_FIELDS:
        values = np.array([getattr(r, name) for r in reports], dtype=np.float64)
        out[name] = {"mean": float(values.mean()), "std": float(values.std())}
    return out


# --------------------------------------------------------------------------- the teacher


def _contexts(dataset) -> Dict[str, Dataset]:
    """Accept ``label -> items`` or ``context -> label -> items``."""
    if not dataset:
        return {}
    first = next(iter(dataset.values()))
    if isinstance(first, Mapping):
        return {str(ctx): dict(labels) for ctx, labels in dataset.items()}
    return {DEFAULT_CONTEXT: dict(dataset)}


class _Teacher:
    def __init__(self, dataset, config: ProtocolConfig, pipeline: DescriptorConfig,
                 feature_cache: Optional[dict] = None):
        self.config = config
        self.pipeline = pipeline
        self.contexts = _contexts(dataset)
        self.labels = sorted({label for ctx in self.contexts.values() for label in ctx})
        totals = {
            label: sum(len(ctx.get(label, ())) for ctx in self.contexts.values()) for label in self.labels
        }
        if len(self.labels) < 2 or min(totals.values()) < 3:
            raise DatasetTooSmall("need at least 2 categories with at least 3 instances each")
        schedule = config.context_schedule or ((next(iter(self.contexts)), 0),)
        for ctx, _ in schedule:
            if ctx not in self.contexts:
                raise ConfigInvalid(f"scheduled context {ctx!r} is not in the dataset")
        self.schedule = schedule

        rng = np.random.default_rng(config.seed)
        self.order = [self.labels[i] for i in rng.permutation(len(self.labels))]
        self.pools: Dict[Tuple[str, str], List[int]] = {}
        for ctx in sorted(self.contexts):
            for label in sorted(self.contexts[ctx]):
                items = self.contexts[ctx][label]
                self.pools[ctx, label] = [int(i) for i in rng.permutation(len(items))]
        self._features: Dict[Tuple[str, str, int], GlobalFeature] = (
            {} if feature_cache is None else feature_cache
        )

        self.memory = CategoryMemory()
        self.events: List[TeachingEvent] = []
        self.known: List[str] = []
        self.context = schedule[0][0]
        self.outcomes: List[bool] = []
        self.accuracies: List[float] = []

    # event log -------------------------------------------------------------

    def emit(self, kind, label, **fields) -> None:
        self.events.append(TeachingEvent(len(self.events), kind, label, context_id=self.context, **fields))

    # data access -----------------------------------------------------------

    def available(self, label: str) -> bool:
        return bool(self.pools.get((self.context, label)))

    def draw(self, label: str) -> Tuple[str, GlobalFeature]:
        idx = self.pools[self.context, label].pop(0)
        key = (self.context, label, idx)
        item = self.contexts[self.context][label][idx]
        if key not in self._features:
            self._features[key] = item if isinstance(item, GlobalFeature) else global_feature(item, self.pipeline)
        name = getattr(item, "source_id", None) or f"{label}#{idx}"
        return name, self._features[key]

    # protocol steps --------------------------------------------------------

    def introduce(self, label: str) -> bool:
        if not self.available(label):
            return False
        name, feature = self.draw(label)
        self.emit("introduce", label, instance=name)
        self.memory.teach(label, feature)
        self.emit("teach", label, instance=name)
        self.known.append(label)
        self.asked_since_intro = set()
        self.asks_since_intro = 0
        return True

    def switch_context(self) -> None:
        asked = len(self.outcomes)
        current = [ctx for ctx, start in self.schedule if start <= asked][-1]
        if current != self.context:
            self.context = current
            self.emit("context_switch", None)

    def ask(self, label: str) -> None:
        name, feature = self.draw(label)
        pred = self.memory.classify(feature, self.config.metric, self.config.tau_unknown)
        predicted = pred.label if pred is not None else None
        correct = predicted == label
        self.emit("ask", label, predicted_label=predicted, correct=correct, instance=name)
        if not correct:
            self.memory.teach(label, feature)
            self.emit("correct", label, instance=name)
        self.outcomes.append(correct)
        self.asked_since_intro.add(label)
        self.asks_since_intro += 1

    def ready_for_next(self) -> bool:
        acc = _window_accuracy(self.outcomes, len(self.known), self.config.window_factor)
        if acc is None:
            return False
        self.accuracies.append(acc)
        # categories whose unseen pool is empty can no longer be asked and are exempt
        covered = all(l in self.asked_since_intro or not self.available(l) for l in self.known)
        return covered and acc >= self.config.intro_threshold

    def run(self) -> str:
        if not self.introduce(self.order[0]):
            return "data_exhausted"
        cursor = 0
        while True:
            self.switch_context()
            askable = [l for l in self.known if self.available(l)]
            if not askable:
                return "data_exhausted"
            # round-robin over known categories, skipping exhausted pools
            while not self.available(self.known[cursor % len(self.known)]):
                cursor += 1
            self.ask(self.known[cursor % len(self.known)])
            cursor += 1
            if self.ready_for_next():
                if len(self.known) == len(self.order):
                    return "all_learned"
                # a category absent from the active context waits for a later one
                self.introduce(self.order[len(self.known)])
            if self.asks_since_intro >= self.config.max_stall * len(self.known):
                return "breakpoint_stall"


def run_experiment(dataset, config: ProtocolConfig = ProtocolConfig(),
                   pipeline: DescriptorConfig = DescriptorConfig(),
                   feature_cache: Optional[dict] = None) -> ExperimentReport:
    """Run one simulated-teacher experiment.

    ``dataset`` maps labels to clouds or precomputed global features, or maps
    context ids to such mappings for multi-context runs. Clouds are turned
    into features with ``pipeline`` the first time they are drawn; pass the
    same ``feature_cache`` dict to several runs over one dataset and pipeline
    to compute each feature once.
    """
    teacher = _Teacher(dataset, config, pipeline, feature_cache)
    termination = teacher.run()
    events = teacher.events
    apa = compute_apa(events, config) if teacher.accuracies else 0.0
    if teacher.accuracies and _mean(teacher.accuracies) != apa:
        raise AssertionError("replayed window accuracies diverge from the live run")
    return ExperimentReport(
        learned_categories=len(teacher.known),
        qc_iterations=len(teacher.outcomes),
        avg_instances_per_category=teacher.memory.stats().average,
        gca=compute_gca(events) if teacher.outcomes else 0.0,
        apa=apa,
        termination=termination,
        events=events,
        per_context_gca=per_context_gca(events),
        config=config,
        n_dataset_categories=len(teacher.labels),
    )


# --------------------------------------------------------------------------- persistence


def events_to_jsonl(events: Iterable[TeachingEvent]) -> str:
    return "".join(json.dumps(e.to_dict()) + "\n" for e in events)


def events_from_jsonl(text: str) -> List[TeachingEvent]:
    return [TeachingEvent.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]


def summary_csv(rows: Sequence[Mapping[str, object]]) -> str:
    """One CSV row per run; columns taken from the first row."""
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def report_row(report: ExperimentReport, **extra) -> Dict[str, object]:
    return {**extra, "termination": report.termination, **report.metrics()}
