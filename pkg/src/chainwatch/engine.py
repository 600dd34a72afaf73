"""Streaming detection pipeline.

Per instruction call, in order: white-list check (skip everything else when it
hits), feature encoding, candidate nomination, then a monitor step only when
the candidate set is non-empty.  Naive mode runs the identical pipeline with
every exploit as a candidate on every call and no classifier involvement.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import mlp
from .encoder import FeatureEncoder
from .fingerprints import FingerprintDb, WhiteList
from .monitor import DEFAULT_COSINE_THRESHOLD, EventKind, MonitorEvent, StateTable
from .trace import InstructionCall, Trace

DEFAULT_CLASSIFY_THRESHOLD = 0.5

CandidateFn = Callable[[np.ndarray], frozenset[int]]


@dataclass
class EngineConfig:
    threshold_classify: float = DEFAULT_CLASSIFY_THRESHOLD
    threshold_cosine: float = DEFAULT_COSINE_THRESHOLD
    halt_on_alarm: bool = False

    def __post_init__(self):
        if not 0.0 < self.threshold_classify < 1.0:
            raise ValueError("threshold_classify must lie in (0, 1)")
        if not 0.0 < self.threshold_cosine <= 1.0:
            raise ValueError("threshold_cosine must lie in (0, 1]")


@dataclass(frozen=True)
class AlarmRecord:
    """One completed exploit chain, as reported to the operator."""

    trace_id: str
    offset: int
    exploit_id: int
    cwe_id: str
    similarity: float

    def to_json_obj(self) -> dict:
        return {
            "trace": self.trace_id,
            "offset": self.offset,
            "exploit_id": self.exploit_id,
            "cwe_id": self.cwe_id,
            "similarity": self.similarity,
        }


@dataclass
class SessionSummary:
    trace_id: str
    total_calls: int = 0
    whitelisted_calls: int = 0
    encoded_calls: int = 0
    classifier_invocations: int = 0
    monitor_steps: int = 0
    comparisons: int = 0
    comparisons_on_whitelisted: int = 0
    advanced_events: int = 0
    no_match_events: int = 0
    alarms: int = 0
    halted: bool = False

    def to_json_obj(self) -> dict:
        return dict(self.__dict__)


@dataclass
class DetectionResult:
    alarms: list[AlarmRecord]
    summary: SessionSummary
    events: list[MonitorEvent] = field(default_factory=list)


def classifier_candidates(model: mlp.MlpModel, db: FingerprintDb, threshold: float) -> CandidateFn:
    """Candidate nomination: predicted labels intersected with stored exploits."""
    known = frozenset(db.exploit_ids)

    def nominate(x: np.ndarray) -> frozenset[int]:
        return mlp.predict(model, x, threshold=threshold).predicted & known

    return nominate


def full_candidates(db: FingerprintDb) -> CandidateFn:
    every = frozenset(db.exploit_ids)
    return lambda x: every


def run_detection(
    trace: Trace | Iterable[InstructionCall],
    encoder: FeatureEncoder,
    whitelist: WhiteList,
    table: StateTable,
    candidate_fn: CandidateFn,
    config: EngineConfig,
    count_classifier: bool = True,
    trace_id: str | None = None,
) -> DetectionResult:
    """Run the pipeline over one trace against an existing state table.

    ``count_classifier`` is False in naive mode, where the fixed full
    candidate set involves no classifier invocation.
    """
    if isinstance(trace, Trace):
        calls = trace.calls
        tid = trace_id if trace_id is not None else trace.source_id
    else:
        calls = list(trace)
        tid = trace_id if trace_id is not None else "<calls>"

    summary = SessionSummary(trace_id=tid)
    alarms: list[AlarmRecord] = []
    events: list[MonitorEvent] = []

    for offset, call in enumerate(calls):
        summary.total_calls += 1
        if call.api_name in whitelist:
            summary.whitelisted_calls += 1
            continue
        x = encoder.encode(call)
        summary.encoded_calls += 1
        if count_classifier:
            summary.classifier_invocations += 1
        candidates = candidate_fn(x)
        if not candidates:
            continue
        before = table.total_comparisons
        step_events = table.step(candidates, x, offset, threshold=config.threshold_cosine)
        summary.monitor_steps += 1
        summary.comparisons += table.total_comparisons - before
        events.extend(step_events)
        for event in step_events:
            if event.kind is EventKind.ALARM:
                summary.alarms += 1
                alarms.append(
                    AlarmRecord(
                        trace_id=tid,
                        offset=event.trace_offset,
                        exploit_id=event.exploit_id,
                        cwe_id=event.cwe_id,
                        similarity=event.similarity,
                    )
                )
            elif event.kind is EventKind.ADVANCED:
                summary.advanced_events += 1
            else:
                summary.no_match_events += 1
        if config.halt_on_alarm and summary.alarms:
            summary.halted = True
            break

    return DetectionResult(alarms=alarms, summary=summary, events=events)


def detect(
    trace: Trace | Iterable[InstructionCall],
    encoder: FeatureEncoder,
    whitelist: WhiteList,
    db: FingerprintDb,
    model: mlp.MlpModel,
    config: EngineConfig | None = None,
    table: StateTable | None = None,
) -> DetectionResult:
    """Classifier-filtered detection over one trace."""
    config = config if config is not None else EngineConfig()
    table = table if table is not None else StateTable(db)
    nominate = classifier_candidates(model, db, config.threshold_classify)
    return run_detection(trace, encoder, whitelist, table, nominate, config)


def detect_naive(
    trace: Trace | Iterable[InstructionCall],
    encoder: FeatureEncoder,
    whitelist: WhiteList,
    db: FingerprintDb,
    config: EngineConfig | None = None,
    table: StateTable | None = None,
) -> DetectionResult:
    """Exhaustive detection: every stored exploit is a candidate on every call."""
    config = config if config is not None else EngineConfig()
    table = table if table is not None else StateTable(db)
    return run_detection(
        trace, encoder, whitelist, table, full_candidates(db), config, count_classifier=False
    )
