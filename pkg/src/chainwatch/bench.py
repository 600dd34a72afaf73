"""Latency and comparison-count benchmark: filtered engine vs naive scan.

Methodology: traces are parsed up front, one warm-up pass runs outside the
clock (this also triggers jit compilation on the numba backend), then each
measured repetition replays every trace against a fresh state table, timing
each call's full pipeline step (white-list check, encoding, candidate
nomination, monitor step) with a nanosecond counter.  Comparison counters are
deterministic and independent of timing.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels, mlp
from .encoder import FeatureEncoder
from .engine import EngineConfig, classifier_candidates, full_candidates
from .fingerprints import FingerprintDb, WhiteList
from .monitor import StateTable
from .trace import Trace


@dataclass
class LatencyStats:
    calls: int
    min_us: float
    median_us: float
    p99_us: float
    mean_us: float

    @classmethod
    def from_ns(cls, samples_ns) -> "LatencyStats":
        us = np.asarray(samples_ns, dtype=np.float64) / 1000.0
        return cls(
            calls=len(us),
            min_us=float(np.min(us)),
            median_us=float(np.median(us)),
            p99_us=float(np.percentile(us, 99)),
            mean_us=float(np.mean(us)),
        )

    def to_json_obj(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ModeReport:
    latency: LatencyStats
    total_comparisons: int
    non_whitelisted_calls: int
    comparisons_per_call: float
    alarms: int
    per_trace_comparisons: list[int] = field(repr=False, default_factory=list)

    def to_json_obj(self) -> dict:
        return {
            "latency": self.latency.to_json_obj(),
            "total_comparisons": self.total_comparisons,
            "non_whitelisted_calls": self.non_whitelisted_calls,
            "comparisons_per_call": self.comparisons_per_call,
            "alarms": self.alarms,
        }


@dataclass
class BenchReport:
    engine: ModeReport
    naive: ModeReport
    comparison_ratio: float
    latency_ratio: float
    param_count: int
    backend: str
    repetitions: int
    kernel_micro: dict

    def to_json_obj(self) -> dict:
        return {
            "engine": self.engine.to_json_obj(),
            "naive": self.naive.to_json_obj(),
            "comparison_ratio": self.comparison_ratio,
            "latency_ratio": self.latency_ratio,
            "param_count": self.param_count,
            "backend": self.backend,
            "repetitions": self.repetitions,
            "kernel_micro": self.kernel_micro,
        }


def _run_mode(
    traces: list[Trace],
    encoder: FeatureEncoder,
    whitelist: WhiteList,
    db: FingerprintDb,
    candidate_factory,
    config: EngineConfig,
    repetitions: int,
    measure: bool,
) -> ModeReport:
    samples: list[int] = []
    total_comparisons = 0
    non_whitelisted = 0
    alarms = 0
    per_trace: list[int] = []

    passes = repetitions if measure else 1
    for rep in range(passes):
        per_trace_rep: list[int] = []
        for trace in traces:
            table = StateTable(db)
            nominate = candidate_factory(db)
            trace_comparisons = 0
            for offset, call in enumerate(trace.calls):
                t0 = time.perf_counter_ns()
                if call.api_name in whitelist:
                    elapsed = time.perf_counter_ns() - t0
                else:
                    x = encoder.encode(call)
                    candidates = nominate(x)
                    if candidates:
                        before = table.total_comparisons
                        events = table.step(
                            candidates, x, offset, threshold=config.threshold_cosine
                        )
                        elapsed = time.perf_counter_ns() - t0
                        trace_comparisons += table.total_comparisons - before
                        if rep == 0:
                            alarms += sum(1 for e in events if e.kind.value == "alarm")
                    else:
                        elapsed = time.perf_counter_ns() - t0
                    if rep == 0:
                        non_whitelisted += 1
                if measure:
                    samples.append(elapsed)
            per_trace_rep.append(trace_comparisons)
        if rep == 0:
            per_trace = per_trace_rep
            total_comparisons = sum(per_trace_rep)

    return ModeReport(
        latency=LatencyStats.from_ns(samples if measure else [0]),
        total_comparisons=total_comparisons,
        non_whitelisted_calls=non_whitelisted,
        comparisons_per_call=total_comparisons / max(1, non_whitelisted),
        alarms=alarms,
        per_trace_comparisons=per_trace,
    )


def _kernel_micro(model: mlp.MlpModel, rounds: int = 500) -> dict:
    """Median per-invocation microseconds of each kernel on every backend."""
    rng = np.random.default_rng(7)
    x = np.ascontiguousarray(rng.standard_normal(mlp.LAYER_SIZES[0]))
    a = np.ascontiguousarray(rng.standard_normal(mlp.LAYER_SIZES[0]))
    out = {}
    for backend, table in kernels.backends().items():
        fwd = table["mlp_forward"]
        cos = table["cosine"]
        fwd(x, model.w1, model.b1, model.w2, model.b2, model.w3, model.b3)
        cos(x, a)
        fwd_ns = []
        for _ in range(rounds):
            t0 = time.perf_counter_ns()
            fwd(x, model.w1, model.b1, model.w2, model.b2, model.w3, model.b3)
            fwd_ns.append(time.perf_counter_ns() - t0)
        cos_ns = []
        for _ in range(rounds):
            t0 = time.perf_counter_ns()
            cos(x, a)
            cos_ns.append(time.perf_counter_ns() - t0)
        out[backend] = {
            "mlp_forward_us": float(np.median(fwd_ns)) / 1000.0,
            "cosine_us": float(np.median(cos_ns)) / 1000.0,
        }
    return out


def run_bench(
    traces: list[Trace],
    encoder: FeatureEncoder,
    whitelist: WhiteList,
    db: FingerprintDb,
    model: mlp.MlpModel,
    config: EngineConfig | None = None,
    repetitions: int = 3,
) -> BenchReport:
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    config = config if config is not None else EngineConfig()

    def engine_factory(db_):
        return classifier_candidates(model, db_, config.threshold_classify)

    # Warm-up pass (jit compilation, cache effects) stays off the clock.
    _run_mode(traces, encoder, whitelist, db, engine_factory, config, 1, measure=False)
    _run_mode(traces, encoder, whitelist, db, full_candidates, config, 1, measure=False)

    engine = _run_mode(
        traces, encoder, whitelist, db, engine_factory, config, repetitions, measure=True
    )
    naive = _run_mode(
        traces, encoder, whitelist, db, full_candidates, config, repetitions, measure=True
    )

    ratio = naive.comparisons_per_call / engine.comparisons_per_call if engine.comparisons_per_call else float("inf")
    return BenchReport(
        engine=engine,
        naive=naive,
        comparison_ratio=ratio,
        latency_ratio=naive.latency.median_us / engine.latency.median_us
        if engine.latency.median_us
        else float("inf"),
        param_count=model.param_count(),
        backend=kernels.ACTIVE_BACKEND,
        repetitions=repetitions,
        kernel_micro=_kernel_micro(model),
    )
