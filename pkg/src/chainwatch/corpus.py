"""Labeled trace corpus construction and loading.

A corpus directory holds ``train/`` and ``test/`` subdirectories plus a
``corpus.json`` manifest.  Each trace lives in ``trace_NNNNN.jsonl`` (trace
record grammar) with a sibling ``trace_NNNNN.labels`` carrying one line per
call: the comma-separated exploit ids that call can trigger, blank for none.
The manifest records the generator seed, the split fraction, and per-file
ground truth (which exploit chains run to completion in that trace).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoder import FeatureEncoder
from .fingerprints import FingerprintDb
from .trace import InstructionCall, Trace, read_trace, serialize_trace_record
from .vocab import Vocabularies

MANIFEST_NAME = "corpus.json"
MANIFEST_VERSION = 1


class CorpusError(ValueError):
    pass


@dataclass
class PaddingConfig:
    """Benign interleaving knobs for trace emission."""

    benign_pool: tuple[InstructionCall, ...] = ()
    filler_rate: float = 2.0
    per_sequence: int = 1

    def __post_init__(self):
        if self.filler_rate < 0:
            raise CorpusError("filler_rate must be >= 0")
        if self.per_sequence < 1:
            raise CorpusError("per_sequence must be >= 1")
        if self.filler_rate > 0 and not self.benign_pool:
            raise CorpusError("filler_rate > 0 requires a non-empty benign pool")


@dataclass
class TraceItem:
    calls: list[InstructionCall]
    label_sets: list[frozenset[int]]
    true_exploits: frozenset[int]


def trigger_index(db: FingerprintDb) -> dict[tuple[str, str, str], frozenset[int]]:
    """(api_name, category, package) -> exploit ids with a matching template.

    Uses the same match key as query lowering, so a call is labeled with every
    exploit whose chain it can advance, not just the one being emitted.
    """
    raw: dict[tuple[str, str, str], set[int]] = {}
    for fp in db.fingerprints.values():
        for t in fp.templates:
            raw.setdefault((t.api_name, t.category, t.package), set()).add(fp.exploit_id)
    return {key: frozenset(ids) for key, ids in raw.items()}


def _labels_for(call: InstructionCall, index) -> frozenset[int]:
    return index.get((call.api_name, call.category, call.package), frozenset())


def _draw_filler(pool, rng, rate: float) -> list[InstructionCall]:
    if rate <= 0 or not pool:
        return []
    return [pool[int(i)] for i in rng.integers(0, len(pool), size=int(rng.poisson(rate)))]


def emit_corpus(
    sequences,
    exploit_id: int,
    padding: PaddingConfig,
    index,
    rng: np.random.Generator,
) -> list[TraceItem]:
    """Expand one exploit's matched sequences into padded, labeled traces."""
    items = []
    for seq in sequences:
        for _ in range(padding.per_sequence):
            calls: list[InstructionCall] = []
            label_sets: list[frozenset[int]] = []
            for call in seq:
                for filler in _draw_filler(padding.benign_pool, rng, padding.filler_rate):
                    calls.append(filler)
                    label_sets.append(_labels_for(filler, index))
                calls.append(call)
                labels = _labels_for(call, index)
                label_sets.append(labels if labels else frozenset({exploit_id}))
            for filler in _draw_filler(padding.benign_pool, rng, padding.filler_rate):
                calls.append(filler)
                label_sets.append(_labels_for(filler, index))
            items.append(TraceItem(calls, label_sets, frozenset({exploit_id})))
    return items


def emit_benign(
    count: int,
    mean_length: float,
    padding: PaddingConfig,
    index,
    rng: np.random.Generator,
) -> list[TraceItem]:
    """Benign-only traces: pool calls, all-zero completion ground truth."""
    if count and not padding.benign_pool:
        raise CorpusError("benign traces requested but the benign pool is empty")
    items = []
    for _ in range(count):
        length = max(1, int(rng.poisson(mean_length)))
        calls = [padding.benign_pool[int(i)] for i in rng.integers(0, len(padding.benign_pool), size=length)]
        label_sets = [_labels_for(c, index) for c in calls]
        items.append(TraceItem(calls, label_sets, frozenset()))
    return items


def generate_corpus(
    db: FingerprintDb,
    sequences_by_exploit: dict[int, list],
    out_dir: str | Path,
    seed: int = 0,
    split: float = 0.85,
    benign_ratio: float = 1.0,
    padding: PaddingConfig | None = None,
) -> dict:
    """Build and write a full corpus directory; returns the manifest dict."""
    if not 0.0 < split < 1.0:
        raise CorpusError(f"split must lie in (0, 1), got {split}")
    if benign_ratio < 0:
        raise CorpusError("benign_ratio must be >= 0")
    padding = padding if padding is not None else PaddingConfig(filler_rate=0.0)
    rng = np.random.default_rng(seed)
    index = trigger_index(db)

    items: list[TraceItem] = []
    for exploit_id in sorted(sequences_by_exploit):
        items.extend(
            emit_corpus(sequences_by_exploit[exploit_id], exploit_id, padding, index, rng)
        )
    if not items:
        raise CorpusError("no sequences to emit")
    mean_length = float(np.mean([len(it.calls) for it in items]))
    items.extend(emit_benign(round(benign_ratio * len(items)), mean_length, padding, index, rng))

    order = rng.permutation(len(items))
    n_train = round(split * len(items))
    out = Path(out_dir)
    splits = {"train": order[:n_train], "test": order[n_train:]}
    truth: dict[str, list[int]] = {}
    counts = {}
    for split_name, idxs in splits.items():
        sub = out / split_name
        sub.mkdir(parents=True, exist_ok=True)
        for file_no, item_idx in enumerate(idxs):
            item = items[int(item_idx)]
            stem = f"trace_{file_no:05d}"
            with open(sub / f"{stem}.jsonl", "w") as fh:
                for call in item.calls:
                    fh.write(serialize_trace_record(call) + "\n")
            with open(sub / f"{stem}.labels", "w") as fh:
                for labels in item.label_sets:
                    fh.write(",".join(str(i) for i in sorted(labels)) + "\n")
            truth[f"{split_name}/{stem}"] = sorted(item.true_exploits)
        counts[split_name] = len(idxs)

    manifest = {
        "version": MANIFEST_VERSION,
        "seed": seed,
        "split": split,
        "benign_ratio": benign_ratio,
        "filler_rate": padding.filler_rate,
        "per_sequence": padding.per_sequence,
        "n_labels": db.capacity,
        "counts": counts,
        "true_exploits": truth,
    }
    with open(out / MANIFEST_NAME, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest


@dataclass
class CorpusItem:
    name: str
    trace: Trace
    label_sets: list[frozenset[int]]
    true_exploits: frozenset[int]

    def label_matrix(self, n_labels: int) -> np.ndarray:
        out = np.zeros((len(self.label_sets), n_labels), dtype=np.float64)
        for row, labels in enumerate(self.label_sets):
            for i in labels:
                out[row, i] = 1.0
        return out


def read_manifest(corpus_dir: str | Path) -> dict:
    path = Path(corpus_dir) / MANIFEST_NAME
    if not path.is_file():
        raise CorpusError(f"missing manifest: {path}")
    manifest = json.loads(path.read_text())
    if manifest.get("version") != MANIFEST_VERSION:
        raise CorpusError(f"{path}: unsupported manifest version {manifest.get('version')}")
    return manifest


def _read_labels(path: Path) -> list[frozenset[int]]:
    sets = []
    for raw in path.read_text().splitlines():
        line = raw.strip()
        sets.append(frozenset(int(p) for p in line.split(",") if p) if line else frozenset())
    return sets


def load_split(
    corpus_dir: str | Path,
    split_name: str,
    vocabs: Vocabularies,
) -> list[CorpusItem]:
    corpus_dir = Path(corpus_dir)
    manifest = read_manifest(corpus_dir)
    sub = corpus_dir / split_name
    if not sub.is_dir():
        raise CorpusError(f"missing split directory: {sub}")
    items = []
    for trace_path in sorted(sub.glob("trace_*.jsonl")):
        stem = trace_path.stem
        with open(trace_path) as fh:
            trace = read_trace(fh, vocabs, source_id=f"{split_name}/{stem}")
        label_sets = _read_labels(trace_path.with_suffix(".labels"))
        if len(label_sets) != len(trace):
            raise CorpusError(f"{trace_path}: {len(trace)} calls but {len(label_sets)} label lines")
        key = f"{split_name}/{stem}"
        truth = frozenset(manifest["true_exploits"].get(key, ()))
        items.append(CorpusItem(name=key, trace=trace, label_sets=label_sets, true_exploits=truth))
    if not items:
        raise CorpusError(f"no traces found under {sub}")
    return items


def build_xy(
    items: list[CorpusItem],
    encoder: FeatureEncoder,
    n_labels: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Stack every call of every trace into training arrays (X, T)."""
    cache: dict[InstructionCall, np.ndarray] = {}
    xs, ts = [], []
    for item in items:
        for call, labels in zip(item.trace.calls, item.label_sets):
            vec = cache.get(call)
            if vec is None:
                vec = encoder.encode(call)
                cache[call] = vec
            xs.append(vec)
            row = np.zeros(n_labels, dtype=np.float64)
            for i in labels:
                row[i] = 1.0
            ts.append(row)
    return np.stack(xs), np.stack(ts)
