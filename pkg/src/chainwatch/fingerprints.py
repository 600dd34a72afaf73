"""Exploit fingerprint database and API white-list.

Fingerprint file grammar (newline-delimited JSON, blank lines ignored):

* a header object ``{"exploit_id": <int>, "cwe_id": "<str>", "label": "<str>"}``
  opens a fingerprint;
* every following non-header line is one ordered template in the trace record
  grammar, optionally extended with ``"role": "source" | "sink"`` used when
  lowering the fingerprint to a dataflow query.

Template feature vectors are encoded once at load time; the monitor compares
against these pre-encoded rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoder import VECTOR_DIM, FeatureEncoder
from .trace import InstructionCall, TraceError, parse_trace_record

DEFAULT_CAPACITY = 79

ROLE_SOURCE = "source"
ROLE_SINK = "sink"
_ROLES = (ROLE_SOURCE, ROLE_SINK)


class FingerprintError(ValueError):
    """Fingerprint file is malformed."""


class DuplicateExploitId(FingerprintError):
    pass


class EmptyFingerprint(FingerprintError):
    pass


@dataclass(frozen=True)
class Fingerprint:
    exploit_id: int
    cwe_id: str
    label: str
    templates: tuple[InstructionCall, ...]
    roles: tuple[str | None, ...]
    template_vectors: np.ndarray = field(repr=False)

    def __post_init__(self):
        if len(self.templates) == 0:
            raise EmptyFingerprint(f"exploit {self.exploit_id}: no templates")
        if len(self.roles) != len(self.templates):
            raise FingerprintError(f"exploit {self.exploit_id}: role/template length mismatch")
        if self.template_vectors.shape != (len(self.templates), VECTOR_DIM):
            raise FingerprintError(f"exploit {self.exploit_id}: bad template vector shape")

    def __len__(self) -> int:
        return len(self.templates)


@dataclass
class FingerprintDb:
    """All loaded fingerprints, keyed by exploit id (one fingerprint per id)."""

    fingerprints: dict[int, Fingerprint]
    capacity: int = DEFAULT_CAPACITY

    def __post_init__(self):
        for exploit_id in self.fingerprints:
            if not 0 <= exploit_id < self.capacity:
                raise FingerprintError(
                    f"exploit id {exploit_id} outside capacity [0, {self.capacity})"
                )

    def __len__(self) -> int:
        return len(self.fingerprints)

    def __contains__(self, exploit_id: int) -> bool:
        return exploit_id in self.fingerprints

    def __getitem__(self, exploit_id: int) -> Fingerprint:
        return self.fingerprints[exploit_id]

    @property
    def exploit_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.fingerprints))

    def cwe_index(self) -> dict[str, tuple[int, ...]]:
        """CWE id -> sorted exploit ids, for pooled per-CWE reporting."""
        index: dict[str, list[int]] = {}
        for fp in self.fingerprints.values():
            index.setdefault(fp.cwe_id, []).append(fp.exploit_id)
        return {cwe: tuple(sorted(ids)) for cwe, ids in sorted(index.items())}


def _parse_header(obj: dict, where: str) -> tuple[int, str, str]:
    expected = {"exploit_id", "cwe_id", "label"}
    if set(obj) != expected:
        raise FingerprintError(f"{where}: header must have exactly keys {sorted(expected)}")
    if not isinstance(obj["exploit_id"], int) or isinstance(obj["exploit_id"], bool):
        raise FingerprintError(f"{where}: exploit_id must be an integer")
    if not isinstance(obj["cwe_id"], str) or not isinstance(obj["label"], str):
        raise FingerprintError(f"{where}: cwe_id and label must be strings")
    return obj["exploit_id"], obj["cwe_id"], obj["label"]


def load_fingerprints(
    path: str | Path,
    encoder: FeatureEncoder,
    capacity: int = DEFAULT_CAPACITY,
) -> FingerprintDb:
    """Parse, validate and pre-encode a fingerprint file."""
    path = Path(path)
    fingerprints: dict[int, Fingerprint] = {}
    current: dict | None = None

    def finish(block):
        if block is None:
            return
        if not block["templates"]:
            raise EmptyFingerprint(
                f"{path}: exploit {block['exploit_id']} has no templates"
            )
        fp = Fingerprint(
            exploit_id=block["exploit_id"],
            cwe_id=block["cwe_id"],
            label=block["label"],
            templates=tuple(block["templates"]),
            roles=tuple(block["roles"]),
            template_vectors=np.stack([encoder.encode(c) for c in block["templates"]]),
        )
        fingerprints[fp.exploit_id] = fp

    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        where = f"{path} line {lineno}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FingerprintError(f"{where}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise FingerprintError(f"{where}: expected a JSON object")

        if "exploit_id" in obj:
            finish(current)
            exploit_id, cwe_id, label = _parse_header(obj, where)
            if exploit_id in fingerprints:
                raise DuplicateExploitId(f"{where}: duplicate exploit id {exploit_id}")
            current = {
                "exploit_id": exploit_id,
                "cwe_id": cwe_id,
                "label": label,
                "templates": [],
                "roles": [],
            }
            continue

        if current is None:
            raise FingerprintError(f"{where}: template record before any fingerprint header")
        role = obj.pop("role", None)
        if role is not None and role not in _ROLES:
            raise FingerprintError(f"{where}: role must be one of {_ROLES}, got {role!r}")
        try:
            call = parse_trace_record(json.dumps(obj), encoder.vocabs)
        except TraceError as exc:
            raise FingerprintError(f"{where}: bad template: {exc}") from exc
        current["templates"].append(call)
        current["roles"].append(role)

    finish(current)
    return FingerprintDb(fingerprints=fingerprints, capacity=capacity)


def validate_encoding(db: FingerprintDb, encoder: FeatureEncoder) -> None:
    """Re-encode every template and compare against the stored vectors."""
    for fp in db.fingerprints.values():
        fresh = np.stack([encoder.encode(c) for c in fp.templates])
        if not np.array_equal(fresh, fp.template_vectors):
            raise FingerprintError(
                f"exploit {fp.exploit_id}: stored template vectors disagree with encoder"
            )


class WhiteList:
    """API names exempt from classification and monitoring."""

    def __init__(self, names=()):
        self._names = frozenset(names)

    def __contains__(self, api_name: str) -> bool:
        return api_name in self._names

    def __len__(self) -> int:
        return len(self._names)

    @classmethod
    def from_file(cls, path: str | Path) -> "WhiteList":
        names = []
        for raw in Path(path).read_text().splitlines():
            line = raw.strip()
            if line and not line.startswith("#"):
                names.append(line)
        return cls(names)
