"""Instruction-call vocabularies.

Categories and scopes are closed sets baked into the feature layout, so they
live here as module constants.  Package and I/O-type vocabularies are
deployment data: they are loaded from plain text files (one identifier per
line, line number = index) and must contain exactly the number of entries the
feature layout reserves for them.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field
from pathlib import Path

CATEGORIES = (
    "binaryop",
    "conversion",
    "getCaughtException",
    "getstatic",
    "invokeinterface",
    "invokespecial",
    "invokestatic",
    "invokevirtual",
    "phi",
)

SCOPES = ("Application", "Primordial")

N_CATEGORIES = len(CATEGORIES)  # 9
N_SCOPES = len(SCOPES)  # 2
N_PACKAGES = 22
N_IO_TYPES = 24

CATEGORY_INDEX = {name: i for i, name in enumerate(CATEGORIES)}
SCOPE_INDEX = {name: i for i, name in enumerate(SCOPES)}


class VocabularyError(ValueError):
    """A vocabulary file is missing, malformed, or has the wrong size."""


def _read_identifier_file(path: Path) -> list[str]:
    entries = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if any(ch.isspace() for ch in line):
            raise VocabularyError(
                f"{path.name} line {lineno}: identifier contains whitespace: {line!r}"
            )
        entries.append(line)
    return entries


def default_vocab_dir() -> Path:
    return Path(importlib.resources.files("chainwatch")) / "data" / "vocab"


@dataclass(frozen=True)
class Vocabularies:
    """Index maps for every text-valued instruction-call field."""

    packages: tuple[str, ...]
    io_types: tuple[str, ...]
    package_index: dict[str, int] = field(repr=False, default_factory=dict)
    io_type_index: dict[str, int] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if len(self.packages) != N_PACKAGES:
            raise VocabularyError(
                f"package vocabulary must have {N_PACKAGES} entries, got {len(self.packages)}"
            )
        if len(self.io_types) != N_IO_TYPES:
            raise VocabularyError(
                f"io-type vocabulary must have {N_IO_TYPES} entries, got {len(self.io_types)}"
            )
        for name, seq in (("package", self.packages), ("io-type", self.io_types)):
            if len(set(seq)) != len(seq):
                raise VocabularyError(f"duplicate entry in {name} vocabulary")
        object.__setattr__(self, "package_index", {p: i for i, p in enumerate(self.packages)})
        object.__setattr__(self, "io_type_index", {t: i for i, t in enumerate(self.io_types)})


def load_vocabularies(vocab_dir: str | Path | None = None) -> Vocabularies:
    """Load package/io-type vocabularies from ``vocab_dir`` (default: bundled).

    The directory must contain ``packages.txt`` and ``io_types.txt``.  An
    optional ``categories.txt`` is validated against the built-in category
    list; a mismatch is an error because category indices are frozen into the
    feature layout.
    """
    base = Path(vocab_dir) if vocab_dir is not None else default_vocab_dir()
    packages_file = base / "packages.txt"
    io_file = base / "io_types.txt"
    if not packages_file.is_file():
        raise VocabularyError(f"missing vocabulary file: {packages_file}")
    if not io_file.is_file():
        raise VocabularyError(f"missing vocabulary file: {io_file}")
    packages = _read_identifier_file(packages_file)
    io_types = _read_identifier_file(io_file)

    categories_file = base / "categories.txt"
    if categories_file.is_file():
        listed = tuple(_read_identifier_file(categories_file))
        if listed != CATEGORIES:
            raise VocabularyError(
                f"{categories_file} does not match the built-in category list"
            )

    return Vocabularies(packages=tuple(packages), io_types=tuple(io_types))
