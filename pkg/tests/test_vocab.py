import pytest

from chainwatch.vocab import (
    CATEGORIES,
    CATEGORY_INDEX,
    N_IO_TYPES,
    N_PACKAGES,
    SCOPES,
    Vocabularies,
    VocabularyError,
    load_vocabularies,
)


def test_closed_sets():
    assert CATEGORIES == (
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
    assert SCOPES == ("Application", "Primordial")
    assert CATEGORY_INDEX["invokevirtual"] == 7
    assert N_PACKAGES == 22
    assert N_IO_TYPES == 24


def test_bundled_vocab_loads(vocabs):
    assert len(vocabs.packages) == 22
    assert len(vocabs.io_types) == 24
    assert vocabs.package_index[vocabs.packages[0]] == 0
    assert vocabs.io_type_index["String"] == 0


def test_wrong_size_rejected():
    with pytest.raises(VocabularyError, match="22 entries"):
        Vocabularies(packages=("a", "b"), io_types=tuple(f"t{i}" for i in range(24)))


def test_duplicate_rejected():
    pkgs = tuple(f"p{i}" for i in range(21)) + ("p0",)
    with pytest.raises(VocabularyError, match="duplicate"):
        Vocabularies(packages=pkgs, io_types=tuple(f"t{i}" for i in range(24)))


def test_missing_file(tmp_path):
    with pytest.raises(VocabularyError, match="missing"):
        load_vocabularies(tmp_path)


def test_categories_file_must_match(tmp_path):
    (tmp_path / "packages.txt").write_text("".join(f"p{i}\n" for i in range(22)))
    (tmp_path / "io_types.txt").write_text("".join(f"t{i}\n" for i in range(24)))
    (tmp_path / "categories.txt").write_text("alpha\nbeta\n")
    with pytest.raises(VocabularyError, match="category"):
        load_vocabularies(tmp_path)


def test_whitespace_identifier_rejected(tmp_path):
    (tmp_path / "packages.txt").write_text("ok\nhas space\n" + "".join(f"p{i}\n" for i in range(20)))
    (tmp_path / "io_types.txt").write_text("".join(f"t{i}\n" for i in range(24)))
    with pytest.raises(VocabularyError, match="whitespace"):
        load_vocabularies(tmp_path)
