import filecmp
import json

import numpy as np
import pytest

from chainwatch.corpus import (
    CorpusError,
    PaddingConfig,
    build_xy,
    emit_benign,
    emit_corpus,
    generate_corpus,
    load_split,
    read_manifest,
    trigger_index,
)
from chainwatch.synthgen import make_world
from chainwatch.trace import InstructionCall


def test_trigger_index_sql(sql_db):
    index = trigger_index(sql_db)
    assert index[("readLine", "invokevirtual", "Ljava/io/BufferedReader")] == frozenset({0})
    assert index[("executeQuery", "invokeinterface", "Ljava/sql/Statement")] == frozenset({0})
    assert len(index) == 3


def test_trigger_index_cross_labels(encoder):
    """A source call shared by several chains must carry all their ids."""
    world = make_world(
        n_exploits=3,
        seed=11,
        encoder=encoder,
        cwe_plan=[("CWE-89", 3)],
        share_source_fraction=1.0,
        benign_count=4,
    )
    db = world.db(encoder)
    shared = world.chains[0][0]
    assert world.chains[1][0] == shared and world.chains[2][0] == shared
    index = trigger_index(db)
    key = (shared.api_name, shared.category, shared.package)
    assert index[key] == frozenset({0, 1, 2})


def test_padding_config_validation():
    with pytest.raises(CorpusError):
        PaddingConfig(filler_rate=-1.0)
    with pytest.raises(CorpusError):
        PaddingConfig(per_sequence=0)
    with pytest.raises(CorpusError, match="benign pool"):
        PaddingConfig(filler_rate=2.0, benign_pool=())
    PaddingConfig(filler_rate=0.0)  # zero rate needs no pool


def test_emit_corpus_labels_and_padding(sql_db, small_world):
    index = trigger_index(sql_db)
    padding = PaddingConfig(
        benign_pool=tuple(small_world.benign_pool), filler_rate=1.5, per_sequence=3
    )
    rng = np.random.default_rng(0)
    seq = sql_db[0].templates
    items = emit_corpus([seq], 0, padding, index, rng)
    assert len(items) == 3
    for item in items:
        assert item.true_exploits == frozenset({0})
        assert len(item.calls) == len(item.label_sets)
        assert len(item.calls) >= len(seq)
        # the planted templates appear in order with label {0}
        planted = [c for c in item.calls if c in seq]
        assert planted == list(seq)
        for call, labels in zip(item.calls, item.label_sets):
            if call in seq:
                assert labels == frozenset({0})
            else:
                assert labels == frozenset()  # benign filler from another world


def test_emit_corpus_fallback_label(sql_db):
    """A sequence call with no template match falls back to the emitting id."""
    index = trigger_index(sql_db)
    stray = InstructionCall("strayHelper", "phi", "Application", "Ljava/lang/String")
    rng = np.random.default_rng(0)
    [item] = emit_corpus(
        [(stray,)], 0, PaddingConfig(filler_rate=0.0), index, rng
    )
    assert item.label_sets == [frozenset({0})]


def test_emit_benign(small_world, sql_db):
    index = trigger_index(sql_db)
    padding = PaddingConfig(benign_pool=tuple(small_world.benign_pool), filler_rate=1.0)
    items = emit_benign(5, 8.0, padding, index, np.random.default_rng(1))
    assert len(items) == 5
    for item in items:
        assert item.true_exploits == frozenset()
        assert all(labels == frozenset() for labels in item.label_sets)
        assert len(item.calls) >= 1
    with pytest.raises(CorpusError):
        emit_benign(2, 8.0, PaddingConfig(filler_rate=0.0), index, np.random.default_rng(1))


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory, small_world, encoder):
    out = tmp_path_factory.mktemp("corpus")
    db = small_world.db(encoder)
    sequences = {eid: [tuple(chain)] for eid, chain in small_world.chains.items()}
    manifest = generate_corpus(
        db,
        sequences,
        out,
        seed=7,
        split=0.85,
        benign_ratio=1.0,
        padding=PaddingConfig(
            benign_pool=tuple(small_world.benign_pool), filler_rate=2.0, per_sequence=10
        ),
    )
    return out, manifest, db


def test_generate_corpus_split_sizes(small_corpus):
    out, manifest, db = small_corpus
    # 6 exploits x 10 repeats + the same number of benign traces
    total = manifest["counts"]["train"] + manifest["counts"]["test"]
    assert total == 120
    assert manifest["counts"]["train"] == round(0.85 * total)
    assert len(list((out / "train").glob("trace_*.jsonl"))) == manifest["counts"]["train"]
    assert len(list((out / "test").glob("trace_*.jsonl"))) == manifest["counts"]["test"]


def test_generate_corpus_manifest(small_corpus):
    out, manifest, db = small_corpus
    assert read_manifest(out) == manifest
    assert manifest["seed"] == 7
    assert manifest["split"] == 0.85
    assert manifest["n_labels"] == 79
    assert len(manifest["true_exploits"]) == 120
    planted = [v for v in manifest["true_exploits"].values() if v]
    benign = [v for v in manifest["true_exploits"].values() if not v]
    assert len(planted) == 60 and len(benign) == 60


def test_generate_corpus_deterministic(tmp_path, small_world, encoder, small_corpus):
    """Same inputs and seed give byte-identical trees."""
    _, manifest, db = small_corpus
    sequences = {eid: [tuple(chain)] for eid, chain in small_world.chains.items()}
    a = tmp_path / "a"
    b = tmp_path / "b"
    for out in (a, b):
        generate_corpus(
            db,
            sequences,
            out,
            seed=7,
            split=0.85,
            benign_ratio=1.0,
            padding=PaddingConfig(
                benign_pool=tuple(small_world.benign_pool), filler_rate=2.0, per_sequence=10
            ),
        )
    for rel in sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file()):
        assert (b / rel).read_bytes() == (a / rel).read_bytes(), rel
    assert not filecmp.dircmp(a, b).diff_files


def test_load_split_round_trip(small_corpus, vocabs, encoder):
    out, manifest, db = small_corpus
    for split_name in ("train", "test"):
        items = load_split(out, split_name, vocabs)
        assert len(items) == manifest["counts"][split_name]
        for item in items:
            assert len(item.label_sets) == len(item.trace)
            assert item.true_exploits == frozenset(manifest["true_exploits"][item.name])
    # label matrix mirrors the label sets
    item = load_split(out, "test", vocabs)[0]
    mat = item.label_matrix(79)
    assert mat.shape == (len(item.trace), 79)
    for row, labels in zip(mat, item.label_sets):
        assert set(np.nonzero(row)[0]) == set(labels)


def test_build_xy(small_corpus, vocabs, encoder):
    out, manifest, db = small_corpus
    items = load_split(out, "test", vocabs)[:4]
    x, t = build_xy(items, encoder, 79)
    n = sum(len(it.trace) for it in items)
    assert x.shape == (n, 151)
    assert t.shape == (n, 79)
    np.testing.assert_array_equal(x[0], encoder.encode(items[0].trace.calls[0]))


def test_generate_corpus_validation(tmp_path, small_world, encoder):
    db = small_world.db(encoder)
    sequences = {0: [tuple(small_world.chains[0])]}
    with pytest.raises(CorpusError, match="split"):
        generate_corpus(db, sequences, tmp_path, split=1.0)
    with pytest.raises(CorpusError, match="benign_ratio"):
        generate_corpus(db, sequences, tmp_path, benign_ratio=-0.1)
    with pytest.raises(CorpusError, match="no sequences"):
        generate_corpus(db, {0: []}, tmp_path, benign_ratio=0.0)


def test_read_manifest_errors(tmp_path):
    with pytest.raises(CorpusError, match="missing manifest"):
        read_manifest(tmp_path)
    (tmp_path / "corpus.json").write_text('{"version": 99}\n')
    with pytest.raises(CorpusError, match="version"):
        read_manifest(tmp_path)


def test_load_split_errors(tmp_path, vocabs):
    (tmp_path / "corpus.json").write_text('{"version": 1, "true_exploits": {}}\n')
    with pytest.raises(CorpusError, match="missing split"):
        load_split(tmp_path, "train", vocabs)
