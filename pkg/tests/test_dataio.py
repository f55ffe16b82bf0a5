import numpy as np
import pytest

from sras.dataio import (
    EmbeddingStore,
    QAExample,
    build_candidate_pool,
    load_corpus_jsonl,
    load_qa_jsonl,
    read_embedding_store,
    write_embedding_store,
    write_qa_jsonl,
)
from sras.errors import DataError, FormatError
from sras.numcore import SeededRng


def small_store(seed=0, count=3, dim=4):
    rng = np.random.default_rng(seed)
    ids = [f"doc{i}" for i in range(count)]
    return EmbeddingStore(dim, ids, rng.standard_normal((count, dim)).astype(np.float32))


class TestEmbeddingStore:
    def test_round_trip_bit_exact(self, tmp_path):
        store = small_store()
        path = tmp_path / "emb.srse"
        write_embedding_store(store, path)
        loaded = read_embedding_store(path)
        assert loaded.ids == store.ids
        assert loaded.dim == store.dim
        assert loaded.matrix.tobytes() == store.matrix.tobytes()
        write_embedding_store(loaded, tmp_path / "again.srse")
        assert (tmp_path / "emb.srse").read_bytes() == (tmp_path / "again.srse").read_bytes()

    def test_empty_store_valid(self, tmp_path):
        store = EmbeddingStore(5, [], np.zeros((0, 5), dtype=np.float32))
        path = tmp_path / "empty.srse"
        write_embedding_store(store, path)
        loaded = read_embedding_store(path)
        assert len(loaded) == 0
        assert loaded.dim == 5

    def test_flipped_magic_rejected(self, tmp_path):
        path = tmp_path / "emb.srse"
        write_embedding_store(small_store(), path)
        data = bytearray(path.read_bytes())
        data[0] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="magic"):
            read_embedding_store(path)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "emb.srse"
        write_embedding_store(small_store(), path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) - 3])
        with pytest.raises(FormatError, match="truncated"):
            read_embedding_store(path)

    def test_trailing_garbage_rejected(self, tmp_path):
        path = tmp_path / "emb.srse"
        write_embedding_store(small_store(), path)
        path.write_bytes(path.read_bytes() + b"xx")
        with pytest.raises(FormatError, match="trailing"):
            read_embedding_store(path)

    def test_duplicate_ids_rejected(self):
        with pytest.raises(DataError, match="duplicate"):
            EmbeddingStore(2, ["a", "a"], np.zeros((2, 2), dtype=np.float32))

    def test_unknown_id_lookup(self):
        store = small_store()
        with pytest.raises(DataError, match="nope"):
            store.vector("nope")

    def test_unicode_ids_survive(self, tmp_path):
        store = EmbeddingStore.from_pairs(
            2, [("doc-éß", np.array([1.0, 2.0], dtype=np.float32))]
        )
        path = tmp_path / "emb.srse"
        write_embedding_store(store, path)
        assert read_embedding_store(path).ids == ["doc-éß"]

    def test_vectors_preserves_order(self):
        store = small_store()
        batch = store.vectors(["doc2", "doc0"])
        np.testing.assert_array_equal(batch[0], store.vector("doc2"))
        np.testing.assert_array_equal(batch[1], store.vector("doc0"))


class TestQAJsonl:
    def test_happy_path_order_preserved(self, tmp_path):
        path = tmp_path / "qa.jsonl"
        examples = [
            QAExample("q1", "who?", "alice", "d1", ("d1", "d2")),
            QAExample("q2", "when?", "1999", "d3", ("d2", "d3")),
        ]
        write_qa_jsonl(examples, path)
        loaded = load_qa_jsonl(path)
        assert [e.id for e in loaded] == ["q1", "q2"]
        assert loaded[0].candidate_doc_ids == ("d1", "d2")
        assert loaded[1].gold_index == 1

    def test_missing_field_cites_line(self, tmp_path):
        path = tmp_path / "qa.jsonl"
        path.write_text('{"id": "q1", "question": "?", "answer": "a", "candidate_doc_ids": ["d1"]}\n')
        with pytest.raises(DataError, match=r":1: missing field 'gold_doc_id'"):
            load_qa_jsonl(path)

    def test_malformed_json_cites_line(self, tmp_path):
        path = tmp_path / "qa.jsonl"
        path.write_text('{"id": "q1"\n')
        with pytest.raises(DataError, match=":1"):
            load_qa_jsonl(path)

    def test_gold_not_in_candidates(self, tmp_path):
        path = tmp_path / "qa.jsonl"
        path.write_text(
            '{"id": "q9", "question": "?", "answer": "a", "gold_doc_id": "dX",'
            ' "candidate_doc_ids": ["d1", "d2"]}\n'
        )
        with pytest.raises(DataError, match="q9"):
            load_qa_jsonl(path)

    def test_duplicate_candidates_rejected(self):
        with pytest.raises(DataError, match="duplicate"):
            QAExample("q1", "?", "a", "d1", ("d1", "d1"))

    def test_duplicate_example_ids_rejected(self, tmp_path):
        path = tmp_path / "qa.jsonl"
        row = '{"id": "q1", "question": "?", "answer": "a", "gold_doc_id": "d1", "candidate_doc_ids": ["d1"]}'
        path.write_text(row + "\n" + row + "\n")
        with pytest.raises(DataError, match=r":2: duplicate example id 'q1'"):
            load_qa_jsonl(path)


class TestCorpusJsonl:
    def test_load_and_duplicate_detection(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"id": "d1", "text": "alpha"}\n{"id": "d2", "text": "beta"}\n')
        docs = load_corpus_jsonl(path)
        assert [d.id for d in docs] == ["d1", "d2"]
        path.write_text('{"id": "d1", "text": "x"}\n{"id": "d1", "text": "y"}\n')
        with pytest.raises(DataError, match="duplicate"):
            load_corpus_jsonl(path)


class TestBuildCandidatePool:
    def test_forced_pool_when_corpus_exact(self):
        rng = SeededRng(0)
        corpus = [f"d{i}" for i in range(8)]
        pool = build_candidate_pool("d3", corpus, 8, rng)
        assert sorted(pool) == sorted(corpus)

    def test_gold_appears_exactly_once(self):
        corpus = [f"d{i}" for i in range(20)]
        for seed in range(50):
            pool = build_candidate_pool("d7", corpus, 8, SeededRng(seed))
            assert pool.count("d7") == 1
            assert len(set(pool)) == 8

    def test_corpus_too_small(self):
        with pytest.raises(DataError):
            build_candidate_pool("d0", ["d0", "d1"], 8, SeededRng(0))

    def test_distractor_frequencies_uniform(self):
        # each non-gold doc should appear as a distractor with frequency
        # (n-1)/(corpus-1) = 7/99; 100k trials, 3 standard errors
        corpus = [f"d{i}" for i in range(100)]
        rng = SeededRng(7)
        trials = 100_000
        counts = {c: 0 for c in corpus if c != "d0"}
        for _ in range(trials):
            for doc in build_candidate_pool("d0", corpus, 8, rng):
                if doc != "d0":
                    counts[doc] += 1
        p = 7 / 99
        se = np.sqrt(p * (1 - p) / trials)
        freqs = np.array([c / trials for c in counts.values()])
        assert np.all(np.abs(freqs - p) <= 3 * se)

    def test_gold_position_uniform(self):
        corpus = [f"d{i}" for i in range(30)]
        rng = SeededRng(11)
        trials = 20_000
        positions = np.zeros(8)
        for _ in range(trials):
            pool = build_candidate_pool("d5", corpus, 8, rng)
            positions[pool.index("d5")] += 1
        expected = trials / 8
        se = np.sqrt(trials * (1 / 8) * (7 / 8))
        assert np.all(np.abs(positions - expected) <= 4 * se)
