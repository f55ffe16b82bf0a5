"""Bridge acceptance: everything the bridge writes must be consumed by the
selector pipeline with zero parse errors, vectors must be unit-norm, and
self-predictions must score near-perfect semantic similarity."""

import json
import struct
import subprocess

import numpy as np

from sras_bridge.cli import main as bridge_main
from sras_bridge.formats import read_jsonl

WORDS = (
    "amber basalt cedar delta ember fjord garnet harbor iris juniper krill "
    "lagoon marble nectar onyx pumice quartz reef slate tundra umber vortex"
).split()


def build_inputs(tmp_path, num_docs=12, num_questions=10):
    corpus = tmp_path / "corpus.jsonl"
    qa = tmp_path / "qa.jsonl"
    preds = tmp_path / "preds.jsonl"
    rng = np.random.default_rng(7)
    doc_rows = []
    for i in range(num_docs):
        text = " ".join(rng.choice(WORDS, size=6))
        doc_rows.append({"id": f"d{i:03d}", "text": f"{text} document {i}"})
    corpus.write_text("\n".join(json.dumps(r) for r in doc_rows) + "\n")

    qa_rows = []
    pred_rows = []
    for i in range(num_questions):
        gold = f"d{i % num_docs:03d}"
        candidates = [gold] + [f"d{(i + j) % num_docs:03d}" for j in range(1, 4)]
        answer = " ".join(rng.choice(WORDS, size=2))
        qa_rows.append(
            {
                "id": f"q{i:03d}",
                "question": f"which document mentions {answer}?",
                "answer": answer,
                "gold_doc_id": gold,
                "candidate_doc_ids": candidates,
            }
        )
        # self-predictions: the cached prediction equals the reference
        pred_rows.append(
            {"example_id": f"q{i:03d}", "doc_ids": candidates[:3], "prediction": answer}
        )
    qa.write_text("\n".join(json.dumps(r) for r in qa_rows) + "\n")
    preds.write_text("\n".join(json.dumps(r) for r in pred_rows) + "\n")
    return corpus, qa, preds


def read_store_vectors(path):
    raw = path.read_bytes()
    magic, version, dim, count = struct.unpack_from("<4sIIQ", raw, 0)
    assert magic == b"SRSE" and version == 1
    return np.frombuffer(raw, dtype="<f4", count=count * dim, offset=20).reshape(count, dim)


def test_bridge_contract(tmp_path, primary_env, primary_cmd):
    corpus, qa, preds = build_inputs(tmp_path)
    store = tmp_path / "emb.srse"
    cache = tmp_path / "cache.jsonl"
    manifest = tmp_path / "manifest.json"
    manifest.write_text(
        json.dumps(
            {
                "corpus_path": str(corpus),
                "qa_path": str(qa),
                "predictions_path": str(preds),
                "out_store": str(store),
                "out_cache": str(cache),
                "dim": 96,
                "encoder": "hashed-ngram-v1",
            }
        )
    )
    rc = bridge_main([str(manifest)])
    assert rc == 0

    # exported vectors have unit L2 norm within 1e-5
    vectors = read_store_vectors(store)
    assert vectors.shape == (22, 96)  # 12 docs + 10 queries
    np.testing.assert_allclose(np.linalg.norm(vectors, axis=1), 1.0, atol=1e-5)
    print("ACCEPTANCE bridge-unit-norm: PASS (22 vectors, max |norm-1| "
          f"{np.abs(np.linalg.norm(vectors, axis=1) - 1).max():.2e})")

    # self-prediction semantic score >= 0.95 on 10 spot-check pairs
    records = read_jsonl(cache, ("example_id", "doc_ids", "prediction", "semantic_score"))
    assert len(records) == 10
    scores = [r["semantic_score"] for r in records]
    assert all(s >= 0.95 for s in scores)
    print(f"ACCEPTANCE bridge-self-prediction: PASS (min score {min(scores):.3f} >= 0.95)")

    # the selector pipeline consumes both files with zero parse errors
    report = tmp_path / "report.json"
    result = subprocess.run(
        primary_cmd
        + [
            "eval", "--selector", "cosine", "--store", str(store), "--qa", str(qa),
            "--k", "3", "--semantic-source", "precomputed-cache", "--cache", str(cache),
            "--report-json", str(report), "--no-latency",
        ],
        env=primary_env,
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert result.returncode == 0, f"primary eval failed:\n{result.stderr}"
    payload = json.loads(report.read_text())
    assert payload["selector"] == "cosine"
    assert len(payload["per_example"]) == 10
    # cached self-predictions make the lexical and semantic sides perfect
    assert payload["mean_relaxed_f1"] == 1.0
    assert payload["mean_semantic"] >= 0.95
    print("ACCEPTANCE bridge-contract: PASS (primary eval consumed store + cache, exit 0)")


def test_bridge_embeddings_only_roundtrip(tmp_path, primary_env, primary_cmd):
    """A store-only export feeds the primary's synthetic-oracle eval path."""
    corpus, qa, _ = build_inputs(tmp_path, num_docs=8, num_questions=6)
    store = tmp_path / "emb.srse"
    manifest = tmp_path / "manifest.json"
    manifest.write_text(
        json.dumps(
            {
                "corpus_path": str(corpus),
                "qa_path": str(qa),
                "out_store": str(store),
                "dim": 64,
            }
        )
    )
    assert bridge_main([str(manifest)]) == 0
    report = tmp_path / "report.json"
    result = subprocess.run(
        primary_cmd
        + [
            "eval", "--selector", "random", "--store", str(store), "--qa", str(qa),
            "--k", "2", "--semantic-source", "synthetic-oracle",
            "--report-json", str(report), "--no-latency", "--seed", "3",
        ],
        env=primary_env,
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert result.returncode == 0, f"primary eval failed:\n{result.stderr}"
    assert len(json.loads(report.read_text())["per_example"]) == 6
