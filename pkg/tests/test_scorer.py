import math

import numpy as np
import pytest

from sras.errors import FormatError, ShapeError
from sras.numcore import SeededRng
from sras.scorer import (
    HEADER_BYTES,
    ScoreGradients,
    SelectorParams,
    init_params,
    load_params,
    model_bytes,
    param_count,
    save_params,
    score_candidates,
    score_forward,
    score_forward_batch,
    score_gradients,
    score_gradients_batch,
)


def straight_line_scores(w_q, w_d, w, q, docs):
    """Oracle: unvectorized elementwise evaluation of w . tanh(W_q q + W_d d_i)."""
    h, d = w_q.shape
    out = []
    for doc in docs:
        s = 0.0
        for j in range(h):
            z = 0.0
            for i in range(d):
                z += float(w_q[j, i]) * float(q[i]) + float(w_d[j, i]) * float(doc[i])
            s += float(w[j]) * math.tanh(z)
        out.append(s)
    return np.array(out)


def random_params(d, h, seed):
    return init_params(d, h, SeededRng(seed))


class TestScoreCandidates:
    def test_zero_head_scores_zero(self):
        p = random_params(4, 3, 0)
        p.w[:] = 0.0
        scores = score_candidates(p, np.ones(4), np.ones((2, 4)))
        np.testing.assert_array_equal(scores, [0.0, 0.0])

    def test_zero_inputs_score_zero(self):
        p = random_params(4, 3, 1)
        scores = score_candidates(p, np.zeros(4), np.zeros((2, 4)))
        np.testing.assert_allclose(scores, [0.0, 0.0], atol=1e-15)

    def test_matches_straight_line_oracle(self):
        rng = np.random.default_rng(11)
        p = random_params(4, 3, 2)
        q = rng.standard_normal(4)
        docs = rng.standard_normal((2, 4))
        expected = straight_line_scores(
            p.w_q.astype(np.float64), p.w_d.astype(np.float64), p.w.astype(np.float64), q, docs
        )
        np.testing.assert_allclose(score_candidates(p, q, docs), expected, atol=1e-12)

    def test_dim_mismatch(self):
        p = random_params(4, 3, 3)
        with pytest.raises(ShapeError):
            score_candidates(p, np.ones(5), np.ones((2, 4)))
        with pytest.raises(ShapeError):
            score_candidates(p, np.ones(4), np.ones((2, 5)))

    def test_query_enters_only_through_projection(self):
        # two queries with equal W_q q yield identical scores
        rng = np.random.default_rng(4)
        p = random_params(6, 3, 5)
        q1 = rng.standard_normal(6)
        # q2 = q1 + null-space perturbation of W_q
        w_q = p.w_q.astype(np.float64)
        _, _, vt = np.linalg.svd(w_q)
        null_dir = vt[-1]  # h=3 < d=6 so a null direction exists
        assert np.allclose(w_q @ null_dir, 0.0, atol=1e-12)
        q2 = q1 + 7.3 * null_dir
        docs = rng.standard_normal((4, 6))
        np.testing.assert_allclose(
            score_candidates(p, q1, docs), score_candidates(p, q2, docs), atol=1e-9
        )

    def test_scores_bounded_by_head_l1_norm(self):
        rng = np.random.default_rng(8)
        p = random_params(5, 4, 9)
        bound = np.abs(p.w.astype(np.float64)).sum()
        for _ in range(10):
            scores = score_candidates(p, rng.standard_normal(5), rng.standard_normal((3, 5)))
            assert np.all(np.abs(scores) <= bound + 1e-12)

    def test_batch_forward_matches_single(self):
        rng = np.random.default_rng(12)
        p = random_params(7, 4, 13)
        queries = rng.standard_normal((5, 7))
        blocks = rng.standard_normal((5, 3, 7))
        batch_scores, batch_tanh = score_forward_batch(p, queries, blocks)
        for b in range(5):
            single, tanh_single = score_forward(p, queries[b], blocks[b])
            np.testing.assert_allclose(batch_scores[b], single, atol=1e-12)
            np.testing.assert_allclose(batch_tanh[b], tanh_single, atol=1e-12)


def finite_difference_grads(params, q, docs, upstream, step=1e-5):
    """Central differences on L = sum_i upstream_i * s_i, all in float64."""
    tensors = {
        "w_q": params.w_q.astype(np.float64),
        "w_d": params.w_d.astype(np.float64),
        "w": params.w.astype(np.float64),
    }

    def loss(t):
        # evaluated in float64 directly: float32 casting inside
        # SelectorParams would corrupt the finite differences
        h_q = t["w_q"] @ q
        z = h_q[None, :] + np.asarray(docs) @ t["w_d"].T
        s = np.tanh(z) @ t["w"]
        return float(np.asarray(upstream) @ s)

    out = {}
    for name, base in tensors.items():
        g = np.zeros_like(base)
        it = np.nditer(base, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            bumped = {k: v.copy() for k, v in tensors.items()}
            bumped[name][idx] += step
            up = loss(bumped)
            bumped[name][idx] -= 2 * step
            down = loss(bumped)
            g[idx] = (up - down) / (2 * step)
            it.iternext()
        out[name] = g
    return out


def float64_analytic_grads(w_q, w_d, w, q, docs, upstream):
    """Analytic gradients evaluated at exact float64 weights (no f32 cast)."""
    z = (w_q @ q)[None, :] + np.asarray(docs) @ w_d.T
    t = np.tanh(z)
    g = np.asarray(upstream, dtype=np.float64)
    u = (1.0 - t * t) * w[None, :] * g[:, None]
    return {
        "w": t.T @ g,
        "w_q": np.outer(u.sum(axis=0), np.asarray(q)),
        "w_d": u.T @ np.asarray(docs),
    }


class TestScoreGradients:
    def test_zero_upstream_zero_gradients(self):
        p = random_params(4, 3, 20)
        rng = np.random.default_rng(20)
        g = score_gradients(p, rng.standard_normal(4), rng.standard_normal((2, 4)), np.zeros(2))
        for tensor in (g.d_w_q, g.d_w_d, g.d_w):
            np.testing.assert_array_equal(tensor, np.zeros_like(tensor))

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(21)
        worst = 0.0
        for trial in range(5):
            d, h, n = 8, 5, 3
            # round weights to float32-representable values so the analytic
            # path (float32 storage, float64 math) and the float64 finite
            # differences evaluate the exact same function
            w_q = rng.uniform(-0.5, 0.5, (h, d)).astype(np.float32).astype(np.float64)
            w_d = rng.uniform(-0.5, 0.5, (h, d)).astype(np.float32).astype(np.float64)
            w = rng.uniform(-0.5, 0.5, h).astype(np.float32).astype(np.float64)
            q = rng.standard_normal(d)
            docs = rng.standard_normal((n, d))
            upstream = rng.standard_normal(n)
            params = SelectorParams(w_q, w_d, w)
            analytic = score_gradients(params, q, docs, upstream)
            numeric = finite_difference_grads(params, q, docs, upstream)
            for name, got in (
                ("w_q", analytic.d_w_q),
                ("w_d", analytic.d_w_d),
                ("w", analytic.d_w),
            ):
                scale = np.maximum(np.abs(numeric[name]), 1e-3)
                rel = np.abs(got - numeric[name]) / scale
                worst = max(worst, float(rel.max()))
        assert worst <= 1e-4

    def test_scalar_symbolic_case(self):
        # n=1, h=1, d=1: dW_q = upstream * w * (1 - tanh^2(w_q q + w_d d)) * q
        w_q, w_d, w, q, doc, up = 0.3, -0.7, 1.1, 0.9, -0.4, 1.0
        p = SelectorParams(np.array([[w_q]]), np.array([[w_d]]), np.array([w]))
        g = score_gradients(p, [q], [[doc]], [up])
        # evaluate the symbolic form at the float32-stored weight values
        z = float(np.float32(w_q)) * q + float(np.float32(w_d)) * doc
        expected = up * float(np.float32(w)) * (1 - math.tanh(z) ** 2) * q
        assert abs(g.d_w_q[0, 0] - expected) < 1e-9

    def test_upstream_shape_checked(self):
        p = random_params(3, 2, 22)
        with pytest.raises(ShapeError):
            score_gradients(p, np.ones(3), np.ones((2, 3)), np.ones(3))

    def test_batch_gradients_match_single_sum(self):
        rng = np.random.default_rng(23)
        p = random_params(6, 4, 24)
        queries = rng.standard_normal((3, 6))
        blocks = rng.standard_normal((3, 2, 6))
        upstream = rng.standard_normal((3, 2))
        _, tanh_b = score_forward_batch(p, queries, blocks)
        batch = score_gradients_batch(p, queries, blocks, tanh_b, upstream)
        total = {name: np.zeros_like(t) for name, t in batch.tensors().items()}
        for b in range(3):
            g = score_gradients(p, queries[b], blocks[b], upstream[b])
            for name, t in g.tensors().items():
                total[name] += t
        for name in total:
            np.testing.assert_allclose(batch.tensors()[name], total[name], atol=1e-10)


class TestParamCount:
    def test_default_dims(self):
        assert param_count(random_params(384, 256, 0)) == 196_864

    def test_minimal(self):
        assert param_count(random_params(1, 1, 0)) == 3

    def test_half_hidden(self):
        assert param_count(random_params(384, 128, 0)) == 98_432


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        p = random_params(12, 7, 30)
        path = tmp_path / "model.srsm"
        save_params(p, path)
        loaded = load_params(path)
        for name in ("w_q", "w_d", "w"):
            np.testing.assert_array_equal(
                getattr(p, name).tobytes(), getattr(loaded, name).tobytes()
            )
        save_params(loaded, tmp_path / "again.srsm")
        assert (tmp_path / "model.srsm").read_bytes() == (tmp_path / "again.srsm").read_bytes()

    def test_default_model_file_size(self, tmp_path):
        p = random_params(384, 256, 31)
        path = tmp_path / "model.srsm"
        save_params(p, path)
        size = path.stat().st_size
        assert size == HEADER_BYTES + 4 * 196_864 == 787_480
        # comfortably inside the documented ~0.76 MB envelope
        assert 0.70 < size / (1024 * 1024) < 0.78

    def test_truncated_file_rejected(self, tmp_path):
        p = random_params(6, 4, 32)
        path = tmp_path / "model.srsm"
        save_params(p, path)
        data = path.read_bytes()
        path.write_bytes(data[:-5])
        with pytest.raises(FormatError, match="expected"):
            load_params(path)

    def test_bad_magic_rejected(self, tmp_path):
        p = random_params(6, 4, 33)
        path = tmp_path / "model.srsm"
        save_params(p, path)
        data = bytearray(path.read_bytes())
        data[0] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="magic"):
            load_params(path)

    def test_bad_version_rejected(self, tmp_path):
        p = random_params(6, 4, 34)
        path = tmp_path / "model.srsm"
        save_params(p, path)
        data = bytearray(path.read_bytes())
        data[4] = 99
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="version"):
            load_params(path)

    def test_minimal_model_size(self):
        assert len(model_bytes(random_params(1, 1, 35))) == 36


class TestInit:
    def test_init_ranges(self):
        p = init_params(64, 16, SeededRng(40))
        assert np.abs(p.w_q).max() <= 1 / math.sqrt(64)
        assert np.abs(p.w_d).max() <= 1 / math.sqrt(64)
        assert np.abs(p.w).max() <= 1 / math.sqrt(16)

    def test_init_deterministic(self):
        a = init_params(8, 4, SeededRng(41))
        b = init_params(8, 4, SeededRng(41))
        np.testing.assert_array_equal(a.w_q, b.w_q)
        np.testing.assert_array_equal(a.w_d, b.w_d)
        np.testing.assert_array_equal(a.w, b.w)

    def test_nonfinite_params_rejected(self):
        with pytest.raises(ShapeError):
            SelectorParams(np.full((2, 2), np.nan), np.zeros((2, 2)), np.zeros(2))
