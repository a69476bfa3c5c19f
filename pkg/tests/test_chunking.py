import numpy as np
import pytest

from chunkrec.chunking import (StreamBuffer, chunk_latency_ms, chunk_spans,
                               effective_latency_ms, left_context_mask,
                               num_chunks, split_chunks)
from chunkrec.errors import EmptyInputError, GeometryError, ProtocolError


def enumerate_chunk_count(L, W, B):
    """Independent oracle: walk chunk starts until the chunk reaches L."""
    count = 0
    start = 0
    while True:
        count += 1
        if start + W >= L:
            return count
        start += W - B


def test_num_chunks_single():
    assert num_chunks(10, 10, 3) == 1


def test_num_chunks_formula_points():
    assert num_chunks(100, 10, 2) == 13
    assert num_chunks(100, 10, 3) == 14  # best-performing geometry point


def test_num_chunks_matches_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        L = int(rng.integers(1, 501))
        W = int(rng.integers(1, L + 1))
        B = int(rng.integers(0, W))
        assert num_chunks(L, W, B) == enumerate_chunk_count(L, W, B), (L, W, B)


def test_num_chunks_geometry_errors():
    with pytest.raises(GeometryError):
        num_chunks(10, 5, 5)
    with pytest.raises(GeometryError):
        num_chunks(10, 0, 0)
    with pytest.raises(GeometryError):
        num_chunks(0, 5, 1)


def test_split_single_chunk():
    s = np.arange(20.0).reshape(10, 2)
    cs = split_chunks(s, 10, 3)
    assert len(cs.chunks) == 1
    assert np.array_equal(cs.chunks[0], s)


def test_split_spans():
    assert chunk_spans(18, 10, 2) == [(0, 10), (8, 18)]
    assert chunk_spans(17, 10, 2) == [(0, 10), (8, 17)]


def test_split_truncated_last_chunk():
    s = np.arange(17.0)[:, None]
    cs = split_chunks(s, 10, 2)
    assert [c.shape[0] for c in cs.chunks] == [10, 9]


def test_split_reconstruction():
    rng = np.random.default_rng(1)
    for _ in range(50):
        L = int(rng.integers(1, 80))
        W = int(rng.integers(1, L + 1))
        B = int(rng.integers(0, W))
        s = rng.normal(size=(L, 3))
        cs = split_chunks(s, W, B)
        assert len(cs.chunks) == num_chunks(L, W, B)
        assert np.array_equal(cs.concatenate_without_overlap(), s)


def test_left_context_mask_diagonal():
    assert np.array_equal(left_context_mask(3, 0), np.eye(3, dtype=bool))


def test_left_context_mask_full_window():
    assert np.array_equal(left_context_mask(3, 10), np.tril(np.ones((3, 3), dtype=bool)))


def test_left_context_mask_row():
    m = left_context_mask(5, 2)
    assert m[4].tolist() == [False, False, True, True, True]
    assert m.any(axis=1).all()


def test_mask_monotone_in_context():
    small = left_context_mask(12, 3)
    large = left_context_mask(12, 7)
    assert (large | ~small).all()  # enlarging never removes a True


def test_latency_values():
    assert chunk_latency_ms(10, 4, 10.0) == 400.0
    assert effective_latency_ms(10, 2, 4, 10.0) == 320.0
    assert chunk_latency_ms(1, 4, 10.0) == 40.0


def test_stream_buffer_equivalence_any_partition():
    rng = np.random.default_rng(2)
    for trial in range(30):
        T = int(rng.integers(4, 120))
        W = int(rng.integers(1, 8))
        B = int(rng.integers(0, W))
        frames = rng.normal(size=(T, 2))
        L = -(-(-(-T // 2)) // 2)
        offline = chunk_spans(L, W, B)
        n_cuts = int(rng.integers(0, min(T, 6)))
        cuts = sorted(rng.choice(np.arange(1, T), size=n_cuts, replace=False)) if n_cuts else []
        buf = StreamBuffer(W, B)
        got = []
        for frag in np.split(frames, cuts):
            got += buf.push(frag)
        got += buf.flush()
        assert got == offline, (T, W, B, cuts)


def test_stream_buffer_all_at_once():
    buf = StreamBuffer(4, 1)
    spans = buf.push(np.zeros((40, 2)))
    spans += buf.flush()
    assert spans == chunk_spans(10, 4, 1)


def test_stream_buffer_minimal_flush():
    buf = StreamBuffer(4, 1)
    assert buf.push(np.zeros((4, 2))) == []
    assert buf.flush() == [(0, 1)]


def test_stream_buffer_push_after_flush():
    buf = StreamBuffer(4, 1)
    buf.push(np.zeros((8, 2)))
    buf.flush()
    with pytest.raises(ProtocolError):
        buf.push(np.zeros((1, 2)))


def test_stream_buffer_empty_flush():
    buf = StreamBuffer(4, 1)
    with pytest.raises(EmptyInputError):
        buf.flush()
