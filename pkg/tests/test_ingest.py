import datetime as dt
import struct

import numpy as np
import pytest
from hypothesis import given, settings, HealthCheck, strategies as st

from identik.errors import BadMagic, BadRow, MalformedHeader, NonFiniteValue, TruncatedFile
from identik.ingest import read_embeddings, read_manifest, write_embeddings, write_manifest
from identik.model import DemographicGroup, EmbeddingStore, ImageRecord

HEADER = "image_id,subject_id,race,gender,capture_date,embedding_index\n"


def _raw(path, dim, count, floats):
    path.write_bytes(struct.pack("<4sIQ", b"EMB1", dim, count) + struct.pack(f"<{len(floats)}f", *floats))


def test_manifest_rows_in_order(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text(HEADER + "i1,s1,AA,F,2004-05-06,1\ni0,s1,AA,F,2003-01-02,0\n")
    records = read_manifest(p)
    assert [r.image_id for r in records] == ["i1", "i0"]
    assert records[0].group == DemographicGroup("AA", "F")
    assert records[1].capture_date == dt.date(2003, 1, 2)


def test_header_only_manifest(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text(HEADER)
    assert read_manifest(p) == []


def test_bad_date_reports_line(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text(HEADER + "i1,s1,AA,F,2020-13-40,0\n")
    with pytest.raises(BadRow) as err:
        read_manifest(p)
    assert (err.value.line_no, err.value.reason) == (2, "invalid date")


@pytest.mark.parametrize("text", ["", "image_id,subject,race,gender,capture_date,embedding_index\n"])
def test_header_must_match(tmp_path, text):
    p = tmp_path / "m.csv"
    p.write_text(text)
    with pytest.raises(MalformedHeader):
        read_manifest(p)


@pytest.mark.parametrize("row,reason", [
    ("i1,s1,AA,F,2001-01-01,x", "invalid embedding_index"),
    ("i1,s1,AA,F,2001-01-01,-1", "embedding_index must be non-negative"),
    ("i1,s1,AA,F,1850-01-01,0", "precedes"),
    ("i1,s1,AA,F,2001-01-01", "expected 6 fields"),
])
def test_bad_rows(tmp_path, row, reason):
    p = tmp_path / "m.csv"
    p.write_text(HEADER + "i0,s1,AA,F,2001-01-01,0\n" + row + "\n")
    with pytest.raises(BadRow) as err:
        read_manifest(p)
    assert err.value.line_no == 3
    assert reason in err.value.reason


ids = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789_-.", min_size=1, max_size=8)


@settings(suppress_health_check=[HealthCheck.function_scoped_fixture], max_examples=50)
@given(st.lists(st.tuples(ids, ids, st.sampled_from(["AA", "C", "X y"]), st.sampled_from(["M", "F"]),
                          st.dates(dt.date(1900, 1, 1), dt.date(2100, 1, 1)), st.integers(0, 10**9)),
                max_size=20))
def test_manifest_round_trip(tmp_path, rows):
    records = [ImageRecord(i, s, DemographicGroup(r, g), d, k) for i, s, r, g, d, k in rows]
    p = tmp_path / "m.csv"
    write_manifest(records, p)
    again = read_manifest(p)
    assert again == records
    first = p.read_bytes()
    write_manifest(again, p)
    assert p.read_bytes() == first


def test_embeddings_dim4_count2(tmp_path):
    p = tmp_path / "e.emb"
    _raw(p, 4, 2, [1, 2, 3, 4, 5, 6, 7, 8])
    store = read_embeddings(p)
    assert (store.count, store.dimension) == (2, 4)
    np.testing.assert_array_equal(store.vectors, [[1, 2, 3, 4], [5, 6, 7, 8]])


def test_truncated_payload(tmp_path):
    p = tmp_path / "e.emb"
    _raw(p, 4, 1, [1, 2, 3])
    with pytest.raises(TruncatedFile):
        read_embeddings(p)


def test_short_header_and_bad_magic(tmp_path):
    p = tmp_path / "e.emb"
    p.write_bytes(b"EMB1\x04")
    with pytest.raises(TruncatedFile):
        read_embeddings(p)
    p.write_bytes(b"EMB2" + struct.pack("<IQ", 1, 0))
    with pytest.raises(BadMagic):
        read_embeddings(p)


def test_nan_reports_flat_index(tmp_path):
    p = tmp_path / "e.emb"
    _raw(p, 4, 2, [0, 1, 2, 3, 4, float("nan"), 6, 7])
    with pytest.raises(NonFiniteValue) as err:
        read_embeddings(p)
    assert err.value.index == 5


def test_inf_is_rejected_under_mmap(tmp_path):
    p = tmp_path / "e.emb"
    _raw(p, 2, 2, [0, 1, float("inf"), 3])
    with pytest.raises(NonFiniteValue) as err:
        read_embeddings(p, mmap=True)
    assert err.value.index == 2


def test_round_trip_3x512(tmp_path):
    rng = np.random.default_rng(3)
    store = EmbeddingStore(rng.standard_normal((3, 512)).astype(np.float32))
    p = tmp_path / "e.emb"
    write_embeddings(store, p)
    assert read_embeddings(p) == store
    assert p.read_bytes()[16:] == store.vectors.astype("<f4").tobytes()
    assert read_embeddings(p, mmap=True) == store


def test_empty_store_is_header_only(tmp_path):
    p = tmp_path / "e.emb"
    write_embeddings(EmbeddingStore.empty(512), p)
    assert p.read_bytes() == b"EMB1" + struct.pack("<IQ", 512, 0)
    back = read_embeddings(p)
    assert (back.count, back.dimension) == (0, 512)


def test_denormals_round_trip_bit_exact(tmp_path):
    bits = np.array([1, 2, 0x007FFFFF, 0x80000001, 0x00400000, 0x3F800000], dtype=np.uint32)
    store = EmbeddingStore(bits.view(np.float32).reshape(2, 3))
    p = tmp_path / "e.emb"
    write_embeddings(store, p)
    payload = p.read_bytes()[16:]
    # byte-compare oracle: the payload is exactly the little-endian bit patterns
    assert payload == bits.astype("<u4").tobytes()
    back = read_embeddings(p)
    assert back.vectors.view(np.uint32).tolist() == bits.reshape(2, 3).tolist()
    write_embeddings(back, tmp_path / "again.emb")
    assert (tmp_path / "again.emb").read_bytes() == p.read_bytes()
