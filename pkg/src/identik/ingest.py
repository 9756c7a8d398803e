"""Manifest CSV and binary embedding file I/O.

Embedding container layout (all little-endian)::

    offset  size  field
    0       4     magic b"EMB1"
    4       4     u32 dimension
    8       8     u64 count
    16      4*dimension*count   float32 payload, row-major

The manifest is UTF-8 CSV with the exact header
``image_id,subject_id,race,gender,capture_date,embedding_index``.
"""

from __future__ import annotations

import csv
import datetime as dt
import os
import struct
from typing import Iterable

import numpy as np

from .errors import BadMagic, BadRow, MalformedEmbeddings, MalformedHeader, NonFiniteValue, TruncatedFile
from .model import DemographicGroup, EmbeddingStore, ImageRecord, first_nonfinite

MANIFEST_HEADER = ["image_id", "subject_id", "race", "gender", "capture_date", "embedding_index"]
MAGIC = b"EMB1"
_HEADER = struct.Struct("<4sIQ")


def read_manifest(path: str | os.PathLike) -> list[ImageRecord]:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise MalformedHeader(f"expected header {','.join(MANIFEST_HEADER)}, got {header}")
        for row in reader:
            line_no = reader.line_num
            if not row:
                continue
            records.append(_parse_row(row, line_no))
    return records


def _parse_row(row: list[str], line_no: int) -> ImageRecord:
    if len(row) != len(MANIFEST_HEADER):
        raise BadRow(line_no, f"expected {len(MANIFEST_HEADER)} fields, got {len(row)}")
    image_id, subject_id, race, gender, date_s, index_s = row
    try:
        date = dt.date.fromisoformat(date_s)
    except ValueError:
        raise BadRow(line_no, "invalid date") from None
    try:
        index = int(index_s)
    except ValueError:
        raise BadRow(line_no, "invalid embedding_index") from None
    try:
        return ImageRecord(image_id, subject_id, DemographicGroup(race, gender), date, index)
    except ValueError as exc:
        raise BadRow(line_no, str(exc)) from None


def write_manifest(records: Iterable[ImageRecord], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for r in records:
            writer.writerow([
                r.image_id,
                r.subject_id,
                r.group.race_label,
                r.group.gender_label,
                r.capture_date.isoformat(),
                r.embedding_index,
            ])


def read_embeddings(path: str | os.PathLike, mmap: bool = False) -> EmbeddingStore:
    """Load an embedding file.

    With ``mmap=True`` the payload stays on disk and pages in on demand;
    otherwise exactly ``count * dimension`` floats are read into memory.
    """
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise TruncatedFile(f"{path}: {len(head)} bytes, header needs {_HEADER.size}")
        magic, dim, count = _HEADER.unpack(head)
        if magic != MAGIC:
            raise BadMagic(f"{path}: magic {magic!r}, expected {MAGIC!r}")
        if dim == 0:
            raise MalformedEmbeddings(f"{path}: dimension must be positive")
        expected = _HEADER.size + 4 * dim * count
        actual = os.fstat(fh.fileno()).st_size
        if actual != expected:
            raise TruncatedFile(f"{path}: {actual} bytes, header promises {expected}")
        if mmap and count:
            vectors = np.memmap(path, dtype="<f4", mode="r", offset=_HEADER.size, shape=(count, dim))
        else:
            vectors = np.fromfile(fh, dtype="<f4", count=dim * count).reshape(count, dim)
    bad = first_nonfinite(vectors)
    if bad is not None:
        raise NonFiniteValue(bad)
    vectors.flags.writeable = False
    return EmbeddingStore(vectors)


def write_embeddings(store: EmbeddingStore, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, store.dimension, store.count))
        fh.write(np.ascontiguousarray(store.vectors, dtype="<f4").tobytes())
