"""Similarity scores: 1-to-1 genuine/impostor pairs and rank-one search.

Embeddings are L2-normalized once (float64), so cosine similarity is a dot
product. Rank-one search scores fixed-size probe chunks against the whole
gallery with one matrix product per chunk. Chunk boundaries do not depend
on the worker count, so every worker count produces the same bits.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import DimensionMismatch, InsufficientIdentities, ZeroNorm
from .model import DemographicGroup, DistributionStats, EmbeddingStore, ImageRecord
from .partition import ProbeGallerySplit

PROBE_CHUNK = 256
# scores closer than this are indistinguishable at float64 GEMM precision
TIE_TOLERANCE = 1e-12
PAIR_BLOCK = 1024

RANK_ONE_HEADER = [
    "probe_image_id", "subject_id", "race", "gender",
    "mated_score", "mated_argmax", "nonmated_score", "nonmated_argmax",
]


@dataclass(frozen=True)
class RankOneResult:
    probe_image_id: str
    subject_id: str
    group: DemographicGroup
    mated_score: float | None
    mated_argmax_image: str | None
    nonmated_score: float | None
    nonmated_argmax_image: str | None

    @property
    def has_mate(self) -> bool:
        return self.mated_score is not None

    @property
    def degenerate(self) -> bool:
        """True when the gallery holds no other subject to compare against."""
        return self.nonmated_score is None


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise DimensionMismatch(f"{u.shape[0]} vs {v.shape[0]}")
    if not (np.isfinite(u).all() and np.isfinite(v).all()):
        raise ValueError("vectors must be finite")
    nu = math.sqrt(float(np.dot(u, u)))
    nv = math.sqrt(float(np.dot(v, v)))
    if nu == 0.0 or nv == 0.0:
        raise ZeroNorm("cosine of a zero vector")
    # elementwise products commute, so dot(u, v) and dot(v, u) agree bitwise
    s = float(np.dot(u, v)) / (nu * nv)
    return min(1.0, max(-1.0, s))


def _clamp(x: float) -> float:
    return min(1.0, max(-1.0, float(x)))


@dataclass
class OneToOne:
    genuine: np.ndarray
    impostor: np.ndarray


def one_to_one_distributions(records: Sequence[ImageRecord], store: EmbeddingStore,
                             group_filter: DemographicGroup | None = None,
                             cross_group: bool = False,
                             impostor_rate: float | None = None,
                             seed: int = 0) -> OneToOne:
    """All same-subject (genuine) and different-subject (impostor) pairs.

    Pairs are enumerated as ``(i, j)``, ``i < j``, over ``records`` in input
    order. With ``group_filter``, genuine pairs and impostor pairs come from
    that cohort only; ``cross_group=True`` also admits impostor pairs whose
    other image lies outside the cohort.

    ``impostor_rate`` keeps each impostor pair independently with that
    probability. One uniform draw is consumed per candidate pair, in
    enumeration order, from ``Generator(PCG64(seed))``.
    """
    if impostor_rate is not None and not 0.0 < impostor_rate <= 1.0:
        raise ValueError("impostor_rate must be in (0, 1]")
    recs = list(records)
    if not recs:
        return OneToOne(np.empty(0), np.empty(0))
    unit = store.unit
    X = unit[[r.embedding_index for r in recs]]
    subj_codes = _codes([r.subject_id for r in recs])
    in_group = np.array([group_filter is None or r.group == group_filter for r in recs])
    rng = np.random.Generator(np.random.PCG64(seed)) if impostor_rate is not None else None

    genuine, impostor = [], []
    n = len(recs)
    for start in range(0, n, PAIR_BLOCK):
        stop = min(n, start + PAIR_BLOCK)
        S = X[start:stop] @ X.T
        for i in range(start, stop):
            row = S[i - start, i + 1:]
            same = subj_codes[i + 1:] == subj_codes[i]
            if in_group[i]:
                keep_other = np.ones(n - i - 1, bool) if cross_group else in_group[i + 1:]
            else:
                keep_other = in_group[i + 1:] if cross_group else np.zeros(n - i - 1, bool)
            genuine.append(row[same & in_group[i] & in_group[i + 1:]])
            imp_mask = ~same & keep_other
            imp = row[imp_mask]
            if rng is not None:
                imp = imp[rng.random(imp.size) < impostor_rate]
            impostor.append(imp)
    g = np.clip(np.concatenate(genuine), -1.0, 1.0)
    im = np.clip(np.concatenate(impostor), -1.0, 1.0)
    return OneToOne(g, im)


def _codes(values: Sequence[str]) -> np.ndarray:
    lookup = {v: i for i, v in enumerate(sorted(set(values)))}
    return np.array([lookup[v] for v in values], dtype=np.int64)


class _Gallery:
    """Gallery images in ascending image-id order, with subject codes."""

    def __init__(self, split: ProbeGallerySplit, records: Sequence[ImageRecord], store: EmbeddingStore):
        by_id = {r.image_id: r for r in records}
        self.by_id = by_id
        ids = sorted(split.gallery_images())
        subjects = sorted({r.subject_id for r in records})
        self.subject_code = {s: i for i, s in enumerate(subjects)}
        self.ids = ids
        self.subjects = np.array([self.subject_code[by_id[i].subject_id] for i in ids], dtype=np.int64)
        unit = store.unit if store.count else np.zeros((0, store.dimension))
        self.matrix = unit[[by_id[i].embedding_index for i in ids]] if ids else np.zeros((0, store.dimension))
        probe_ids = sorted(split.probes.values())
        self.probe_ids = probe_ids
        self.probe_subjects = np.array(
            [self.subject_code[by_id[p].subject_id] for p in probe_ids], dtype=np.int64)
        self.probe_matrix = unit[[by_id[p].embedding_index for p in probe_ids]] if probe_ids \
            else np.zeros((0, store.dimension))

    def chunks(self) -> Iterator[slice]:
        for start in range(0, len(self.probe_ids), PROBE_CHUNK):
            yield slice(start, min(len(self.probe_ids), start + PROBE_CHUNK))

    def scores(self, sl: slice) -> np.ndarray:
        return self.probe_matrix[sl] @ self.matrix.T


def _masked_max(S: np.ndarray, mask: np.ndarray):
    """Row-wise max of S where mask holds, and the first column within
    TIE_TOLERANCE of it; -1 argmax if the row has no admissible column.

    BLAS may round identical gallery rows differently depending on where
    they fall in a tile, so exact equality is not a usable tie test.
    """
    masked = np.where(mask, S, -np.inf)
    if masked.shape[1] == 0:
        return np.full(S.shape[0], -np.inf), np.full(S.shape[0], -1)
    best = masked.max(axis=1)
    arg = np.argmax(masked >= (best - TIE_TOLERANCE)[:, None], axis=1)
    arg = np.where(np.isneginf(best), -1, arg)
    return best, arg


def _map_chunks(fn, chunks, workers: int):
    chunks = list(chunks)
    if workers <= 1 or len(chunks) <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))


def rank_one_scores(split: ProbeGallerySplit, records: Sequence[ImageRecord], store: EmbeddingStore,
                    workers: int = 1) -> list[RankOneResult]:
    """Rank-one mated and non-mated score for every probe, sorted by probe id.

    Ties in score go to the smallest gallery image id.
    """
    gal = _Gallery(split, records, store)

    def work(sl: slice):
        S = gal.scores(sl)
        own = gal.subjects[None, :] == gal.probe_subjects[sl, None]
        return _masked_max(S, own), _masked_max(S, ~own)

    out = []
    for sl, ((m_best, m_arg), (n_best, n_arg)) in zip(gal.chunks(), _map_chunks(work, gal.chunks(), workers)):
        for k, pid in enumerate(gal.probe_ids[sl]):
            rec = gal.by_id[pid]
            mated = None if m_arg[k] < 0 else _clamp(m_best[k])
            nonmated = None if n_arg[k] < 0 else _clamp(n_best[k])
            out.append(RankOneResult(
                probe_image_id=pid,
                subject_id=rec.subject_id,
                group=rec.group,
                mated_score=mated,
                mated_argmax_image=None if mated is None else gal.ids[m_arg[k]],
                nonmated_score=nonmated,
                nonmated_argmax_image=None if nonmated is None else gal.ids[n_arg[k]],
            ))
    return out


@dataclass(frozen=True)
class SweepPoint:
    size: int
    subjects: tuple[str, ...]
    stats: DistributionStats
    nonmated: dict[str, float]


def gallery_size_sweep(split: ProbeGallerySplit, records: Sequence[ImageRecord], store: EmbeddingStore,
                       sizes: Sequence[int], rng_seed: int = 0, workers: int = 1) -> list[SweepPoint]:
    """Non-mated rank-one scores as the enrolled population grows.

    One random permutation of the enrollable subjects is drawn; the gallery
    at size ``s`` is its first ``s`` subjects, so smaller galleries nest
    inside larger ones. Scores come from a single pass over the full
    gallery and are masked per size, which makes the superset property
    exact. Probes with no other-subject image at a size are left out of
    that size.
    """
    enrollable = sorted(s for s, imgs in split.gallery.items() if imgs)
    if any(s < 1 for s in sizes):
        raise ValueError("sizes must be positive")
    if sizes and max(sizes) > len(enrollable):
        raise InsufficientIdentities("gallery", len(enrollable), max(sizes))
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    order = [enrollable[int(i)] for i in rng.permutation(len(enrollable))]

    gal = _Gallery(split, records, store)
    rank = np.full(len(gal.subject_code), len(order), dtype=np.int64)
    for pos, s in enumerate(order):
        rank[gal.subject_code[s]] = pos
    gallery_rank = rank[gal.subjects]

    def work(sl: slice):
        S = gal.scores(sl)
        other = gal.subjects[None, :] != gal.probe_subjects[sl, None]
        return [_masked_max(S, other & (gallery_rank < size)[None, :])[0] for size in sizes]

    per_chunk = _map_chunks(work, gal.chunks(), workers)
    points = []
    for k, size in enumerate(sizes):
        scores = {}
        for sl, chunk in zip(gal.chunks(), per_chunk):
            for pid, v in zip(gal.probe_ids[sl], chunk[k]):
                if not np.isneginf(v):
                    scores[pid] = _clamp(v)
        points.append(SweepPoint(size, tuple(sorted(order[:size])), DistributionStats.from_scores(scores.values()), scores))
    return points


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def write_rank_one_csv(results: Sequence[RankOneResult], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RANK_ONE_HEADER)
        for r in results:
            w.writerow([
                r.probe_image_id, r.subject_id, r.group.race_label, r.group.gender_label,
                _fmt(r.mated_score), r.mated_argmax_image or "",
                _fmt(r.nonmated_score), r.nonmated_argmax_image or "",
            ])


def read_rank_one_csv(path: str | os.PathLike) -> list[RankOneResult]:
    def opt(s: str):
        return float(s) if s else None

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != RANK_ONE_HEADER:
            raise ValueError(f"{path}: not a rank-one result file")
        return [
            RankOneResult(p, s, DemographicGroup(race, gender), opt(ms), ma or None, opt(ns), na or None)
            for p, s, race, gender, ms, ma, ns, na in reader
        ]
