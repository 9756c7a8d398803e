"""Core data types shared across the toolkit."""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import ZeroNorm

MIN_DATE = dt.date(1900, 1, 1)
COSINE_SLACK = 1e-6


@dataclass(frozen=True, order=True)
class DemographicGroup:
    """A cohort label pair, e.g. ``DemographicGroup("AA", "F")``.

    Labels are opaque tags; ordering is only defined so reports list
    groups in a stable order.
    """

    race_label: str
    gender_label: str

    def __post_init__(self):
        if not self.race_label or not self.gender_label:
            raise ValueError("group labels must be non-empty")

    @property
    def key(self) -> str:
        return f"{self.race_label} {self.gender_label}"

    @property
    def slug(self) -> str:
        return "".join(c if c.isalnum() or c in "-." else "_" for c in self.key)

    def __str__(self):
        return self.key


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    subject_id: str
    group: DemographicGroup
    capture_date: dt.date
    embedding_index: int

    def __post_init__(self):
        if not self.image_id or not self.subject_id:
            raise ValueError("image_id and subject_id must be non-empty")
        if self.capture_date < MIN_DATE:
            raise ValueError(f"capture_date {self.capture_date} precedes {MIN_DATE}")
        if self.embedding_index < 0:
            raise ValueError("embedding_index must be non-negative")


@dataclass(frozen=True, eq=False)
class EmbeddingStore:
    """A read-only ``count x dimension`` block of float32 vectors.

    Zero-norm rows are allowed to exist (``validate_dataset`` reports them)
    but :attr:`unit` refuses to normalize them.
    """

    vectors: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vectors)
        if v.ndim != 2 or v.shape[1] < 1:
            raise ValueError(f"expected a 2-d array with positive width, got shape {v.shape}")
        if v.dtype != np.float32:
            v = v.astype(np.float32)
        if first_nonfinite(v) is not None:
            raise ValueError("embedding vectors must be finite")
        if v.flags.writeable:
            v = v.copy()
            v.flags.writeable = False
        object.__setattr__(self, "vectors", v)

    @classmethod
    def empty(cls, dimension: int) -> "EmbeddingStore":
        return cls(np.zeros((0, dimension), dtype=np.float32))

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    @property
    def count(self) -> int:
        return int(self.vectors.shape[0])

    def __len__(self):
        return self.count

    def __eq__(self, other):
        if not isinstance(other, EmbeddingStore):
            return NotImplemented
        return (
            self.vectors.shape == other.vectors.shape
            and self.vectors.tobytes() == other.vectors.tobytes()
        )

    __hash__ = None

    @cached_property
    def norms(self) -> np.ndarray:
        v = self.vectors.astype(np.float64)
        return np.sqrt(np.einsum("ij,ij->i", v, v))

    @cached_property
    def unit(self) -> np.ndarray:
        """Rows scaled to unit length, in float64."""
        norms = self.norms
        bad = np.flatnonzero(norms == 0.0)
        if bad.size:
            raise ZeroNorm(f"embedding row {int(bad[0])} has zero norm")
        out = self.vectors.astype(np.float64) / norms[:, None]
        out.flags.writeable = False
        return out


def first_nonfinite(v: np.ndarray, chunk_rows: int = 4096):
    """Flat index of the first NaN/Inf in ``v``, or None. Scans in row chunks."""
    flat_width = v.shape[1] if v.ndim == 2 else 1
    for start in range(0, v.shape[0], chunk_rows):
        block = np.asarray(v[start:start + chunk_rows])
        bad = np.flatnonzero(~np.isfinite(block))
        if bad.size:
            return start * flat_width + int(bad[0])
    return None


@dataclass(frozen=True)
class ScoreSample:
    probe_image_id: str
    other_image_id: str
    score: float

    def __post_init__(self):
        s = float(self.score)
        if not (-1.0 - COSINE_SLACK <= s <= 1.0 + COSINE_SLACK):
            raise ValueError(f"score {s} outside [-1, 1]")
        object.__setattr__(self, "score", min(1.0, max(-1.0, s)))


@dataclass(frozen=True)
class DistributionStats:
    """Sample count, mean, population standard deviation, min and max."""

    n: int
    mean: float
    std_dev: float
    min: float
    max: float

    @classmethod
    def from_scores(cls, scores: Iterable[float]) -> "DistributionStats":
        xs = [float(x) for x in scores]
        n = len(xs)
        if n == 0:
            return cls(0, math.nan, math.nan, math.nan, math.nan)
        lo, hi = min(xs), max(xs)
        mean = min(hi, max(lo, math.fsum(xs) / n))
        var = math.fsum((x - mean) ** 2 for x in xs) / n
        return cls(n, mean, math.sqrt(var), lo, hi)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "mean": _finite_or_none(self.mean),
            "std_dev": _finite_or_none(self.std_dev),
            "min": _finite_or_none(self.min),
            "max": _finite_or_none(self.max),
        }


def _finite_or_none(x: float):
    return x if math.isfinite(x) else None


@dataclass
class ValidationReport:
    duplicates: list[str] = field(default_factory=list)
    inconsistent_subjects: list[str] = field(default_factory=list)
    out_of_range: list[str] = field(default_factory=list)
    zero_norm: list[int] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not (self.duplicates or self.inconsistent_subjects or self.out_of_range or self.zero_norm)

    def summary(self) -> str:
        if self.valid:
            return "dataset valid"
        parts = []
        for name in ("duplicates", "inconsistent_subjects", "out_of_range", "zero_norm"):
            items = getattr(self, name)
            if items:
                preview = ", ".join(str(x) for x in items[:3])
                more = f" (+{len(items) - 3} more)" if len(items) > 3 else ""
                parts.append(f"{name}: {preview}{more}")
        return "invalid dataset; " + "; ".join(parts)

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "duplicates": self.duplicates,
            "inconsistent_subjects": self.inconsistent_subjects,
            "out_of_range": self.out_of_range,
            "zero_norm": self.zero_norm,
        }


def validate_dataset(records: Sequence[ImageRecord], store: EmbeddingStore) -> ValidationReport:
    """Collect every structural problem instead of stopping at the first.

    ``out_of_range`` lists image ids whose embedding index is past the end
    of the store; ``zero_norm`` lists store rows with zero length.
    """
    report = ValidationReport()
    seen: set[str] = set()
    dup: set[str] = set()
    groups: dict[str, DemographicGroup] = {}
    bad_subjects: set[str] = set()
    for r in records:
        if r.image_id in seen:
            dup.add(r.image_id)
        seen.add(r.image_id)
        g = groups.setdefault(r.subject_id, r.group)
        if g != r.group:
            bad_subjects.add(r.subject_id)
        if r.embedding_index >= store.count:
            report.out_of_range.append(r.image_id)
    report.duplicates = sorted(dup)
    report.inconsistent_subjects = sorted(bad_subjects)
    report.zero_norm = [int(i) for i in np.flatnonzero(store.norms == 0.0)]
    return report


def groups_of(records: Iterable[ImageRecord]) -> list[DemographicGroup]:
    return sorted({r.group for r in records})
