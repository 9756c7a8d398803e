"""Synthetic embedding datasets with controllable score geometry.

Model: every subject gets a unit identity direction; every image of that
subject is ``identity + noise / within_concentration`` renormalized, where
``noise`` has i.i.d. ``N(0, 1/dimension)`` entries (expected length ~1).
Identity directions are ``between_concentration * anchor + noise``
renormalized, with a single shared random ``anchor``; a concentration of 0
gives uniformly spread identities. Genuine cosine then sits near
``w^2 / (1 + w^2)`` for within-concentration ``w``.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import json
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .matching import RankOneResult
from .model import DemographicGroup, EmbeddingStore, ImageRecord

BASE_DATE = dt.date(2000, 1, 1)

# subjects per cohort in the reference face dataset, with the rounded mean image count
MORPH_COHORTS = (
    (DemographicGroup("C", "M"), 8835, 4),
    (DemographicGroup("C", "F"), 2798, 4),
    (DemographicGroup("AA", "M"), 8839, 6),
    (DemographicGroup("AA", "F"), 5928, 4),
)


@dataclass(frozen=True)
class GroupSpec:
    group: DemographicGroup
    n_subjects: int
    images_per_subject: int
    singleton_subjects: int = 0
    within_concentration: float | None = None

    def __post_init__(self):
        if self.n_subjects < 1 or self.images_per_subject < 1:
            raise ValueError("n_subjects and images_per_subject must be positive")
        if not 0 <= self.singleton_subjects <= self.n_subjects:
            raise ValueError("singleton_subjects must be within [0, n_subjects]")
        if self.within_concentration is not None and self.within_concentration <= 0:
            raise ValueError("within_concentration must be positive")


@dataclass(frozen=True)
class SynthSpec:
    """``singleton_subjects`` of a group get one image only; a group's
    ``within_concentration`` overrides the dataset-wide value."""

    groups: tuple[GroupSpec, ...]
    dimension: int = 512
    within_subject_concentration: float = 3.0
    between_subject_concentration: float = 0.0
    rng_seed: int = 0
    orthogonal_identities: bool = False

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        if not self.groups:
            raise ValueError("at least one group is required")
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if self.between_subject_concentration < 0:
            raise ValueError("between_subject_concentration must be non-negative")
        for w in [self.within_subject_concentration] + [g.within_concentration for g in self.groups]:
            if w is not None and not w > self.between_subject_concentration:
                raise ValueError("within-subject concentration must exceed between-subject concentration")
        if len({g.group for g in self.groups}) != len(self.groups):
            raise ValueError("duplicate group in spec")
        if self.orthogonal_identities and self.n_subjects > self.dimension:
            raise ValueError("orthogonal identities need n_subjects <= dimension")
        if not 0 <= self.rng_seed < 2**64:
            raise ValueError("rng_seed must be a 64-bit unsigned integer")

    @property
    def n_subjects(self) -> int:
        return sum(g.n_subjects for g in self.groups)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["groups"] = [
            {**dataclasses.asdict(g), "group": {"race": g.group.race_label, "gender": g.group.gender_label}}
            for g in self.groups
        ]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        groups = []
        for g in d.pop("groups"):
            g = dict(g)
            lab = g.pop("group")
            groups.append(GroupSpec(DemographicGroup(lab["race"], lab["gender"]), **g))
        return cls(groups=tuple(groups), **d)


def load_spec(path: str | os.PathLike) -> SynthSpec:
    with open(path, encoding="utf-8") as fh:
        return SynthSpec.from_dict(json.load(fh))


def morph_shaped_spec(dimension: int = 512, rng_seed: int = 0, **kw) -> SynthSpec:
    """Cohort sizes of the reference dataset; one C F subject is a singleton,
    leaving 2,797 eligible identities in the smallest cohort."""
    groups = tuple(
        GroupSpec(g, n, k, singleton_subjects=1 if g == DemographicGroup("C", "F") else 0)
        for g, n, k in MORPH_COHORTS
    )
    return SynthSpec(groups=groups, dimension=dimension, rng_seed=rng_seed, **kw)


def _unit_rows(a: np.ndarray) -> np.ndarray:
    return a / np.linalg.norm(a, axis=1, keepdims=True)


def generate(spec: SynthSpec) -> tuple[list[ImageRecord], EmbeddingStore]:
    rng = np.random.Generator(np.random.PCG64(spec.rng_seed))
    d = spec.dimension
    n_subj = spec.n_subjects
    z = rng.standard_normal((n_subj, d)) / np.sqrt(d)
    if spec.orthogonal_identities:
        q, r = np.linalg.qr(z.T)
        z = (q * np.sign(np.diag(r))).T
    anchor = _unit_rows(rng.standard_normal((1, d)))
    identities = _unit_rows(spec.between_subject_concentration * anchor + z)

    records, blocks = [], []
    subject = 0
    for gs in spec.groups:
        w = gs.within_concentration or spec.within_subject_concentration
        for k in range(gs.n_subjects):
            n_img = 1 if k < gs.singleton_subjects else gs.images_per_subject
            noise = rng.standard_normal((n_img, d)) / np.sqrt(d)
            blocks.append(_unit_rows(identities[subject] + noise / w))
            sid = f"s{subject:06d}"
            for j in range(n_img):
                records.append(ImageRecord(
                    image_id=f"{sid}_{j:03d}",
                    subject_id=sid,
                    group=gs.group,
                    capture_date=BASE_DATE + dt.timedelta(days=j),
                    embedding_index=len(records),
                ))
            subject += 1
    vectors = np.concatenate(blocks).astype(np.float32)
    return records, EmbeddingStore(vectors)


def shift_mated(results: Sequence[RankOneResult], delta: float) -> list[RankOneResult]:
    """Lower every mated score by ``delta`` (floored at -1).

    Mimics a probe degradation that pulls the mated distribution toward
    lower similarity while leaving non-mated scores alone.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    return [
        r if r.mated_score is None else dataclasses.replace(r, mated_score=max(-1.0, r.mated_score - delta))
        for r in results
    ]
