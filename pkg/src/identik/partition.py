"""Probe/gallery construction and demographic balancing.

Each subject's most recent image is its probe; the rest are enrolled.
Date ties are broken by image id: the lexicographically greatest id is
treated as most recent.

Balanced sampling draws subjects with ``numpy.random.Generator(PCG64(seed))``.
PCG64 is a fixed, documented generator, so a given seed selects the same
identities on every platform.
"""

from __future__ import annotations

import json
import os
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InsufficientIdentities
from .model import DemographicGroup, DistributionStats, ImageRecord


@dataclass(frozen=True)
class ProbeGallerySplit:
    probes: Mapping[str, str]
    gallery: Mapping[str, tuple[str, ...]]
    singleton_subjects: frozenset[str] = field(default_factory=frozenset)

    def gallery_images(self) -> list[str]:
        return [img for subject in sorted(self.gallery) for img in self.gallery[subject]]

    def to_dict(self) -> dict:
        return {
            "probes": {s: self.probes[s] for s in sorted(self.probes)},
            "gallery": {s: list(self.gallery[s]) for s in sorted(self.gallery)},
            "singletons": sorted(self.singleton_subjects),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProbeGallerySplit":
        gallery = {s: tuple(v) for s, v in d["gallery"].items()}
        return cls(dict(d["probes"]), gallery, frozenset(d["singletons"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


@dataclass(frozen=True)
class BalanceSpec:
    identities_per_group: int
    enrolled_per_identity: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        if self.identities_per_group < 1 or self.enrolled_per_identity < 1:
            raise ValueError("identities_per_group and enrolled_per_identity must be positive")
        if not 0 <= self.rng_seed < 2**64:
            raise ValueError("rng_seed must be a 64-bit unsigned integer")


def _recency_key(r: ImageRecord):
    return (r.capture_date, r.image_id)


def _by_subject(records: Sequence[ImageRecord]) -> dict[str, list[ImageRecord]]:
    """Subject -> records, most recent first."""
    out: dict[str, list[ImageRecord]] = defaultdict(list)
    for r in records:
        out[r.subject_id].append(r)
    for imgs in out.values():
        imgs.sort(key=_recency_key, reverse=True)
    return dict(out)


def _enrolled_order(imgs: list[ImageRecord]) -> tuple[str, ...]:
    # newest first, ascending id among same-date images
    rest = sorted(imgs, key=lambda r: r.image_id)
    rest.sort(key=lambda r: r.capture_date, reverse=True)
    return tuple(r.image_id for r in rest)


def build_split(records: Sequence[ImageRecord]) -> ProbeGallerySplit:
    probes, gallery, singletons = {}, {}, set()
    for subject, imgs in sorted(_by_subject(records).items()):
        probes[subject] = imgs[0].image_id
        gallery[subject] = _enrolled_order(imgs[1:])
        if not gallery[subject]:
            singletons.add(subject)
    return ProbeGallerySplit(probes, gallery, frozenset(singletons))


def build_balanced_split(records: Sequence[ImageRecord], spec: BalanceSpec) -> ProbeGallerySplit:
    """Equal identities and enrolled images per demographic group.

    Subjects with fewer than ``1 + enrolled_per_identity`` images are dropped
    before sampling. Groups are visited in sorted order and all draws come
    from one generator, so the result depends only on records and seed.
    """
    by_subject = _by_subject(records)
    eligible: dict[DemographicGroup, list[str]] = defaultdict(list)
    for r in records:
        eligible.setdefault(r.group, [])
    need = 1 + spec.enrolled_per_identity
    for subject, imgs in by_subject.items():
        if len(imgs) >= need:
            eligible[imgs[0].group].append(subject)

    rng = np.random.Generator(np.random.PCG64(spec.rng_seed))
    probes, gallery = {}, {}
    for group in sorted(eligible):
        pool = sorted(eligible[group])
        if len(pool) < spec.identities_per_group:
            raise InsufficientIdentities(group.key, len(pool), spec.identities_per_group)
        picks = rng.choice(len(pool), size=spec.identities_per_group, replace=False)
        for i in sorted(int(p) for p in picks):
            subject = pool[i]
            imgs = by_subject[subject]
            probes[subject] = imgs[0].image_id
            gallery[subject] = _enrolled_order(imgs[1:])[: spec.enrolled_per_identity]
    probes = dict(sorted(probes.items()))
    gallery = dict(sorted(gallery.items()))
    return ProbeGallerySplit(probes, gallery, frozenset())


def time_between_mated(split: ProbeGallerySplit,
                       records: Sequence[ImageRecord]) -> dict[DemographicGroup, DistributionStats]:
    """Days between each probe and its most recent enrolled image, per group."""
    by_id = {r.image_id: r for r in records}
    gaps: dict[DemographicGroup, list[int]] = defaultdict(list)
    for subject, probe_id in split.probes.items():
        enrolled = split.gallery.get(subject, ())
        if not enrolled:
            continue
        probe = by_id[probe_id]
        latest = max(by_id[i].capture_date for i in enrolled)
        gaps[probe.group].append((probe.capture_date - latest).days)
    return {g: DistributionStats.from_scores(gaps[g]) for g in sorted(gaps)}


def write_split(split: ProbeGallerySplit, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(split.to_json())


def read_split(path: str | os.PathLike) -> ProbeGallerySplit:
    with open(path, encoding="utf-8") as fh:
        return ProbeGallerySplit.from_dict(json.load(fh))
