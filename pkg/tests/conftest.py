import datetime as dt
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from identik.model import DemographicGroup, EmbeddingStore, ImageRecord  # noqa: E402
from identik.synth import GroupSpec, SynthSpec  # noqa: E402

CM = DemographicGroup("C", "M")
CF = DemographicGroup("C", "F")
AAM = DemographicGroup("AA", "M")
AAF = DemographicGroup("AA", "F")


def rec(image_id, subject_id, date, index, group=CM):
    if isinstance(date, str):
        date = dt.date.fromisoformat(date)
    return ImageRecord(image_id, subject_id, group, date, index)


def store_of(rows):
    return EmbeddingStore(np.asarray(rows, dtype=np.float32))


def small_spec(seed=0, **kw):
    groups = kw.pop("groups", (
        GroupSpec(CM, 12, 3, singleton_subjects=1),
        GroupSpec(CF, 10, 4),
        GroupSpec(AAM, 8, 2),
        GroupSpec(AAF, 9, 3),
    ))
    return SynthSpec(groups=groups, dimension=kw.pop("dimension", 16), rng_seed=seed,
                     within_subject_concentration=kw.pop("within_subject_concentration", 1.5), **kw)


@pytest.fixture
def toy():
    """Probe of subject A scores 1.0 / 0.0 / 0.7071 against e1 (A), e2 (B), e3 (C)."""
    records = [
        rec("p", "A", "2005-01-01", 0),
        rec("e1", "A", "2001-01-01", 1),
        rec("e2", "B", "2001-01-01", 2),
        rec("e3", "C", "2001-01-01", 3),
        rec("e2b", "B", "2002-01-01", 4),
        rec("e3b", "C", "2002-01-01", 5),
    ]
    store = store_of([[1, 0], [1, 0], [0, 1], [1, 1], [0, 1], [1, 1]])
    return records, store


def image_corpus(n, seed=0, lo=32, hi=64):
    """Mixed smooth texture, noise and hard edges; alternating grayscale and RGB."""
    from identik.degrade import RasterImage
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        h, w = (int(v) for v in rng.integers(lo, hi + 1, 2))
        c = 3 if i % 2 else 1
        yy, xx = np.mgrid[0:h, 0:w]
        base = 127 + 100 * np.sin(xx / rng.uniform(2, 8)) * np.cos(yy / rng.uniform(2, 8))
        img = base[..., None] + rng.normal(0, 25, (h, w, c))
        if i % 3 == 0:
            img[:, : w // 2] = rng.integers(0, 256)
        out.append(RasterImage(np.clip(np.rint(img), 0, 255).astype(np.uint8)))
    return out
