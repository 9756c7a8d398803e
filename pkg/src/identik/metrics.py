"""Separation and error-rate metrics over score distributions.

Conventions:

* quantiles are nearest-rank (no interpolation);
* a probe whose rank-one mated score does not exceed its non-mated score
  counts as a false positive identification, ties included;
* probes without a mated score (no enrolled images) are excluded from the
  closed-set FPIR denominator and counted separately.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import DegenerateDistributions, EmptyInput, NoMatedProbes, Unachievable
from .matching import OneToOne, RankOneResult
from .model import DemographicGroup, DistributionStats

SCHEMA = "identik-report/1"
DEFAULT_TAIL_MASS = 0.001
DEFAULT_BIN_WIDTH = 0.02
HIST_RANGE = (-1.0, 1.0)


def _as_fraction(q) -> Fraction:
    # repr() keeps decimal intent: 0.07 means 7/100, not its binary neighbour
    return q if isinstance(q, Fraction) else Fraction(repr(float(q)))


def _sorted(scores) -> np.ndarray:
    a = np.sort(np.asarray(scores, dtype=np.float64).ravel())
    if a.size == 0:
        raise EmptyInput("no scores")
    return a


def d_prime(a: DistributionStats, b: DistributionStats) -> float:
    """|mean_a - mean_b| / sqrt((var_a + var_b) / 2)."""
    if a.n < 2 or b.n < 2:
        raise DegenerateDistributions(f"d' needs at least 2 samples per side, got {a.n} and {b.n}")
    pooled = (a.std_dev ** 2 + b.std_dev ** 2) / 2.0
    if pooled == 0.0:
        raise DegenerateDistributions("both distributions have zero spread")
    return abs(a.mean - b.mean) / math.sqrt(pooled)


def empirical_quantile(scores, q) -> float:
    """Nearest-rank quantile: element ``ceil(q * n) - 1`` of the sorted scores."""
    a = _sorted(scores)
    qf = _as_fraction(q)
    if not 0 < qf < 1:
        raise ValueError("q must lie strictly between 0 and 1")
    idx = math.ceil(qf * a.size) - 1
    return float(a[min(max(idx, 0), a.size - 1)])


def delta_tail(mated, nonmated, tail_mass=DEFAULT_TAIL_MASS) -> float:
    """Low mated tail quantile minus high non-mated tail quantile.

    Positive values mean the tails are separated, negative that they overlap.
    """
    t = _as_fraction(tail_mass)
    return empirical_quantile(mated, t) - empirical_quantile(nonmated, 1 - t)


@dataclass
class DiffDistribution:
    diffs: np.ndarray
    probe_ids: list[str]
    n_fpi: int
    n_singletons: int
    n_degenerate: int

    @property
    def n(self) -> int:
        return int(self.diffs.size)

    @property
    def fpir(self) -> float:
        return self.n_fpi / self.n


def diff_distribution(results: Sequence[RankOneResult]) -> DiffDistribution:
    diffs, ids = [], []
    singletons = degenerate = 0
    for r in results:
        if r.mated_score is None:
            singletons += 1
            continue
        if r.nonmated_score is None:
            degenerate += 1
            continue
        diffs.append(r.mated_score - r.nonmated_score)
        ids.append(r.probe_image_id)
    if not diffs:
        raise NoMatedProbes("no probe has both a mated and a non-mated score")
    d = np.asarray(diffs, dtype=np.float64)
    return DiffDistribution(d, ids, int(np.count_nonzero(d <= 0.0)), singletons, degenerate)


def fpir_rank_one(results: Sequence[RankOneResult]) -> float:
    """Closed-set FPIR by direct comparison of each probe's two scores."""
    both = [r for r in results if r.mated_score is not None and r.nonmated_score is not None]
    if not both:
        raise NoMatedProbes("no probe has both a mated and a non-mated score")
    return sum(1 for r in both if r.nonmated_score >= r.mated_score) / len(both)


def fixed_threshold_rates(genuine, impostor, threshold: float) -> dict:
    g = np.asarray(genuine, dtype=np.float64)
    im = np.asarray(impostor, dtype=np.float64)
    if g.size == 0 or im.size == 0:
        raise EmptyInput("genuine and impostor scores must be non-empty")
    return {
        "fmr": int(np.count_nonzero(im >= threshold)) / im.size,
        "fnmr": int(np.count_nonzero(g < threshold)) / g.size,
    }


def threshold_for_fmr(impostor, target_fmr) -> float:
    """Smallest observed impostor score ``t`` with ``P(impostor >= t) <= target_fmr``."""
    a = _sorted(impostor)
    target = _as_fraction(target_fmr)
    if not 0 < target < 1:
        raise ValueError("target_fmr must lie strictly between 0 and 1")
    values = np.unique(a)
    at_or_above = a.size - np.searchsorted(a, values, side="left")
    # count / n <= p / q  <=>  count * q <= p * n, exact in integers
    ok = at_or_above * target.denominator <= target.numerator * a.size
    if not ok.any():
        raise Unachievable(
            f"every observed threshold gives FMR > {float(target)}; "
            f"the maximum score alone has rate {at_or_above[-1] / a.size}")
    return float(values[int(np.argmax(ok))])


def open_set_fpir(nonmated, threshold: float) -> float:
    """Share of non-mated rank-one scores at or above the alarm threshold."""
    a = np.asarray(nonmated, dtype=np.float64)
    if a.size == 0:
        raise EmptyInput("no non-mated scores")
    return int(np.count_nonzero(a >= threshold)) / a.size


def histogram(values, bin_width: float = DEFAULT_BIN_WIDTH, value_range=HIST_RANGE) -> list[tuple[float, float, int]]:
    """Fixed-width bins; values outside the range land in the end bins.

    Each bin is ``[low, high)`` except the last, which is closed.
    """
    lo, hi = value_range
    nbins = int(round((hi - lo) / bin_width))
    if nbins < 1 or not math.isclose(nbins * bin_width, hi - lo, rel_tol=1e-9):
        raise ValueError("bin_width must divide the histogram range")
    edges = np.round(np.linspace(lo, hi, nbins + 1), 12)
    v = np.asarray(values, dtype=np.float64)
    idx = np.clip(np.searchsorted(edges, v, side="right") - 1, 0, nbins - 1)
    counts = np.bincount(idx, minlength=nbins)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(nbins)]


@dataclass
class MetricReport:
    group: DemographicGroup
    n_probes: int
    n_mated: int
    n_singletons: int
    n_degenerate: int
    d_prime: float | None
    delta_tail: float
    tail_mass: float
    fpir_rank_one: float
    n_fpi: int
    mated_stats: DistributionStats
    nonmated_stats: DistributionStats
    diff_stats: DistributionStats
    diff_histogram: list[tuple[float, float, int]]
    thresholds: dict[str, float]
    open_set: dict | None = None
    one_to_one: dict | None = None
    mated_gap_days: DistributionStats | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "group": {"race": self.group.race_label, "gender": self.group.gender_label, "key": self.group.key},
            "n_probes": self.n_probes,
            "n_mated": self.n_mated,
            "n_singletons": self.n_singletons,
            "n_degenerate": self.n_degenerate,
            "d_prime": self.d_prime,
            "delta_tail": self.delta_tail,
            "tail_mass": self.tail_mass,
            "fpir_rank_one": self.fpir_rank_one,
            "n_fpi": self.n_fpi,
            "mated_stats": self.mated_stats.to_dict(),
            "nonmated_stats": self.nonmated_stats.to_dict(),
            "diff_stats": self.diff_stats.to_dict(),
            "diff_histogram": [list(b) for b in self.diff_histogram],
            "thresholds": dict(sorted(self.thresholds.items())),
            "open_set": self.open_set,
            "one_to_one": self.one_to_one,
            "mated_gap_days": None if self.mated_gap_days is None else self.mated_gap_days.to_dict(),
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"

    def csv_row(self) -> dict:
        oto = self.one_to_one or {}
        row = {
            "group": self.group.key,
            "n_probes": self.n_probes,
            "n_mated": self.n_mated,
            "n_singletons": self.n_singletons,
            "n_degenerate": self.n_degenerate,
            "d_prime": self.d_prime,
            "delta_tail": self.delta_tail,
            "tail_mass": self.tail_mass,
            "fpir_rank_one": self.fpir_rank_one,
            "n_fpi": self.n_fpi,
            "mated_mean": self.mated_stats.mean,
            "mated_std": self.mated_stats.std_dev,
            "nonmated_mean": self.nonmated_stats.mean,
            "nonmated_std": self.nonmated_stats.std_dev,
            "open_set_threshold": (self.open_set or {}).get("threshold"),
            "open_set_fpir": (self.open_set or {}).get("fpir"),
            "one_to_one_d_prime": oto.get("d_prime"),
            "fmr": oto.get("fmr"),
            "fnmr": oto.get("fnmr"),
        }
        return {k: _cell(v) for k, v in row.items()}


CSV_FIELDS = [
    "group", "n_probes", "n_mated", "n_singletons", "n_degenerate", "d_prime", "delta_tail",
    "tail_mass", "fpir_rank_one", "n_fpi", "mated_mean", "mated_std", "nonmated_mean",
    "nonmated_std", "open_set_threshold", "open_set_fpir", "one_to_one_d_prime", "fmr", "fnmr",
]


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ""
    return str(v)


def reports_csv(reports: Sequence[MetricReport]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.csv_row())
    return buf.getvalue()


def _quantile_key(population: str, q: Fraction) -> str:
    return f"{population}@q{float(q)!r}"


def build_report(results: Sequence[RankOneResult], group: DemographicGroup,
                 one_to_one: OneToOne | None = None,
                 tail_mass: float = DEFAULT_TAIL_MASS,
                 bin_width: float = DEFAULT_BIN_WIDTH,
                 threshold: float | None = None,
                 target_fmr: float | None = None,
                 mated_gap_days: DistributionStats | None = None) -> MetricReport:
    """Assemble every metric for one demographic group.

    ``results`` should already be restricted to ``group``. The non-mated
    population includes probes without enrolled images, as every probe
    has a non-mated score. A zero-spread pair of distributions leaves
    ``d_prime`` as None with an explanatory note instead of failing.
    """
    notes = []
    mated = [r.mated_score for r in results if r.mated_score is not None]
    nonmated = [r.nonmated_score for r in results if r.nonmated_score is not None]
    dd = diff_distribution(results)
    mated_stats = DistributionStats.from_scores(mated)
    nonmated_stats = DistributionStats.from_scores(nonmated)
    try:
        dp = d_prime(mated_stats, nonmated_stats)
    except DegenerateDistributions as exc:
        dp = None
        notes.append(f"d_prime unavailable: {exc}")
    if dd.n_degenerate:
        notes.append(f"{dd.n_degenerate} probe(s) had no other-subject gallery image and were excluded")

    t = _as_fraction(tail_mass)
    thresholds = {
        _quantile_key("mated", t): empirical_quantile(mated, t),
        _quantile_key("nonmated", 1 - t): empirical_quantile(nonmated, 1 - t),
    }
    open_set = None
    if threshold is not None:
        open_set = {"threshold": float(threshold), "fpir": open_set_fpir(nonmated, threshold)}

    oto = None
    if one_to_one is not None:
        oto = _one_to_one_section(one_to_one, threshold, target_fmr, notes)
        if "threshold_at_target_fmr" in oto:
            thresholds[f"impostor@fmr{float(target_fmr)!r}"] = oto["threshold_at_target_fmr"]

    return MetricReport(
        group=group,
        n_probes=len(results),
        n_mated=len(mated),
        n_singletons=dd.n_singletons,
        n_degenerate=dd.n_degenerate,
        d_prime=dp,
        delta_tail=thresholds[_quantile_key("mated", t)] - thresholds[_quantile_key("nonmated", 1 - t)],
        tail_mass=float(tail_mass),
        fpir_rank_one=dd.fpir,
        n_fpi=dd.n_fpi,
        mated_stats=mated_stats,
        nonmated_stats=nonmated_stats,
        diff_stats=DistributionStats.from_scores(dd.diffs),
        diff_histogram=histogram(dd.diffs, bin_width),
        thresholds=thresholds,
        open_set=open_set,
        one_to_one=oto,
        mated_gap_days=mated_gap_days,
        notes=notes,
    )


def _one_to_one_section(oto: OneToOne, threshold, target_fmr, notes: list[str]) -> dict:
    g_stats = DistributionStats.from_scores(oto.genuine)
    i_stats = DistributionStats.from_scores(oto.impostor)
    section = {"genuine_stats": g_stats.to_dict(), "impostor_stats": i_stats.to_dict(), "d_prime": None}
    try:
        section["d_prime"] = d_prime(g_stats, i_stats)
    except DegenerateDistributions as exc:
        notes.append(f"1-to-1 d_prime unavailable: {exc}")
    if threshold is not None and g_stats.n and i_stats.n:
        section.update(fixed_threshold_rates(oto.genuine, oto.impostor, threshold))
    if target_fmr is not None and i_stats.n:
        try:
            section["threshold_at_target_fmr"] = threshold_for_fmr(oto.impostor, target_fmr)
        except Unachievable as exc:
            notes.append(f"threshold for FMR {target_fmr} unavailable: {exc}")
    return section
