import json
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from identik.matching import rank_one_scores
from identik.metrics import build_report, diff_distribution
from identik.model import validate_dataset
from identik.partition import build_split
from identik.synth import GroupSpec, SynthSpec, generate, load_spec, morph_shaped_spec, shift_mated

from conftest import AAF, AAM, CF, CM, small_spec


def test_huge_concentration_genuine_near_one():
    records, store = generate(SynthSpec(groups=(GroupSpec(CM, 1, 2),), dimension=64,
                                        within_subject_concentration=1e6))
    u = store.unit
    assert len(records) == 2
    assert abs(u[0] @ u[1] - 1.0) <= 1e-3


def test_orthogonal_identities_impostor_near_zero():
    records, store = generate(SynthSpec(groups=(GroupSpec(CM, 2, 2),), dimension=64,
                                        within_subject_concentration=1000, orthogonal_identities=True))
    u = store.unit
    for i in (0, 1):
        for j in (2, 3):
            assert abs(u[i] @ u[j]) <= 0.05


def test_same_seed_same_bytes():
    a = generate(small_spec(seed=3))
    b = generate(small_spec(seed=3))
    assert a[0] == b[0]
    assert a[1].vectors.tobytes() == b[1].vectors.tobytes()
    assert generate(small_spec(seed=4))[1] != a[1]


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(1, 6), st.integers(1, 4), st.integers(0, 2))
def test_generated_data_always_validates(seed, n, k, singles):
    spec = SynthSpec(groups=(GroupSpec(CM, n, k, singleton_subjects=min(singles, n)), GroupSpec(AAF, 2, 2)),
                     dimension=8, rng_seed=seed)
    records, store = generate(spec)
    assert validate_dataset(records, store).valid
    assert len({r.image_id for r in records}) == len(records) == store.count


def test_dates_are_consecutive_days():
    records, _ = generate(small_spec())
    split = build_split(records)
    by_id = {r.image_id: r for r in records}
    for subject, probe in split.probes.items():
        n = 1 + len(split.gallery[subject])
        assert probe == f"{subject}_{n - 1:03d}"
        assert (by_id[probe].capture_date - by_id[f"{subject}_000"].capture_date).days == n - 1


def test_d_prime_stable_across_seeds():
    values = []
    for seed in (1, 2):
        spec = SynthSpec(groups=(GroupSpec(CM, 1000, 3),), dimension=64, within_subject_concentration=1.5,
                         rng_seed=seed)
        records, store = generate(spec)
        values.append(build_report(rank_one_scores(build_split(records), records, store), CM).d_prime)
    assert abs(values[0] - values[1]) / max(values) < 0.05


def test_higher_concentration_separates_more():
    groups = (GroupSpec(CM, 200, 3, within_concentration=0.9), GroupSpec(CF, 200, 3, within_concentration=2.0))
    records, store = generate(SynthSpec(groups=groups, dimension=32, within_subject_concentration=2.0))
    results = rank_one_scores(build_split(records), records, store)
    dp = {g: build_report([r for r in results if r.group == g], g).d_prime for g in (CM, CF)}
    assert dp[CF] > dp[CM]


def _results():
    records, store = generate(small_spec(seed=7, within_subject_concentration=1.2))
    return rank_one_scores(build_split(records), records, store)


def test_shift_zero_is_identity():
    results = _results()
    assert shift_mated(results, 0.0) == results


def test_shift_two_saturates():
    results = _results()
    shifted = shift_mated(results, 2.0)
    assert all(r.mated_score == -1.0 for r in shifted if r.mated_score is not None)
    assert diff_distribution(shifted).fpir == 1.0
    # singleton probes stay without a mate
    assert [r.mated_score is None for r in shifted] == [r.mated_score is None for r in results]


def test_shift_monotone_fpir():
    results = _results()
    fpir = [diff_distribution(shift_mated(results, d)).fpir for d in (0, 0.1, 0.2)]
    assert fpir == sorted(fpir)
    with pytest.raises(ValueError):
        shift_mated(results, -0.1)


def test_morph_preset_cohorts():
    spec = morph_shaped_spec(dimension=4)
    counts = {g.group: (g.n_subjects, g.images_per_subject, g.singleton_subjects) for g in spec.groups}
    assert counts == {CM: (8835, 4, 0), CF: (2798, 4, 1), AAM: (8839, 6, 0), AAF: (5928, 4, 0)}


def test_morph_preset_generates_expected_counts():
    records, store = generate(morph_shaped_spec(dimension=4))
    per_group = Counter(r.group for r in records)
    assert per_group[CF] == 2797 * 4 + 1 and per_group[AAM] == 8839 * 6
    assert store.count == len(records)


def test_spec_json_round_trip(tmp_path):
    spec = small_spec(seed=11, between_subject_concentration=0.5)
    p = tmp_path / "spec.json"
    p.write_text(json.dumps(spec.to_dict()))
    assert load_spec(p) == spec


@pytest.mark.parametrize("kw", [
    {"within_subject_concentration": 0.5, "between_subject_concentration": 0.5},
    {"dimension": 0},
    {"rng_seed": -1},
    {"groups": ()},
    {"groups": (GroupSpec(CM, 2, 2), GroupSpec(CM, 3, 2))},
    {"groups": (GroupSpec(CM, 20, 2),), "orthogonal_identities": True, "dimension": 8},
])
def test_spec_validation(kw):
    base = {"groups": (GroupSpec(CM, 2, 2),), "dimension": 8}
    base.update(kw)
    with pytest.raises(ValueError):
        SynthSpec(**base)


def test_group_spec_validation():
    with pytest.raises(ValueError):
        GroupSpec(CM, 0, 2)
    with pytest.raises(ValueError):
        GroupSpec(CM, 2, 2, singleton_subjects=3)
    with pytest.raises(ValueError):
        GroupSpec(CM, 2, 2, within_concentration=0)
