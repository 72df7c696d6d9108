import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aggko.errors import InvalidInput
from aggko.filter import Variant, select, threshold, w_statistics
from oracles import threshold_bruteforce

KO, KOP = Variant.KO, Variant.KO_PLUS

small_w = st.lists(st.integers(-6, 6).map(float), min_size=1, max_size=12)
levels = st.sampled_from([0.0, 0.05, 0.1, 0.2, 0.25, 1 / 3, 0.5, 0.75, 1.0])


def test_w_statistics_example():
    s = w_statistics([3, 0, 2], [1, 0, 5])
    assert s.w.tolist() == [3, 0, -5]


def test_w_ties_are_zero():
    z = np.array([0.4, 1.0, 0.0])
    assert np.all(w_statistics(z, z).w == 0)


def test_w_without_knockoff_entry():
    z = np.array([0.5, 0.2, 0.0])
    assert np.array_equal(w_statistics(z, np.zeros(3)).w, z)


def test_w_rejects_negative():
    with pytest.raises(InvalidInput):
        w_statistics([1.0, -0.1], [0.0, 0.0])


@given(z=st.lists(st.floats(0, 5), min_size=1, max_size=10), data=st.data())
def test_w_magnitudes_come_from_z(z, data):
    zt = data.draw(st.lists(st.floats(0, 5), min_size=len(z), max_size=len(z)))
    w = w_statistics(z, zt).w
    for wj, a, b in zip(w, z, zt):
        assert abs(wj) in (0.0, a, b)
        assert wj == max(a, b) * np.sign(a - b)


def test_threshold_example_ko_and_ko_plus():
    w = [3, 2, -1]
    assert threshold(w, 0.5, KO) == 1
    assert select(w, 0.5, KO).selected == {0, 1}
    assert threshold(w, 0.5, KOP) == 2
    assert select(w, 0.5, KOP).selected == {0, 1}


@pytest.mark.parametrize("variant", [KO, KOP])
def test_all_negative_selects_nothing(variant):
    r = select([-1.0, -2.0, -0.5], 0.9, variant)
    assert math.isinf(r.threshold) and r.selected == frozenset()


@pytest.mark.parametrize("variant", [KO, KOP])
def test_single_feature_full_budget(variant):
    r = select([5.0], 1.0, variant)
    assert r.threshold == 5 and r.selected == {0}


def test_zero_level_ko_plus_is_empty():
    r = select([4.0, 3.0, 2.0, 1.0], 0.0, KOP)
    assert math.isinf(r.threshold) and not r.selected


def test_zero_w_never_selected():
    assert select([0.0, 0.0, 1.0], 1.0, KO).selected == {2}
    assert math.isinf(threshold(np.zeros(4), 0.5))


def test_provenance_recorded():
    r = select([1.0, 2.0], 0.3, "ko+", seed=17, schedule_index=2)
    assert (r.seed, r.schedule_index, r.variant, r.q) == (17, 2, KOP, 0.3)


@settings(max_examples=300)
@given(w=small_w, q=levels, plus=st.booleans())
def test_threshold_matches_bruteforce(w, q, plus):
    assert threshold(w, q, KOP if plus else KO) == threshold_bruteforce(w, q, plus)


@given(w=small_w, q1=levels, q2=levels, plus=st.booleans())
def test_monotone_in_q(w, q1, q2, plus):
    lo, hi = sorted((q1, q2))
    v = KOP if plus else KO
    assert select(w, lo, v).selected <= select(w, hi, v).selected


@given(w=small_w, q=levels)
def test_ko_plus_subset_of_ko(w, q):
    assert select(w, q, KOP).selected <= select(w, q, KO).selected


@given(w=small_w, q=levels, c=st.floats(0.01, 100))
def test_scale_invariance(w, q, c):
    w = np.asarray(w)
    for v in (KO, KOP):
        assert select(c * w, q, v).selected == select(w, q, v).selected


@pytest.mark.parametrize("q", [0.1, 0.2])
def test_null_symmetric_w_controls_fdr(q):
    rng = np.random.default_rng(2024)
    reps = 4000
    fdp = np.array([
        1.0 if select(rng.standard_normal(50), q, KOP).selected else 0.0
        for _ in range(reps)
    ])
    se = fdp.std(ddof=1) / math.sqrt(reps)
    assert fdp.mean() <= q + 3 * se
