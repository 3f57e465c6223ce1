from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from terraverse.curriculum import CurriculumState, LadderConfig, level_to_difficulty, update


def test_thresholds():
    cfg = LadderConfig()
    assert cfg.g_promote == pytest.approx(6.4) and cfg.g_demote == pytest.approx(3.2) and cfg.p_stay == 0.75


def test_promote_and_demote():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        assert update(CurriculumState(5), 7, rng).level == 6
        assert update(CurriculumState(5), 3, rng).level == 4
    assert update(CurriculumState(10), 8, rng).level == 10
    assert update(CurriculumState(1), 0, rng).level == 1


def test_fractional_boundaries():
    rng = np.random.default_rng(0)
    assert update(CurriculumState(5), 6.4, rng).level == 6
    assert update(CurriculumState(5), 3.2, np.random.default_rng(1)).level <= 5
    assert update(CurriculumState(5), 3.19, rng).level == 4


def test_middle_band_statistics():
    rng = np.random.default_rng(42)
    n = 10_000
    levels = Counter(update(CurriculumState(5), 5, rng).level for _ in range(n))
    assert abs(levels[5] / n - 0.75) <= 0.02
    assert set(levels) <= {1, 2, 3, 4, 5}
    for k in (1, 2, 3, 4):
        assert abs(levels[k] / n - 0.0625) <= 0.01


def test_level_one_middle_band_stays():
    rng = np.random.default_rng(0)
    assert all(update(CurriculumState(1), 5, rng).level == 1 for _ in range(200))


def test_rng_only_consumed_in_middle_band():
    a, b = np.random.default_rng(5), np.random.default_rng(5)
    update(CurriculumState(4), 8, a)
    update(CurriculumState(4), 0, a)
    assert a.random() == b.random()


def test_climb_and_fall_times():
    rng = np.random.default_rng(0)
    st_ = CurriculumState(1)
    for k in range(9):
        st_ = update(st_, 8, rng)
    assert st_.level == 10
    for start in range(1, 11):
        st_ = CurriculumState(start)
        for _ in range(9):
            st_ = update(st_, 0, rng)
        assert st_.level == 1


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 10), st.lists(st.integers(0, 8), max_size=40), st.integers(0, 2**32 - 1))
def test_levels_stay_in_bounds(start, goals, seed):
    rng = np.random.default_rng(seed)
    s = CurriculumState(start)
    for g in goals:
        s = update(s, g, rng)
        assert 1 <= s.level <= 10
    assert len(s.history) == len(goals)


def test_difficulty_mapping():
    assert level_to_difficulty(1) == 0.0
    assert level_to_difficulty(10) == 1.0
    assert level_to_difficulty(5) == pytest.approx(4 / 9)
    with pytest.raises(ValueError):
        level_to_difficulty(0)


def test_state_serialization():
    rng = np.random.default_rng(0)
    s = update(update(CurriculumState(3), 7, rng), 1, rng)
    assert CurriculumState.from_dict(s.to_dict()) == s


def test_config_validation():
    with pytest.raises(ValueError):
        LadderConfig(g_promote=2.0, g_demote=3.0)
    with pytest.raises(ValueError):
        LadderConfig(p_stay=1.5)
