import json
from pathlib import Path

import numpy as np
import pytest

from terraverse.compiler import compile_program
from terraverse.dsl import DivisionWarning, TerrainProgram, parse_program, seg
from terraverse.validator import CheckLimits, FixConfig, auto_fix, check, check_program

from conftest import make_terrain

CORPUS = sorted((Path(__file__).parent / "corpus").glob("*.terrain"))
FLAT = np.zeros((180, 40))
LINE = tuple((1.0 + k, 2.0) for k in range(8))


def tower(h):
    a = FLAT.copy()
    a[100:103, 10:13] = h
    return make_terrain(a, LINE)


def goal_step(dh):
    a = FLAT.copy()
    a[60:80, :] = dh  # goals 6..7 sit at x=6.0 and 7.0 -> rows 60 and 70
    return make_terrain(a, LINE)


def test_flat_passes():
    assert check(make_terrain(FLAT, LINE)).passed


@pytest.mark.parametrize("h,ok", [(2.99, True), (3.01, False), (3.0, False)])
def test_height_boundary(h, ok):
    rep = check(tower(h))
    assert rep.passed is ok
    assert ("MAX_HEIGHT" in rep.codes()) is (not ok)


@pytest.mark.parametrize("dh,ok", [(0.79, True), (0.81, False), (0.8, False)])
def test_goal_step_boundary(dh, ok):
    rep = check(goal_step(dh))
    assert rep.passed is ok
    assert ("GOAL_STEP" in rep.codes()) is (not ok)


def test_goal_problems():
    assert "GOAL_OOB" in check(make_terrain(FLAT, LINE[:7] + ((19.5, 2.0),))).codes()
    assert "GOAL_OOB" in check(make_terrain(FLAT, LINE[:7] + ((5.0, -0.01),))).codes()
    assert "GOAL_COUNT" in check(make_terrain(FLAT, LINE[:7])).codes()
    bad = FLAT.copy()
    bad[5, 5] = np.nan
    assert "NONFINITE" in check(make_terrain(bad, LINE)).codes()


def test_custom_limits():
    assert check(tower(2.0), CheckLimits(max_height=1.5)).codes() == {"MAX_HEIGHT"}


def test_program_checks():
    base = 'terrain "t" {{ platform {{ length: 2, height: 0 }} box {{ length: 1, height: {h} }} goals auto }}'
    explicit = ('terrain "t" {{ platform {{ length: 2, height: 0 }} box {{ length: 1, height: {h} }} '
                'goals [(1,2),(1,2),(1,2),(1,2),(1,2),(1,2),(1,2),(1,2)] }}')
    assert "MAX_HEIGHT" in check_program(parse_program(explicit.format(h="4.0*d"))).codes()
    assert check_program(parse_program(explicit.format(h="min(2.5, 4.0*d)"))).passed
    with pytest.warns(DivisionWarning):
        rep = check_program(parse_program(base.format(h="1 / d")))
    assert any(v.code == "EXEC_FAIL" and v.difficulty == 0.0 for v in rep.violations)
    assert len(rep.checked_difficulties) == 10


def test_report_json():
    rep = check(tower(3.5))
    d = json.loads(rep.to_json())
    assert d["passed"] is False and d["violations"][0]["code"] == "MAX_HEIGHT"


@pytest.mark.parametrize("path", CORPUS, ids=lambda p: p.stem)
def test_corpus_valid(path):
    assert check_program(parse_program(path.read_text())).passed


def test_clamp_goal():
    t, log = auto_fix(make_terrain(FLAT, LINE[:7] + ((19.5, 2.0),)))
    assert t.goals[7] == pytest.approx((17.9, 2.0))
    assert [e["fix_code"] for e in log.applied] == ["clamp_goal"]


def test_flatten_spawn():
    a = FLAT.copy()
    a[5:8, :] = 0.4
    t, log = auto_fix(make_terrain(a, LINE))
    assert not t.heights[:15].any()
    assert "flatten_spawn" in [e["fix_code"] for e in log.applied]


def test_widen_thin_wall():
    a = FLAT.copy()
    a[50, :] = 0.3  # 1 cell thick across the course
    t, log = auto_fix(make_terrain(a, LINE))
    assert "widen_obstacle" in [e["fix_code"] for e in log.applied]
    raised = np.argwhere(t.heights > 0)
    assert set(raised[:, 0]) == {49, 50, 51}
    assert np.all(t.heights[49:52] == 0.3)


def test_wide_features_untouched():
    a = FLAT.copy()
    a[50:60, 10:30] = 0.5
    t, log = auto_fix(make_terrain(a, LINE))
    assert not log.applied
    assert np.array_equal(t.heights, a)


def _corrupt(rng, t):
    h = np.array(t.heights)
    goals = list(t.goals)
    for _ in range(int(rng.integers(1, 6))):
        r = rng.random()
        if r < 0.3:
            k = int(rng.integers(8))
            goals[k] = (float(rng.uniform(-5, 25)), float(rng.uniform(-3, 7)))
        elif r < 0.6:
            i, j = int(rng.integers(0, 180)), int(rng.integers(0, 40))
            di, dj = int(rng.integers(1, 3)), int(rng.integers(1, 40))
            if rng.random() < 0.5:
                di, dj = dj % 10 + 1, di
            h[i:i + di, j:j + dj] = rng.uniform(0.05, 2.5)
        elif r < 0.8:
            i = int(rng.integers(0, 15))
            h[i:i + 3, :] = rng.uniform(-1, 1)
        else:
            i, j = int(rng.integers(0, 180)), int(rng.integers(0, 40))
            h[i, j] = rng.uniform(0.1, 1.0)
    return t.with_changes(heights=h, goals=goals)


def test_fixer_idempotent_and_safe():
    rng = np.random.default_rng(99)
    progs = [parse_program(p.read_text()) for p in CORPUS]
    for _ in range(500):
        p = progs[int(rng.integers(len(progs)))]
        t = _corrupt(rng, compile_program(p, float(rng.integers(0, 10)) / 9))
        once, _ = auto_fix(t)
        twice, log2 = auto_fix(once)
        assert np.array_equal(once.heights, twice.heights)
        assert once.goals == twice.goals
        assert not log2.applied
        assert "GOAL_OOB" not in check(once).codes()
        assert once.heights.max() <= t.heights.max()


def test_fix_config_spawn_length():
    a = FLAT.copy()
    a[:30, :] = 0.1
    t, _ = auto_fix(make_terrain(a, LINE), FixConfig(spawn_length=2.0))
    assert not t.heights[:20].any() and np.all(t.heights[20:30] == 0.1)


def test_check_program_with_fix():
    p = TerrainProgram("flat", (seg("platform", length=4, height=0),))
    assert check_program(p).passed  # auto goals already in bounds
    q = parse_program('terrain "q" { platform { length: 4, height: 0 } '
                      'goals [(1,2),(1,2),(1,2),(1,2),(1,2),(1,2),(1,2),(30,2)] }')
    assert "GOAL_OOB" in check_program(q).codes()
    assert check_program(q, fix=FixConfig()).passed
