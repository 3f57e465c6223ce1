from collections import Counter

import numpy as np
import pytest

from terraverse.curriculum import CurriculumState
from terraverse.dsl import TerrainProgram, linear, seg
from terraverse.generation.mock import mock_generate
from terraverse.instances import LEVELS, instantiate
from terraverse.sim import SKILL_MAX, SKILL_ZERO, SkillVector, goals_reached
from terraverse.trainer import (ABILITY_HI, ABILITY_LO, EmptyLibrary, SkillPolicy, TrainConfig, evaluate_proxy,
                                evaluate_proxy_many, soft_select, to_ability, train_agent)

FLAT = TerrainProgram("flat", (seg("platform", length=18.0, height=0.0),))
WALL = TerrainProgram("wall", (seg("platform", length=4.0, height=0.0), seg("box", length=2.0, height=2.9),
                               seg("platform", length=4.0, height=0.0)))


def step_course(name, height):
    return TerrainProgram(name, (seg("platform", length=6.0, height=0.0), seg("box", length=6.0, height=height)))


def policy(s=SkillVector(0.1, 0.2, 0.1, 0.1, 0.55)):
    return SkillPolicy(s, np.full(5, 0.08), np.full(5, 0.15))


def ladders(lib, level=1):
    return [CurriculumState(level) for _ in lib]


def test_flat_library_no_change():
    lib = [FLAT] * 3
    p, _, st = train_agent(policy(), lib, ladders(lib), np.random.default_rng(0))
    assert p.mean == policy().mean
    assert st.goals_before == st.goals_after == 8.0


def test_impossible_library_no_change():
    lib = [WALL] * 2
    p, _, st = train_agent(policy(), lib, ladders(lib), np.random.default_rng(0))
    assert p.mean == policy().mean
    assert [o.goals for o in st.before] == [o.goals for o in st.after]


def test_zone_of_proximal_development():
    start = SkillVector(0.3, 1.2, 0.0, 0.8, 0.0)
    hard = [step_course("hard", 0.5)] * 3
    p, _, st = train_agent(policy(start), hard, ladders(hard), np.random.default_rng(1))
    assert p.mean.climb <= 0.45 + 1e-9
    assert st.goals_after == st.goals_before  # 0.5 m never within one phase of reach
    graded = [TerrainProgram("graded", (seg("platform", length=6.0, height=0.0),
                                        seg("box", length=6.0, height=linear(0.3, 0.3))))] * 3
    p, _, st = train_agent(policy(start), graded, ladders(graded), np.random.default_rng(1))
    assert 0.3 < p.mean.climb <= 0.45 + 1e-9
    assert st.goals_after > st.goals_before


def test_step_cap_and_bounds():
    rng = np.random.default_rng(3)
    lib = [mock_generate(rng) for _ in range(10)]
    for seed in range(5):
        p0 = policy(SkillVector(*rng.uniform(0, 0.9, 4), float(rng.uniform(0, 0.6))))
        p1, _, st = train_agent(p0, lib, ladders(lib, 3), np.random.default_rng(seed))
        a0, a1 = to_ability(p0.mean), to_ability(p1.mean)
        assert np.all(np.abs(a1 - a0) <= 0.15 + 1e-12)
        assert np.all(a1 >= ABILITY_LO - 1e-12) and np.all(a1 <= ABILITY_HI + 1e-12)
        assert st.evaluations_used <= 2000
        assert sum(o.goals for o in st.after) >= sum(o.goals for o in st.before) - 1e-9


def test_budget_limits_generations():
    lib = [step_course(f"s{k}", linear(0.1, 0.5)) for k in range(10)]
    cfg = TrainConfig(budget=700, minibatch=10)
    _, _, st = train_agent(policy(), lib, ladders(lib), np.random.default_rng(0), cfg)
    assert st.generations_run == 2 and st.evaluations_used == 2 * 33 * 10


def test_reproducible():
    rng = np.random.default_rng(5)
    lib = [mock_generate(rng) for _ in range(6)]
    out = [train_agent(policy(), lib, ladders(lib), np.random.default_rng(9)) for _ in range(2)]
    assert out[0][0].to_dict() == out[1][0].to_dict()
    assert out[0][2].to_dict() == out[1][2].to_dict()
    assert [s.to_dict() for s in out[0][1]] == [s.to_dict() for s in out[1][1]]


def test_ladders_move():
    lib = [step_course(f"s{k}", linear(0.05, 0.6)) for k in range(4)]
    _, lad, _ = train_agent(policy(SkillVector(0.4, 1.2, 0, 0.8, 0)), lib, ladders(lib),
                            np.random.default_rng(0))
    assert all(s.level > 1 for s in lad)
    assert all(len(s.history) > 0 for s in lad)


def test_empty_library():
    with pytest.raises(EmptyLibrary):
        train_agent(policy(), [], [], np.random.default_rng(0))
    with pytest.raises(ValueError):
        train_agent(policy(), [FLAT], [], np.random.default_rng(0))


def test_policy_serialization():
    p = policy()
    q = SkillPolicy.from_dict(p.to_dict())
    assert q.mean == p.mean and np.array_equal(q.spread, p.spread)
    with pytest.raises(ValueError):
        SkillPolicy(SKILL_ZERO, np.zeros(5))


def test_proxy_examples():
    assert evaluate_proxy(SKILL_MAX, [FLAT, FLAT]) == 8.0
    course = step_course("step", 0.3)
    want = np.mean([goals_reached(instantiate(course, k), SKILL_ZERO) for k in LEVELS])
    expected_goals = sum(1 for x, _ in instantiate(course, 1).goals if x < 6.0)
    assert evaluate_proxy(policy(SKILL_ZERO), [course]) == want == expected_goals
    rng = np.random.default_rng(2)
    proxy = [mock_generate(rng) for _ in range(5)]
    lo, hi = SkillVector(0.2, 0.3, 0.2, 0.2, 0.5), SkillVector(0.4, 0.5, 0.4, 0.4, 0.3)
    a, b = evaluate_proxy_many([lo, hi], proxy)
    assert b >= a
    with pytest.raises(ValueError):
        evaluate_proxy(SKILL_MAX, [])


def test_soft_select_frequencies():
    rng = np.random.default_rng(0)
    scores = [5.0, 3.0, 1.0, 0.5, 0.2]
    c = Counter(soft_select(scores, rng) for _ in range(10_000))
    assert abs(c[0] / 10_000 - 0.75) <= 0.02
    assert abs(c[1] / 10_000 - 0.25) <= 0.02
    assert set(c) == {0, 1}


def test_soft_select_ties_and_order():
    rng = np.random.default_rng(1)
    c = Counter(soft_select([2.0, 7.0, 7.0, 1.0], rng) for _ in range(2000))
    assert set(c) == {1, 2} and c[1] > c[2]  # tie broken by lower index -> agent 1 is rank 1
    c = Counter(soft_select([1.0, 4.0], rng) for _ in range(2000))
    assert set(c) == {0, 1} and c[1] > c[0]
    with pytest.raises(ValueError):
        soft_select([1.0, 2.0], rng, weights=[0.5, 0.6])
