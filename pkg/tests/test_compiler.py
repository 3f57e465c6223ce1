import math

import numpy as np
import pytest

from terraverse.compiler import (DEFAULT_GRID, CompileError, GridConfig, compile_program, goals_csv, heights_csv,
                                 heights_pgm, m_to_idx, terrain_stats)
from terraverse.dsl import TerrainProgram, eval_expr, parse_program, round_half_away, seg

from conftest import random_small_program

CS = 0.1


def _idx(x):
    return math.floor(x / CS + 1e-9)


def _length(s, d):
    if s.kind == "stairs":
        return round_half_away(eval_expr(s["steps"], d)) * eval_expr(s["step_length"], d)
    if s.kind == "poles":
        return round_half_away(eval_expr(s["count"], d)) * eval_expr(s["spacing"], d)
    return eval_expr(s["length"], d)


def _in_strip(s, j, d, grid, width_name="width"):
    w = eval_expr(s[width_name], d) if s.get(width_name) is not None else grid.course_width
    off = eval_expr(s["lateral_offset"], d) if s.get("lateral_offset") is not None else 0.0
    c = grid.centerline + off
    return _idx(max(c - w / 2, 0.0)) <= j < _idx(max(c + w / 2, 0.0))


def oracle_height(p: TerrainProgram, d: float, i: int, j: int, grid=DEFAULT_GRID) -> float:
    """Height of one cell, found by locating its owning segment from scratch."""
    x0 = 0.0
    for s in p.segments:
        x1 = x0 + _length(s, d)
        if _idx(x0) <= i < _idx(x1):
            break
        x0 = x1
    else:
        return 0.0
    k = s.kind
    if k in ("platform", "box"):
        return eval_expr(s["height"], d) if _in_strip(s, j, d, grid) else 0.0
    if k == "gap":
        return -eval_expr(s["depth"], d) if _in_strip(s, j, d, grid) else 0.0
    if k == "ramp":
        if not _in_strip(s, j, d, grid):
            return 0.0
        a, b, L = eval_expr(s["start_height"], d), eval_expr(s["end_height"], d), eval_expr(s["length"], d)
        t = min(max((i * CS - x0) / L, 0.0), 1.0)
        return a + (b - a) * t
    if k == "stairs":
        if not _in_strip(s, j, d, grid):
            return 0.0
        n = int(round_half_away(eval_expr(s["steps"], d)))
        sl = eval_expr(s["step_length"], d)
        step = max(q for q in range(n) if q == 0 or _idx(x0 + q * sl) <= i)
        return (step + 1) * eval_expr(s["step_height"], d)
    if k == "beam":
        return eval_expr(s["height"], d) if _in_strip(s, j, d, grid) else -1.0
    if k == "poles":
        n = int(round_half_away(eval_expr(s["count"], d)))
        sp, pw = eval_expr(s["spacing"], d), eval_expr(s["pole_width"], d)
        off = eval_expr(s["lateral_offset"], d) if s.get("lateral_offset") is not None else 0.0
        for q in range(n):
            cx = x0 + (q + 0.5) * sp
            cy = grid.centerline + (off if q % 2 == 0 else -off)
            if _idx(max(cx - pw / 2, 0)) <= i < _idx(max(cx + pw / 2, 0)) and \
                    _idx(max(cy - pw / 2, 0)) <= j < _idx(max(cy + pw / 2, 0)):
                return 1.5
        return 0.0
    raise AssertionError(k)


def oracle_grid(p, d, grid=DEFAULT_GRID):
    return np.array([[oracle_height(p, d, i, j, grid) for j in range(grid.cols)] for i in range(grid.rows)])


def _programs(n, seed):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        p = random_small_program(rng)
        try:
            for d in (0.0, 0.5, 1.0):
                compile_program(p, d)
        except CompileError:
            continue
        out.append(p)
    return out


def test_m_to_idx_examples():
    assert m_to_idx(1.5, 0.1) == 15
    assert m_to_idx(0.0, 0.1) == 0
    assert m_to_idx(1.57, 0.1) == 15
    assert m_to_idx(0.3, 0.1) == 3


def test_flat_course():
    t = compile_program(parse_program('terrain "f" { platform { length: 18.0, height: 0.0 } goals auto }'), 0.5)
    assert t.heights.shape == (180, 40)
    assert not t.heights.any()
    assert len(t.goals) == 8
    xs = [g[0] for g in t.goals]
    assert xs == sorted(xs) and len(set(xs)) == 8
    assert all(g[1] == 2.0 for g in t.goals)


def test_gap_footprint():
    p = TerrainProgram("g", (seg("platform", length=2, height=0), seg("gap", length=0.5, depth=0.8),
                             seg("platform", length=15.5, height=0)))
    h = compile_program(p, 1.0).heights
    assert np.all(h[20:25] == -0.8)
    assert not h[:20].any() and not h[25:].any()


def test_ramp_profile():
    p = TerrainProgram("r", (seg("platform", length=2, height=0),
                             seg("ramp", length=4, start_height=0, end_height=1.0)))
    h = compile_program(p, 0.0).heights
    for k in range(20, 60):
        assert h[k, 0] == pytest.approx((k * 0.1 - 2.0) / 4.0, abs=0.5 * 0.1 * 0.25 + 1e-12)


def test_grid_dimensions():
    g = GridConfig(cell_size=0.2, course_length=10.0, course_width=3.0)
    assert (g.rows, g.cols) == (50, 15)
    t = compile_program(parse_program('terrain "f" { platform { length: 4, height: 0 } goals auto }'), 0.0, g)
    assert t.heights.shape == (50, 15)


def test_too_long_raises():
    p = TerrainProgram("l", (seg("platform", length=10, height=0), seg("box", length=8.5, height=0.1)))
    with pytest.raises(CompileError):
        compile_program(p, 0.0)


def test_bad_difficulty():
    p = TerrainProgram("f", (seg("platform", length=1, height=0),))
    with pytest.raises(ValueError):
        compile_program(p, 1.5)


def test_deterministic_and_read_only():
    p = _programs(1, 3)[0]
    a, b = compile_program(p, 0.7), compile_program(p, 0.7)
    assert a.heights.tobytes() == b.heights.tobytes()
    assert a.goals == b.goals
    with pytest.raises(ValueError):
        a.heights[0, 0] = 1.0


def test_oracle_equivalence_100_programs():
    for p in _programs(100, 11):
        for d in (0.0, 0.5, 1.0):
            got = compile_program(p, d).heights
            want = oracle_grid(p, d)
            bad = np.argwhere(got != want)
            assert bad.size == 0, f"{p.name} d={d} first mismatch at {bad[:3].tolist()}"


def test_auto_goals_rule():
    """Goal i lands on the ceil(i*S/8)-th non-gap segment at the segment's x-centre when it owns it alone."""
    segs = tuple(seg("platform", length=1.0, height=0.0) if k % 2 == 0 else seg("gap", length=0.3, depth=1)
                 for k in range(15))
    p = TerrainProgram("alt", segs)
    t = compile_program(p, 0.0)
    landing = [k for k, s in enumerate(segs) if s.kind != "gap"]  # 8 platforms
    x = np.cumsum([0.0] + [1.0 if k % 2 == 0 else 0.3 for k in range(15)])
    for i in range(1, 9):
        k = landing[math.ceil(i * len(landing) / 8) - 1]
        assert t.goals[i - 1] == pytest.approx(((x[k] + x[k + 1]) / 2, 2.0))


def test_shared_segment_goals_spread():
    p = TerrainProgram("one", (seg("platform", length=8.0, height=0.0),))
    xs = [g[0] for g in compile_program(p, 0.0).goals]
    assert xs == pytest.approx([(k + 0.5) for k in range(8)])


def test_explicit_goals_evaluated():
    p = parse_program('terrain "e" { platform { length: 9, height: 0 } goals [(1+d,2),(2,2),(3,2),(4,2),'
                      '(5,2),(6,2),(7,2),(8,2 - d)] }')
    t = compile_program(p, 0.5)
    assert t.goals[0] == (1.5, 2.0) and t.goals[7] == (8.0, 1.5)


def test_stats_examples():
    flat = compile_program(TerrainProgram("f", (seg("platform", length=1, height=0),)), 0.0)
    s = terrain_stats(flat)
    assert (s.max_height, s.max_consecutive_diff, s.height_std, s.max_goal_step) == (0, 0, 0, 0)
    box = compile_program(TerrainProgram("b", (seg("platform", length=2, height=0),
                                               seg("box", length=1, height=0.5))), 0.0)
    s = terrain_stats(box)
    assert s.max_height == 0.5 and s.max_consecutive_diff == 0.5


def test_stats_match_naive_loop():
    for p in _programs(10, 5):
        t = compile_program(p, 0.6)
        h = t.heights
        rows, cols = h.shape
        mx = max(abs(h[i, j] - h[i + a, j + b]) for i in range(rows) for j in range(cols)
                 for a, b in ((1, 0), (0, 1)) if i + a < rows and j + b < cols)
        gh = [h[min(int(x / 0.1 + 1e-9), rows - 1), min(int(y / 0.1 + 1e-9), cols - 1)] for x, y in t.goals]
        s = terrain_stats(t)
        assert s.max_consecutive_diff == pytest.approx(mx)
        assert s.max_height == pytest.approx(max(map(max, h)))
        assert s.height_std == pytest.approx(float(np.std(h)))
        assert s.max_goal_step == pytest.approx(max(abs(a - b) for a, b in zip(gh, gh[1:])))


def test_exports():
    p = TerrainProgram("b", (seg("platform", length=2, height=0), seg("box", length=1, height=0.5)))
    t = compile_program(p, 0.0)
    rows = heights_csv(t).strip().split("\n")
    assert len(rows) == 180 and len(rows[0].split(",")) == 40
    assert goals_csv(t).startswith("idx,x_m,y_m\n")
    pgm = heights_pgm(t).split("\n")
    assert pgm[0] == "P2" and pgm[2] == "180 40"
