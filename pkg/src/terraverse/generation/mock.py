"""Deterministic offline generator: random difficulty-scaled courses and feedback-driven mutation.

Difficulty-scaled fields use two shapes so a cap or floor always bounds them:
``min(cap, a + b*d)`` for values that grow with difficulty (heights, gap
lengths) and ``max(floor, a - b*d)`` for values that shrink (beam widths).
Mutation rescales ``a`` or ``b`` by a factor of 1.2, which keeps every mutant
inside the validator limits without re-checking.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..compiler import DEFAULT_GRID, GridConfig, segment_length
from ..dsl import BinOp, Call, Num, Segment, TerrainProgram, Var, format_program, num, parse_program, seg
from ..validator import check_program
from .prompts import GeneratorRequest, build_prompt
from .remote import Generation

log = logging.getLogger(__name__)

MUTATION_FACTOR = 1.2
STRUCTURAL_PROB = 0.2
HARDER_AT = 8 * 0.8
EASIER_BELOW = 8 * 0.4
SPAWN_LENGTH = 2.0
MAX_GOAL_HEIGHT = 0.75  # keeps consecutive goals well under the 0.8 m step limit
GAP_DEPTH = 1.5
QUADRUPED_BOX = (0.645, 0.28, 0.40)  # length, width, height of the robot's bounding box (m)
OBSTACLE_KINDS = ("box", "gap", "ramp", "stairs", "beam", "poles")


def _r(x: float) -> float:
    return round(float(x), 3)


def up(a: float, b: float, cap: float) -> Call:
    """``min(cap, a + b*d)``"""
    return Call("min", (num(_r(cap)), BinOp("+", num(_r(a)), BinOp("*", num(_r(b)), Var()))))


def down(a: float, b: float, floor: float) -> Call:
    """``max(floor, a - b*d)``"""
    return Call("max", (num(_r(floor)), BinOp("-", num(_r(a)), BinOp("*", num(_r(b)), Var()))))


@dataclass(frozen=True)
class ScaledForm:
    shape: str  # "up" or "down"
    bound: float
    a: float
    b: float

    def build(self, a: float, b: float):
        return up(a, b, self.bound) if self.shape == "up" else down(a, b, self.bound)


def match_form(e) -> Optional[ScaledForm]:
    """Recognize the two difficulty-scaled shapes; anything else is left alone by mutation."""
    if not isinstance(e, Call) or len(e.args) != 2 or not isinstance(e.args[0], Num):
        return None
    inner = e.args[1]
    if not (isinstance(inner, BinOp) and isinstance(inner.left, Num) and isinstance(inner.right, BinOp)):
        return None
    prod = inner.right
    if not (prod.op == "*" and isinstance(prod.left, Num) and isinstance(prod.right, Var)):
        return None
    if e.fn == "min" and inner.op == "+":
        return ScaledForm("up", e.args[0].value, inner.left.value, prod.left.value)
    if e.fn == "max" and inner.op == "-":
        return ScaledForm("down", e.args[0].value, inner.left.value, prod.left.value)
    return None


# --------------------------------------------------------------------------
# course construction

# (intercept range, slope range) of each difficulty-scaled field at generation time
RANGES = {
    "box": ((0.04, 0.12), (0.15, 0.5)),
    "gap": ((0.08, 0.2), (0.15, 0.5)),
    "ramp": ((0.08, 0.2), (0.15, 0.5)),
    "stairs": ((0.02, 0.05), (0.04, 0.1)),
    "beam": ((0.6, 0.8), (0.1, 0.4)),
}


def _coef(kind: str, rng: np.random.Generator) -> tuple[float, float]:
    (a0, a1), (b0, b1) = RANGES[kind]
    return rng.uniform(a0, a1), rng.uniform(b0, b1)


def _obstacle(kind: str, rng: np.random.Generator) -> Segment:
    u = rng.uniform
    if kind == "box":
        return seg("box", length=_r(u(1.0, 1.6)), height=up(*_coef(kind, rng), MAX_GOAL_HEIGHT))
    if kind == "gap":
        return seg("gap", length=up(*_coef(kind, rng), 1.0), depth=GAP_DEPTH)
    if kind == "ramp":
        return seg("ramp", length=_r(u(1.5, 2.5)), start_height=0.0,
                   end_height=up(*_coef(kind, rng), MAX_GOAL_HEIGHT))
    if kind == "stairs":
        n = int(rng.integers(3, 6))
        return seg("stairs", steps=n, step_length=_r(u(0.3, 0.5)),
                   step_height=up(*_coef(kind, rng), MAX_GOAL_HEIGHT / n))
    if kind == "beam":
        return seg("beam", length=_r(u(1.5, 2.5)), height=0.2, width=down(*_coef(kind, rng), 0.3))
    if kind == "poles":
        return seg("poles", count=int(rng.integers(3, 5)), spacing=_r(u(0.6, 0.9)), pole_width=_r(u(0.2, 0.3)),
                   lateral_offset=0.45)
    raise ValueError(kind)


def _flat(rng: np.random.Generator) -> Segment:
    return seg("platform", length=_r(rng.uniform(0.8, 1.2)), height=0.0)


def _worst_length(s: Segment) -> float:
    """Longest the segment can ever get; a capped gap is budgeted at its cap."""
    f = match_form(s.get("length")) if s.kind == "gap" else None
    if f is not None and f.shape == "up":
        return f.bound
    return max(segment_length(s, d) for d in (0.0, 1.0))


def _max_length(segments: Sequence[Segment]) -> float:
    return sum(_worst_length(s) for s in segments)


_PLURAL = {"box": "boxes", "stairs": "stairs", "poles": "pole rows"}


def _doc(segments: Sequence[Segment]) -> str:
    kinds = [s.kind for s in segments[1:] if s.kind != "platform"]
    if not kinds:
        return "flat course"
    counts = Counter(kinds)
    parts = [k if c == 1 else f"{c} {_PLURAL.get(k, k + 's')}" for k, c in counts.items()]
    body = parts[0] if len(parts) == 1 else ", ".join(parts[:-1]) + " and " + parts[-1]
    return f"{body} separated by flat ground, scaled by difficulty"


def _assemble(obstacles: Sequence[Segment], rng: np.random.Generator, grid: GridConfig) -> list[Segment]:
    segs = [seg("platform", length=SPAWN_LENGTH, height=0.0)]
    for ob in obstacles:
        trial = segs + [ob, _flat(rng)]
        if _max_length(trial) > grid.course_length:
            break
        segs = trial
    return segs


def _name(prefix: str, rng: np.random.Generator) -> str:
    return f"{prefix}_{int(rng.integers(16 ** 6)):06x}"


def mock_generate(rng: np.random.Generator, previous: Sequence[TerrainProgram] = (),
                  grid: GridConfig = DEFAULT_GRID) -> TerrainProgram:
    """A course of 3-6 random obstacles. With ``previous`` the least-used obstacle kinds are preferred."""
    n = int(rng.integers(3, 7))
    if previous:
        used = Counter(s.kind for p in previous for s in p.segments if s.kind != "platform")
        kinds = []
        for _ in range(n):
            low = min(used[k] for k in OBSTACLE_KINDS)
            choices = [k for k in OBSTACLE_KINDS if used[k] == low]
            k = choices[int(rng.integers(len(choices)))]
            kinds.append(k)
            used[k] += 1
    else:
        kinds = [OBSTACLE_KINDS[int(i)] for i in rng.integers(len(OBSTACLE_KINDS), size=n)]
    segs = _assemble([_obstacle(k, rng) for k in kinds], rng, grid)
    return TerrainProgram(_name("course", rng), tuple(segs), None, _doc(segs))


def mock_random(rng: np.random.Generator, grid: GridConfig = DEFAULT_GRID) -> TerrainProgram:
    """Random-baseline course: boxes and ramps at random lateral positions, sized 0.5-2x the robot.

    Sizes do not depend on difficulty; goals run evenly along the centerline.
    """
    L, W, H = QUADRUPED_BOX
    while True:
        segs = [seg("platform", length=SPAWN_LENGTH, height=0.0)]
        for _ in range(int(rng.integers(3, 7))):
            width = _r(rng.uniform(0.5 * W, 2 * W))
            offset = _r(rng.uniform(-1.5, 1.5))
            length = _r(rng.uniform(0.5 * L, 2 * L))
            height = _r(rng.uniform(0.5 * H, 2 * H))
            if rng.random() < 0.5:
                ob = seg("box", length=length, height=height, width=width, lateral_offset=offset)
            else:
                ob = seg("ramp", length=length, start_height=0.0, end_height=height, width=width,
                         lateral_offset=offset)
            trial = segs + [ob, _flat(rng)]
            if _max_length(trial) > grid.course_length:
                break
            segs = trial
        end = _max_length(segs)
        xs = [SPAWN_LENGTH + (i + 0.5) * (end - SPAWN_LENGTH) / 8 for i in range(8)]
        goals = tuple((num(_r(x)), num(grid.centerline)) for x in xs)
        p = TerrainProgram(_name("random", rng), tuple(segs), goals, "randomly placed boxes and ramps")
        if check_program(p, grid=grid).passed:
            return p


def _direction(goals_after: Optional[float], rng: np.random.Generator) -> int:
    """+1 harder, -1 easier."""
    if goals_after is None or goals_after >= HARDER_AT:
        return 1
    if goals_after < EASIER_BELOW:
        return -1
    return 1 if rng.random() < 0.5 else -1


def _scaled_fields(p: TerrainProgram) -> list[tuple[int, str, ScaledForm]]:
    out = []
    for i, s in enumerate(p.segments):
        for name, e in s.params:
            f = match_form(e)
            if f is not None:
                out.append((i, name, f))
    return out


def _rescale(f: ScaledForm, harder: bool, which: str) -> tuple[float, float]:
    k = MUTATION_FACTOR
    grow = harder if f.shape == "up" or which == "b" else not harder
    fac = k if grow else 1.0 / k
    return (_r(f.a * fac), f.b) if which == "a" else (f.a, _r(f.b * fac))


def mock_mutate(parent: TerrainProgram, goals_after: Optional[float], rng: np.random.Generator,
                grid: GridConfig = DEFAULT_GRID) -> TerrainProgram:
    """Rescale one difficulty coefficient, or (probability 0.2) add/remove an obstacle.

    ``goals_after`` is the trained policy's mean goals on the parent; ``None``
    means no feedback, which always asks for a harder course.
    """
    direction = _direction(goals_after, rng)
    harder = direction > 0
    segs = list(parent.segments)
    fields = _scaled_fields(parent)
    structural = rng.random() < STRUCTURAL_PROB or not fields
    if structural:
        obstacles = [i for i, s in enumerate(segs) if i > 0 and s.kind != "platform"]
        if harder:
            kind = OBSTACLE_KINDS[int(rng.integers(len(OBSTACLE_KINDS)))]
            trial = segs + [_obstacle(kind, rng), _flat(rng)]
            if _max_length(trial) <= grid.course_length:
                segs = trial
                structural = True
            else:
                structural = False
        elif len(obstacles) > 1:
            i = obstacles[int(rng.integers(len(obstacles)))]
            drop = {i, i + 1} if i + 1 < len(segs) and segs[i + 1].kind == "platform" else {i}
            segs = [s for k, s in enumerate(segs) if k not in drop]
        else:
            structural = False
    if not structural and fields:
        i, name, f = fields[int(rng.integers(len(fields)))]
        which = "a" if rng.random() < 0.5 else "b"
        a, b = _rescale(f, harder, which)
        segs[i] = segs[i].replace(name, f.build(a, b))
    base = parent.name.rsplit("_", 1)[0]
    return TerrainProgram(_name(base, rng), tuple(segs), parent.goals, _doc(segs))


class MockGenerator:
    """Generator interface over the mock rules; prompts are still built and recorded."""

    name = "mock"

    def __init__(self, grid: GridConfig = DEFAULT_GRID):
        self.grid = grid

    def generate(self, req: GeneratorRequest, rng: np.random.Generator) -> Generation:
        messages = build_prompt(req)
        if req.random_mode:
            p = mock_random(rng, self.grid)
        elif req.kind == "initial":
            previous = [parse_program(t) for t in req.previous_programs]
            p = mock_generate(rng, previous, self.grid)
        else:
            parent = parse_program(req.parent_program)
            goals_after = None if req.make_harder else req.feedback.train_after.goals
            p = mock_mutate(parent, goals_after, rng, self.grid)
        text = format_program(p)
        return Generation(p, text, [{"messages": messages, "response": f"```terrain\n{text}```"}], 1)
