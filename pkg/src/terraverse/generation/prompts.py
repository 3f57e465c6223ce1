"""Prompt construction for initial sampling and terrain evolution."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..compiler import TerrainStats
from ..dsl import DslError, parse_program
from ..trainer import TerrainOutcome

SYSTEM_PROMPT = """\
You design obstacle courses for a legged robot. A course is written in a small
terrain language and is instantiated at a difficulty d between 0 (easiest) and 1
(hardest). Every numeric field is an expression over d.

Course geometry: segments are laid out one after another along x starting at 0.
The course is at most 18 m long and 4 m wide. The robot spawns at x = 0.5 m on
the centerline, so the first segment must be a flat platform at least 1.5 m long.

Segment kinds and their required fields (all meters):
  platform { length, height }
  gap      { length, depth }
  ramp     { length, start_height, end_height }
  stairs   { steps, step_length, step_height }
  box      { length, height }
  beam     { length, height, width }
  poles    { count, spacing, pole_width }
Any segment also accepts `width` (default: full course width) and
`lateral_offset` (meters from the centerline).

Grammar:
  program := "terrain" STRING "{" ["doc" STRING] ["param" "d" ":" 0.0 ".." 1.0] segment+ goals "}"
  segment := KIND "{" IDENT ":" expr ("," IDENT ":" expr)* "}"
  goals   := "goals" ("auto" | "[" "(" expr "," expr ")" ("," "(" expr "," expr ")")* "]")
  expr    := numbers, d, + - * /, parentheses, min(a, b), max(a, b), round(a)
Explicit goal lists must contain exactly 8 (x, y) points; `goals auto` places them
on the obstacles.

Hard limits, checked at d = 0, 1/9, ..., 1:
  - maximum terrain height below 3.0 m
  - height difference between consecutive goals below 0.8 m
  - total course length at most 18 m
Use min(...) and max(...) to keep difficulty-scaled values inside these limits.

Write a short `doc` string describing the course. Reply with exactly one program
inside a single fenced code block (```terrain ... ```)."""

INITIAL_INSTRUCTION = (
    "Here is an example course. Write a new, different course that trains a distinct "
    "locomotion skill."
)

EVOLVE_INSTRUCTION = (
    "Write a variation of your previous course. Use the training statistics to keep it "
    "challenging but learnable: if the robot already reaches most goals make it harder, "
    "if it reaches few goals make it easier. Keep it distinct from the other courses listed."
)

HARDER_INSTRUCTION = (
    "Write a variation of your previous course that is more challenging for the robot."
)

DIVERSITY_INSTRUCTION = "Courses written so far (make the new one different from all of them):"


@dataclass
class FeedbackBundle:
    terrain_stats: TerrainStats
    train_before: TerrainOutcome
    train_after: TerrainOutcome
    library_docs: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "terrain_stats": self.terrain_stats.as_dict(),
            "train_before": self.train_before.to_dict(),
            "train_after": self.train_after.to_dict(),
            "library_docs": list(self.library_docs),
        }


@dataclass
class GeneratorRequest:
    kind: str  # "initial" or "evolve"
    incontext_program: str
    parent_program: Optional[str] = None
    feedback: Optional[FeedbackBundle] = None
    temperature: float = 1.0
    max_attempts: int = 3
    make_harder: bool = False  # replaces feedback with a fixed instruction
    previous_programs: list[str] = field(default_factory=list)  # sequential, diversity-conditioned sampling
    random_mode: bool = False  # baseline: random obstacles, ignores the prompt content

    def __post_init__(self):
        if self.kind not in ("initial", "evolve"):
            raise ValueError(f"unknown request kind {self.kind!r}")
        if self.kind == "evolve":
            if self.parent_program is None:
                raise ValueError("evolve request needs a parent program")
            if self.feedback is None and not self.make_harder:
                raise ValueError("evolve request needs feedback (or make_harder)")


def fence(text: str) -> str:
    return f"```terrain\n{text.rstrip()}\n```"


def render_feedback(fb: FeedbackBundle) -> str:
    s = fb.terrain_stats
    lines = [
        "Terrain statistics at the hardest difficulty:",
        f"max_height: {s.max_height:.3f}",
        f"max_consecutive_diff: {s.max_consecutive_diff:.3f}",
        f"height_std: {s.height_std:.3f}",
        "Training statistics (mean over difficulty levels 1-10):",
        f"goals_before: {fb.train_before.goals:.2f}",
        f"goals_after: {fb.train_after.goals:.2f}",
        f"steps_before: {fb.train_before.steps:.1f}",
        f"steps_after: {fb.train_after.steps:.1f}",
        f"edge_violations_before: {fb.train_before.edge_violations:.1f}",
        f"edge_violations_after: {fb.train_after.edge_violations:.1f}",
    ]
    if fb.library_docs:
        lines.append("Docstrings of the other courses used for training:")
        lines += [f"- {doc}" for doc in fb.library_docs]
    return "\n".join(lines)


def _summary(text: str) -> str:
    """One line per earlier course: its doc string and segment kinds."""
    try:
        p = parse_program(text)
    except DslError:
        return "(unparseable course)"
    kinds = ", ".join(s.kind for s in p.segments)
    return f"{p.doc or p.name} [{kinds}]"


def build_prompt(req: GeneratorRequest) -> list[dict]:
    """Ordered chat messages for a request; deterministic in the request."""
    msgs = [
        {"role": "system", "content": SYSTEM_PROMPT},
        {"role": "user", "content": f"{INITIAL_INSTRUCTION}\n\n{fence(req.incontext_program)}"},
    ]
    if req.kind == "initial":
        if req.previous_programs:
            listing = "\n".join(f"- {_summary(p)}" for p in req.previous_programs)
            msgs[1]["content"] += f"\n\n{DIVERSITY_INSTRUCTION}\n{listing}"
        return msgs
    msgs.append({"role": "assistant", "content": fence(req.parent_program)})
    if req.make_harder:
        msgs.append({"role": "user", "content": HARDER_INSTRUCTION})
    else:
        msgs.append({"role": "user", "content": f"{render_feedback(req.feedback)}\n\n{EVOLVE_INSTRUCTION}"})
    return msgs
