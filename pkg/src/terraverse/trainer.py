"""Cross-entropy-method training of skill vectors, proxy scoring and soft selection.

CEM runs in "ability" space where every component grows with capability; the
beam component is flipped (``BEAM_START - beam``) so larger is better
everywhere.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .curriculum import CurriculumState, LadderConfig, update
from .dsl import TerrainProgram
from .instances import LEVELS, instantiate
from .sim import BEAM_START, SKILL_MAX, SkillVector, goals_reached, rollout

log = logging.getLogger(__name__)

ABILITY_HI = np.array([SKILL_MAX.climb, SKILL_MAX.descend, SKILL_MAX.jump, SKILL_MAX.slope, BEAM_START])
ABILITY_LO = np.zeros(5)


class EmptyLibrary(ValueError):
    pass


def to_ability(s: SkillVector) -> np.ndarray:
    a = s.as_array()
    a[4] = BEAM_START - a[4]
    return a


def from_ability(a: np.ndarray) -> SkillVector:
    a = np.clip(np.asarray(a, dtype=np.float64), ABILITY_LO, ABILITY_HI)
    s = a.copy()
    s[4] = BEAM_START - a[4]
    return SkillVector.from_array(s)


@dataclass
class SkillPolicy:
    mean: SkillVector
    spread: np.ndarray = field(default_factory=lambda: np.full(5, 0.08))
    step_cap: np.ndarray = field(default_factory=lambda: np.full(5, 0.15))

    def __post_init__(self):
        self.spread = np.asarray(self.spread, dtype=np.float64)
        self.step_cap = np.asarray(self.step_cap, dtype=np.float64)
        if np.any(self.spread <= 0) or np.any(self.step_cap <= 0):
            raise ValueError("spread and step_cap must be positive")

    def to_dict(self) -> dict:
        return {"mean": self.mean.to_dict(), "spread": self.spread.tolist(), "step_cap": self.step_cap.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SkillPolicy":
        return cls(SkillVector(**d["mean"]), np.array(d["spread"]), np.array(d["step_cap"]))

    def copy(self) -> "SkillPolicy":
        return SkillPolicy(self.mean, self.spread.copy(), self.step_cap.copy())


@dataclass(frozen=True)
class TrainConfig:
    candidates: int = 32
    generations: int = 8
    budget: int = 2000  # rollouts per phase: candidate scoring plus incumbent ladder rollouts
    elite_frac: float = 0.25
    step_cap: float = 0.15
    init_spread: float = 0.08
    min_spread: float = 0.02
    minibatch: int = 10  # terrains scored per generation when the library is larger
    revert_on_regression: bool = True
    ladder: LadderConfig = LadderConfig()


@dataclass
class TerrainOutcome:
    goals: float
    steps: float
    edge_violations: float

    def to_dict(self) -> dict:
        return {"goals": self.goals, "steps": self.steps, "edge_violations": self.edge_violations}


@dataclass
class TrainStats:
    names: list[str]
    before: list[TerrainOutcome]
    after: list[TerrainOutcome]
    evaluations_used: int
    generations_run: int = 0
    reverted: bool = False

    @property
    def goals_before(self) -> float:
        return float(np.mean([o.goals for o in self.before]))

    @property
    def goals_after(self) -> float:
        return float(np.mean([o.goals for o in self.after]))

    def to_dict(self) -> dict:
        return {
            "evaluations_used": self.evaluations_used,
            "generations_run": self.generations_run,
            "reverted": self.reverted,
            "terrains": [
                {"name": n, "before": b.to_dict(), "after": a.to_dict()}
                for n, b, a in zip(self.names, self.before, self.after)
            ],
        }


@dataclass(frozen=True)
class ProxyScore:
    agent: int
    score: float


def library_outcomes(s: SkillVector, library: Sequence[TerrainProgram]) -> list[TerrainOutcome]:
    """Per terrain: mean goals, steps and edge violations over all ladder levels."""
    out = []
    for p in library:
        res = [rollout(instantiate(p, k), s, with_path=False) for k in LEVELS]
        out.append(TerrainOutcome(
            goals=float(np.mean([r.goals_reached for r in res])),
            steps=float(np.mean([r.steps for r in res])),
            edge_violations=float(np.mean([r.edge_violations for r in res])),
        ))
    return out


def _elite_order(scores: np.ndarray, cands: np.ndarray, mean: np.ndarray) -> np.ndarray:
    """Rank candidates by score (desc), then closeness to the current mean, then index."""
    dist = np.linalg.norm(cands - mean, axis=1)
    return np.lexsort((np.arange(len(scores)), dist, -scores))


def train_agent(
    policy: SkillPolicy,
    library: Sequence[TerrainProgram],
    ladders: list[CurriculumState],
    rng: np.random.Generator,
    cfg: TrainConfig = TrainConfig(),
) -> tuple[SkillPolicy, list[CurriculumState], TrainStats]:
    """One training phase; returns the new policy, updated ladders and before/after stats."""
    if not library:
        raise EmptyLibrary("training library is empty")
    if len(ladders) != len(library):
        raise ValueError("need one ladder state per library terrain")
    ladders = list(ladders)
    a0 = to_ability(policy.mean)
    lo = np.maximum(ABILITY_LO, a0 - policy.step_cap)
    hi = np.minimum(ABILITY_HI, a0 + policy.step_cap)
    mean = a0.copy()
    spread = np.maximum(np.full(5, cfg.init_spread), cfg.min_spread)
    n_elite = max(1, int(round(cfg.candidates * cfg.elite_frac)))

    before = library_outcomes(policy.mean, library)
    used, gens = 0, 0
    J = len(library)
    for _ in range(cfg.generations):
        if cfg.minibatch and J > cfg.minibatch:
            batch = np.sort(rng.choice(J, size=cfg.minibatch, replace=False))
        else:
            batch = np.arange(J)
        cost = (cfg.candidates + 1) * len(batch)
        if used + cost > cfg.budget:
            break
        cands = np.clip(mean + spread * rng.standard_normal((cfg.candidates, 5)), lo, hi)
        terrains = [instantiate(library[j], ladders[j].level) for j in batch]
        scores = np.array([
            np.mean([goals_reached(t, from_ability(c)) for t in terrains]) for c in cands
        ])
        used += cfg.candidates * len(batch)
        if scores.max() > scores.min():
            elites = cands[_elite_order(scores, cands, mean)[:n_elite]]
            mean = np.clip(elites.mean(axis=0), lo, hi)
            spread = np.maximum(elites.std(axis=0), cfg.min_spread)
        incumbent = from_ability(mean)
        for j, t in zip(batch, terrains):
            ladders[j] = update(ladders[j], goals_reached(t, incumbent), rng, cfg.ladder)
        used += len(batch)
        gens += 1

    new_mean = from_ability(mean)
    after = library_outcomes(new_mean, library)
    reverted = False
    if cfg.revert_on_regression and sum(o.goals for o in after) < sum(o.goals for o in before):
        new_mean, after, reverted = policy.mean, before, True
    log.debug("trained %d generations, %d evaluations, goals %.2f -> %.2f", gens, used,
              np.mean([o.goals for o in before]), np.mean([o.goals for o in after]))
    new_policy = SkillPolicy(new_mean, spread, policy.step_cap.copy())
    names = [p.name for p in library]
    return new_policy, ladders, TrainStats(names, before, after, used, gens, reverted)


def evaluate_proxy(policy, proxy: Sequence[TerrainProgram]) -> float:
    """Mean goals reached over every proxy terrain at every ladder level."""
    return evaluate_proxy_many([policy], proxy)[0]


def evaluate_proxy_many(policies: Sequence, proxy: Sequence[TerrainProgram]) -> list[float]:
    """Terrain-major scoring of several policies so each instance is compiled once."""
    if not proxy:
        raise ValueError("proxy set is empty")
    skills = [p.mean if isinstance(p, SkillPolicy) else p for p in policies]
    totals = np.zeros(len(skills))
    for p in proxy:
        for k in LEVELS:
            t = instantiate(p, k)
            for i, s in enumerate(skills):
                totals[i] += goals_reached(t, s)
    return (totals / (len(proxy) * len(LEVELS))).tolist()


def soft_select(scores: Sequence[float], rng: np.random.Generator,
                weights: Optional[Sequence[float]] = None) -> int:
    """Draw a policy index: rank r (score desc, ties by lower index) is chosen with probability weights[r]."""
    n = len(scores)
    if weights is None:
        weights = [0.75, 0.25] + [0.0] * (n - 2)
    w = np.zeros(n)
    m = min(n, len(weights))
    w[:m] = np.asarray(weights, dtype=np.float64)[:m]
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("selection weights must sum to 1")
    order = sorted(range(n), key=lambda i: (-scores[i], i))
    rank = int(rng.choice(n, p=w))
    return order[rank]
