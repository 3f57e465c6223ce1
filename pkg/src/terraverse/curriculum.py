"""Per-terrain difficulty ladder: promote on success, demote on failure, occasionally step back."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class LadderConfig:
    g_promote: float = 8 * 0.8
    g_demote: float = 8 * 0.4
    p_stay: float = 0.75
    levels: int = 10

    def __post_init__(self):
        if not 0 <= self.g_demote < self.g_promote <= 8:
            raise ValueError("need 0 <= g_demote < g_promote <= 8")
        if not 0.0 <= self.p_stay <= 1.0:
            raise ValueError("p_stay must be a probability")
        if self.levels < 1:
            raise ValueError("levels must be positive")


@dataclass
class CurriculumState:
    level: int = 1
    history: list[tuple[int, int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"level": self.level, "history": [list(h) for h in self.history]}

    @classmethod
    def from_dict(cls, d: dict) -> "CurriculumState":
        return cls(int(d["level"]), [(int(a), int(b)) for a, b in d.get("history", [])])


def level_to_difficulty(k: int, levels: int = 10) -> float:
    if not 1 <= k <= levels:
        raise ValueError(f"level {k} outside 1..{levels}")
    return (k - 1) / (levels - 1) if levels > 1 else 0.0


def update(st: CurriculumState, goals_reached: float, rng: np.random.Generator,
           cfg: LadderConfig = LadderConfig()) -> CurriculumState:
    """Return the next state. ``goals >= g_promote`` promotes, ``goals < g_demote`` demotes.

    In between the agent stays with probability p_stay, otherwise drops to a
    uniformly chosen lower level (level 1 stays put). The rng is consumed only
    in the middle band.
    """
    k = st.level
    if goals_reached >= cfg.g_promote:
        nk = min(k + 1, cfg.levels)
    elif goals_reached < cfg.g_demote:
        nk = max(k - 1, 1)
    elif rng.random() < cfg.p_stay or k == 1:
        nk = k
    else:
        nk = int(rng.integers(1, k))
    return CurriculumState(nk, st.history + [(k, int(goals_reached))])
