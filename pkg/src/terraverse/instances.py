"""Shared cache of compiled, auto-fixed terrain instances keyed by (program, level)."""

from __future__ import annotations

from collections import OrderedDict

from .compiler import DEFAULT_GRID, CompiledTerrain, GridConfig, compile_program
from .curriculum import level_to_difficulty
from .dsl import TerrainProgram
from .validator import FixConfig, auto_fix

LEVELS = tuple(range(1, 11))
_CACHE_SIZE = 4096
_cache: "OrderedDict[tuple, CompiledTerrain]" = OrderedDict()


def instantiate(p: TerrainProgram, level: int, grid: GridConfig = DEFAULT_GRID,
                fix: FixConfig = FixConfig()) -> CompiledTerrain:
    """Compile ``p`` at ladder ``level`` and apply the grid fixes every training terrain receives."""
    key = (p, level, grid, fix)
    t = _cache.get(key)
    if t is not None:
        _cache.move_to_end(key)
        return t
    t, _ = auto_fix(compile_program(p, level_to_difficulty(level), grid), fix)
    _cache[key] = t
    if len(_cache) > _CACHE_SIZE:
        _cache.popitem(last=False)
    return t


def clear_cache():
    _cache.clear()
