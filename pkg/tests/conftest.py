import numpy as np
import pytest

from terraverse.compiler import CompiledTerrain
from terraverse.dsl import TerrainProgram, linear, num, seg


def make_terrain(heights, goals=None, spawn=(0.05, 0.05), cell=0.1, name="grid", d=0.0) -> CompiledTerrain:
    """Wrap a raw height array; default goals all sit on the spawn cell."""
    h = np.ascontiguousarray(np.asarray(heights, dtype=np.float64))
    h.setflags(write=False)
    goals = tuple(goals) if goals is not None else (spawn,) * 8
    return CompiledTerrain(h, cell, goals, spawn, name, d)


def cell_center(i, j, cell=0.1):
    return ((i + 0.5) * cell, (j + 0.5) * cell)


def random_small_program(rng: np.random.Generator) -> TerrainProgram:
    """1-4 obstacles after a spawn platform, every numeric field linear in d."""
    u = lambda a, b: round(float(rng.uniform(a, b)), 2)  # noqa: E731
    lin = lambda a0, a1, b0, b1: linear(u(a0, a1), u(b0, b1))  # noqa: E731
    segs = [seg("platform", length=u(0.5, 2.0), height=0.0)]
    for _ in range(int(rng.integers(1, 5))):
        k = rng.choice(["platform", "gap", "ramp", "stairs", "box", "beam", "poles"])
        opt = {}
        if rng.random() < 0.4 and k not in ("poles",):
            opt["width"] = lin(0.3, 2.5, -0.3, 0.3)
        if rng.random() < 0.4:
            opt["lateral_offset"] = lin(-1.2, 1.2, -0.4, 0.4)
        if k == "platform":
            s = seg(k, length=lin(0.3, 1.5, 0.0, 0.5), height=lin(-0.2, 0.5, -0.2, 0.2), **opt)
        elif k == "gap":
            s = seg(k, length=lin(0.1, 0.5, 0.0, 0.5), depth=lin(0.3, 1.5, 0.0, 0.5), **opt)
        elif k == "ramp":
            s = seg(k, length=lin(0.5, 2.5, 0.0, 0.5), start_height=lin(0.0, 0.4, 0.0, 0.2),
                    end_height=lin(0.0, 0.8, -0.2, 0.4), **opt)
        elif k == "stairs":
            s = seg(k, steps=num(int(rng.integers(1, 6))), step_length=lin(0.15, 0.5, 0.0, 0.2),
                    step_height=lin(-0.1, 0.15, -0.05, 0.05), **opt)
        elif k == "box":
            s = seg(k, length=lin(0.2, 1.5, 0.0, 0.5), height=lin(0.0, 0.8, 0.0, 0.5), **opt)
        elif k == "beam":
            opt.setdefault("width", lin(0.2, 1.0, -0.2, 0.0))
            s = seg(k, length=lin(0.5, 2.0, 0.0, 0.5), height=lin(0.0, 0.4, 0.0, 0.2), **opt)
        else:
            s = seg(k, count=num(int(rng.integers(1, 5))), spacing=lin(0.4, 1.0, 0.0, 0.3),
                    pole_width=lin(0.1, 0.35, 0.0, 0.1), **opt)
        segs.append(s)
    return TerrainProgram(f"rand_{int(rng.integers(1 << 30))}", tuple(segs))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
