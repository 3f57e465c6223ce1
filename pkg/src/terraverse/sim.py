"""Deterministic traversal of compiled terrains by a skill-bounded agent.

The agent moves between 4-connected grid cells. A move is allowed when the
height change is within the agent's climb/descend limits and both cells are
standable: not on a ramp steeper than its slope skill, and not on a raised
strip narrower than its beam skill. Pits can be jumped along a grid axis.
The controller walks shortest paths from spawn to goal 1, goal 1 to goal 2,
and so on, stopping at the first unreachable goal.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np

from .compiler import CompiledTerrain

EDGE_THRESHOLD = 0.25  # height jump that counts as an edge / discontinuity
PIT_DEPTH = 0.25  # cells this far below the take-off cell form a jumpable pit
CAP_EPS = 1e-9
JUMP_SCAN = 1.0  # longest pit ever considered; equals the jump bound
SKILL_NAMES = ("climb", "descend", "jump", "slope", "beam")
BEAM_START = 0.6

TERMINATIONS = ("success", "stuck", "fall")


@dataclass(frozen=True)
class SkillVector:
    climb: float = 0.0
    descend: float = 0.0
    jump: float = 0.0
    slope: float = 0.0
    beam: float = BEAM_START  # narrowest walkable strip; lower is better

    def as_array(self) -> np.ndarray:
        return np.array([self.climb, self.descend, self.jump, self.slope, self.beam], dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> "SkillVector":
        return cls(*(float(v) for v in a))

    def dominates(self, other: "SkillVector") -> bool:
        """True if at least as capable as ``other`` in every component."""
        return (self.climb >= other.climb and self.descend >= other.descend and self.jump >= other.jump
                and self.slope >= other.slope and self.beam <= other.beam)

    def to_dict(self) -> dict:
        return {n: getattr(self, n) for n in SKILL_NAMES}


SKILL_ZERO = SkillVector()
SKILL_MAX = SkillVector(1.0, 1.2, 1.0, 0.8, 0.0)


@dataclass
class EpisodeResult:
    goals_reached: int
    steps: int
    edge_violations: int
    terminated: str
    path: Optional[list[tuple[int, int]]] = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "goals_reached": self.goals_reached,
            "steps": self.steps,
            "edge_violations": self.edge_violations,
            "terminated": self.terminated,
        }


# --------------------------------------------------------------------------
# per-terrain precomputation

@numba.njit(cache=True)
def _gradient(H, cell):
    rows, cols = H.shape
    g = np.zeros(rows * cols)
    for i in range(rows):
        for j in range(cols):
            best = 0.0
            if 0 < i < rows - 1:
                d1 = H[i, j] - H[i - 1, j]
                d2 = H[i + 1, j] - H[i, j]
                if d1 != 0.0 and d2 != 0.0 and (d1 > 0) == (d2 > 0) \
                        and abs(d1) <= EDGE_THRESHOLD and abs(d2) <= EDGE_THRESHOLD:
                    best = max(best, abs(H[i + 1, j] - H[i - 1, j]) / (2.0 * cell))
            if 0 < j < cols - 1:
                d1 = H[i, j] - H[i, j - 1]
                d2 = H[i, j + 1] - H[i, j]
                if d1 != 0.0 and d2 != 0.0 and (d1 > 0) == (d2 > 0) \
                        and abs(d1) <= EDGE_THRESHOLD and abs(d2) <= EDGE_THRESHOLD:
                    best = max(best, abs(H[i, j + 1] - H[i, j - 1]) / (2.0 * cell))
            g[i * cols + j] = best
    return g


@numba.njit(cache=True)
def _strip_widths(H, cell):
    """Width of the narrow raised strip each cell sits on (inf when not on one).

    Along each axis a run is a maximal chain of neighbours differing by at most
    EDGE_THRESHOLD; the run is a strip when both ends fall away by more than that.
    """
    rows, cols = H.shape
    out = np.full(rows * cols, np.inf)
    # runs along y (fixed row)
    for i in range(rows):
        a = 0
        while a < cols:
            b = a
            while b + 1 < cols and abs(H[i, b + 1] - H[i, b]) <= EDGE_THRESHOLD:
                b += 1
            lo_drop = a > 0 and H[i, a - 1] < H[i, a] - EDGE_THRESHOLD
            hi_drop = b < cols - 1 and H[i, b + 1] < H[i, b] - EDGE_THRESHOLD
            if lo_drop and hi_drop:
                w = (b - a + 1) * cell
                for j in range(a, b + 1):
                    if w < out[i * cols + j]:
                        out[i * cols + j] = w
            a = b + 1
    # runs along x (fixed column)
    for j in range(cols):
        a = 0
        while a < rows:
            b = a
            while b + 1 < rows and abs(H[b + 1, j] - H[b, j]) <= EDGE_THRESHOLD:
                b += 1
            lo_drop = a > 0 and H[a - 1, j] < H[a, j] - EDGE_THRESHOLD
            hi_drop = b < rows - 1 and H[b + 1, j] < H[b, j] - EDGE_THRESHOLD
            if lo_drop and hi_drop:
                w = (b - a + 1) * cell
                for i in range(a, b + 1):
                    if w < out[i * cols + j]:
                        out[i * cols + j] = w
            a = b + 1
    return out


@numba.njit(cache=True)
def _near_edge(H):
    rows, cols = H.shape
    out = np.zeros(rows * cols, dtype=np.bool_)
    for i in range(rows):
        for j in range(cols):
            h = H[i, j]
            hit = False
            for di in range(-1, 2):
                for dj in range(-1, 2):
                    a, b = i + di, j + dj
                    if (di != 0 or dj != 0) and 0 <= a < rows and 0 <= b < cols:
                        if abs(H[a, b] - h) > EDGE_THRESHOLD:
                            hit = True
            out[i * cols + j] = hit
    return out


@numba.njit(cache=True)
def _jump_edges(H, cell, max_cells):
    """All (src, dst, pit_length) jump candidates along the four axis directions."""
    rows, cols = H.shape
    cap = rows * cols * 4
    src = np.empty(cap, dtype=np.int64)
    dst = np.empty(cap, dtype=np.int64)
    plen = np.empty(cap)
    m = 0
    for i in range(rows):
        for j in range(cols):
            h = H[i, j]
            for k in range(4):
                di = (-1, 1, 0, 0)[k]
                dj = (0, 0, -1, 1)[k]
                a, b = i + di, j + dj
                n = 0
                while 0 <= a < rows and 0 <= b < cols and H[a, b] < h - PIT_DEPTH and n <= max_cells:
                    n += 1
                    a += di
                    b += dj
                if n >= 1 and n <= max_cells and 0 <= a < rows and 0 <= b < cols:
                    src[m] = i * cols + j
                    dst[m] = a * cols + b
                    plen[m] = n * cell
                    m += 1
    return src[:m], dst[:m], plen[:m]


def _csr(keys: np.ndarray, vals: np.ndarray, lens: np.ndarray, n: int):
    order = np.lexsort((vals, keys))
    keys, vals, lens = keys[order], vals[order], lens[order]
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(ptr, keys + 1, 1)
    return np.cumsum(ptr), np.ascontiguousarray(vals), np.ascontiguousarray(lens)


@dataclass(eq=False)
class SimTerrain:
    """Skill-independent arrays derived from one compiled terrain."""

    H: np.ndarray  # flattened heights
    rows: int
    cols: int
    cell: float
    grad: np.ndarray
    strip: np.ndarray
    near_edge: np.ndarray
    jptr: np.ndarray
    jdst: np.ndarray
    jlen: np.ndarray
    rptr: np.ndarray
    rsrc: np.ndarray
    rlen: np.ndarray
    spawn: int
    goals: np.ndarray


_prepared: "weakref.WeakKeyDictionary[CompiledTerrain, SimTerrain]" = weakref.WeakKeyDictionary()


def prepare(t: CompiledTerrain) -> SimTerrain:
    st = _prepared.get(t)
    if st is not None:
        return st
    H2 = np.ascontiguousarray(t.heights, dtype=np.float64)
    rows, cols = H2.shape
    n = rows * cols
    max_cells = int(np.floor(JUMP_SCAN / t.cell_size + 1e-9))
    s, dd, ln = _jump_edges(H2, t.cell_size, max_cells)
    jptr, jdst, jlen = _csr(s, dd, ln, n)
    rptr, rsrc, rlen = _csr(dd, s, ln, n)
    si, sj = t.spawn_cell()
    st = SimTerrain(
        H=H2.ravel(), rows=rows, cols=cols, cell=t.cell_size,
        grad=_gradient(H2, t.cell_size), strip=_strip_widths(H2, t.cell_size), near_edge=_near_edge(H2),
        jptr=jptr, jdst=jdst, jlen=jlen, rptr=rptr, rsrc=rsrc, rlen=rlen,
        spawn=si * cols + sj,
        goals=np.array([i * cols + j for i, j in t.goal_cells()], dtype=np.int64),
    )
    _prepared[t] = st
    return st


# --------------------------------------------------------------------------
# search kernels

@numba.njit(cache=True, inline="always")
def _standable(c, grad, strip, sk):
    return grad[c] <= sk[3] + CAP_EPS and strip[c] + CAP_EPS >= sk[4]


@numba.njit(cache=True, inline="always")
def _step_ok(hu, hv, sk):
    dh = hv - hu
    if dh > 0.0:
        return dh <= sk[0] + CAP_EPS
    return -dh <= sk[1] + CAP_EPS


@numba.njit(cache=True)
def _bfs(H, grad, strip, jptr, jdst, jlen, rows, cols, src, dst, sk, dist, queue):
    """Breadth-first distances from ``src``; stops once ``dst`` is labelled. Returns dist[dst]."""
    for c in range(rows * cols):
        dist[c] = -1
    dist[src] = 0
    if src == dst:
        return 0
    if not _standable(src, grad, strip, sk):
        return -1
    head, tail = 0, 0
    queue[tail] = src
    tail += 1
    while head < tail:
        u = queue[head]
        head += 1
        i = u // cols
        j = u - i * cols
        hu = H[u]
        nd = dist[u] + 1
        for k in range(4):
            if k == 0:
                if i == 0:
                    continue
                v = u - cols
            elif k == 1:
                if i == rows - 1:
                    continue
                v = u + cols
            elif k == 2:
                if j == 0:
                    continue
                v = u - 1
            else:
                if j == cols - 1:
                    continue
                v = u + 1
            if dist[v] >= 0:
                continue
            if not _step_ok(hu, H[v], sk) or not _standable(v, grad, strip, sk):
                continue
            dist[v] = nd
            if v == dst:
                return nd
            queue[tail] = v
            tail += 1
        for e in range(jptr[u], jptr[u + 1]):
            v = jdst[e]
            if dist[v] >= 0:
                continue
            if jlen[e] > sk[2] + CAP_EPS or H[v] - hu > sk[0] + CAP_EPS or not _standable(v, grad, strip, sk):
                continue
            dist[v] = nd
            if v == dst:
                return nd
            queue[tail] = v
            tail += 1
    return -1


@numba.njit(cache=True)
def _backtrack(H, grad, strip, rptr, rsrc, rlen, rows, cols, dst, sk, dist, out):
    """Write the path ending at ``dst`` (excluding its start cell) into ``out``; lowest-index predecessor wins."""
    n = dist[dst]
    cur = dst
    for step in range(n, 0, -1):
        out[step - 1] = cur
        i = cur // cols
        j = cur - i * cols
        best = rows * cols
        want = dist[cur] - 1
        hc = H[cur]
        for k in range(4):
            if k == 0:
                if i == 0:
                    continue
                p = cur - cols
            elif k == 1:
                if i == rows - 1:
                    continue
                p = cur + cols
            elif k == 2:
                if j == 0:
                    continue
                p = cur - 1
            else:
                if j == cols - 1:
                    continue
                p = cur + 1
            if p < best and dist[p] == want and _standable(p, grad, strip, sk) and _step_ok(H[p], hc, sk):
                best = p
        for e in range(rptr[cur], rptr[cur + 1]):
            p = rsrc[e]
            if p < best and dist[p] == want and _standable(p, grad, strip, sk) \
                    and rlen[e] <= sk[2] + CAP_EPS and hc - H[p] <= sk[0] + CAP_EPS:
                best = p
        cur = best
    return n


@numba.njit(cache=True)
def _run(H, grad, strip, jptr, jdst, jlen, rptr, rsrc, rlen, rows, cols, spawn, goals, sk, want_path):
    n = rows * cols
    dist = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    path = np.empty(n * len(goals) + 1 if want_path else 1, dtype=np.int64)
    plen = 0
    if want_path:
        path[0] = spawn
        plen = 1
    cur = spawn
    steps = 0
    reached = 0
    for g in range(len(goals)):
        target = goals[g]
        k = _bfs(H, grad, strip, jptr, jdst, jlen, rows, cols, cur, target, sk, dist, queue)
        if k < 0:
            term = 2 if not _standable(target, grad, strip, sk) else 1
            return reached, steps, path[:plen], term
        if want_path and k > 0:
            _backtrack(H, grad, strip, rptr, rsrc, rlen, rows, cols, target, sk, dist, path[plen:plen + k])
            plen += k
        steps += k
        reached += 1
        cur = target
    return reached, steps, path[:plen], 0


def _skill_array(s) -> np.ndarray:
    if isinstance(s, SkillVector):
        return s.as_array()
    return np.ascontiguousarray(s, dtype=np.float64)


def goals_reached(t: CompiledTerrain, s) -> int:
    """Fast path used by training: number of goals reached, no path bookkeeping."""
    st = prepare(t)
    g, _, _, _ = _run(st.H, st.grad, st.strip, st.jptr, st.jdst, st.jlen, st.rptr, st.rsrc, st.rlen,
                      st.rows, st.cols, st.spawn, st.goals, _skill_array(s), False)
    return int(g)


def rollout(t: CompiledTerrain, s, with_path: bool = True) -> EpisodeResult:
    st = prepare(t)
    g, steps, path, term = _run(st.H, st.grad, st.strip, st.jptr, st.jdst, st.jlen, st.rptr, st.rsrc,
                                st.rlen, st.rows, st.cols, st.spawn, st.goals, _skill_array(s), True)
    cells = [(int(c) // st.cols, int(c) % st.cols) for c in path]
    return EpisodeResult(
        goals_reached=int(g),
        steps=int(steps),
        edge_violations=int(st.near_edge[path].sum()),
        terminated=TERMINATIONS[term],
        path=cells if with_path else None,
    )


def edge_violation_count(path, t: CompiledTerrain) -> int:
    """Path cells with any 8-neighbour differing in height by more than EDGE_THRESHOLD."""
    ne = prepare(t).near_edge
    return int(sum(ne[i * t.cols + j] for i, j in path))


def feasibility_graph(t: CompiledTerrain, s) -> dict[tuple[int, int], list[tuple[int, int]]]:
    """Directed adjacency (cell -> sorted successor cells) for the given skills."""
    st = prepare(t)
    sk = _skill_array(s)
    rows, cols = st.rows, st.cols
    ok = (st.grad <= sk[3] + CAP_EPS) & (st.strip + CAP_EPS >= sk[4])
    H = st.H
    adj: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for u in range(rows * cols):
        i, j = divmod(u, cols)
        succ = set()
        if ok[u]:
            for a, b in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
                if 0 <= a < rows and 0 <= b < cols:
                    v = a * cols + b
                    dh = H[v] - H[u]
                    fits = dh <= sk[0] + CAP_EPS if dh > 0 else -dh <= sk[1] + CAP_EPS
                    if ok[v] and fits:
                        succ.add(v)
            for e in range(st.jptr[u], st.jptr[u + 1]):
                v = int(st.jdst[e])
                if ok[v] and st.jlen[e] <= sk[2] + CAP_EPS and H[v] - H[u] <= sk[0] + CAP_EPS:
                    succ.add(v)
        adj[(i, j)] = [divmod(v, cols) for v in sorted(succ)]
    return adj
