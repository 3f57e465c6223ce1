"""Outer loop: train a population, score it on every terrain seen so far, select, evolve the terrains.

Ablations change one mechanism each:

- ``no_feedback``: evolution prompts carry a fixed make-it-harder instruction instead of statistics.
- ``random_baseline``: libraries are fresh random-obstacle courses every iteration (no evolution).
- ``initial_only`` / ``final_only`` / ``diversity_only`` / ``oracle``: one policy trained for T
  phases on a fixed set (the initial courses, the last libraries of a full run, courses sampled
  sequentially for diversity, or the benchmark itself).
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from ..bench import benchmark_mean, build_benchmark, evaluate_benchmark, BenchmarkResult
from ..compiler import terrain_stats
from ..curriculum import CurriculumState, LadderConfig
from ..dsl import TerrainProgram, format_program, parse_program
from ..instances import instantiate
from ..sim import SkillVector
from ..store import RunStore, make_run_id
from ..trainer import SkillPolicy, TrainConfig, TrainStats, evaluate_proxy_many, soft_select, train_agent
from ..validator import FixConfig, check_program
from .mock import MockGenerator, mock_generate, mock_mutate
from .prompts import FeedbackBundle, GeneratorRequest
from .remote import GeneratorExhausted, RemoteConfig, RemoteGenerator

log = logging.getLogger(__name__)

ABLATIONS = ("no_feedback", "initial_only", "final_only", "diversity_only", "random_baseline", "oracle")
FIXED_SET = ("initial_only", "final_only", "diversity_only", "oracle")
LP_FLOOR = 0.01


def load_incontext() -> str:
    return resources.files("terraverse.data").joinpath("incontext.terrain").read_text("utf-8")


@dataclass
class RunConfig:
    T: int = 5
    N: int = 8
    J: int = 10
    seed: int = 0
    generator: str = "mock"
    ablation: Optional[str] = None
    resampling_enabled: bool = False
    ladder_inherit: bool = True  # evolved terrains start at their parent's ladder level
    temperature: float = 1.0
    max_attempts: int = 3
    remote_url: str = ""
    remote_model: str = "gpt-4o"
    initial_skill: SkillVector = SkillVector(0.1, 0.2, 0.1, 0.1, 0.55)
    train: TrainConfig = TrainConfig()

    def __post_init__(self):
        if min(self.T, self.N, self.J) < 1:
            raise ValueError("T, N and J must be at least 1")
        if self.ablation is not None and self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}; choose from {', '.join(ABLATIONS)}")
        if self.generator not in ("mock", "remote"):
            raise ValueError("generator must be 'mock' or 'remote'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["initial_skill"] = self.initial_skill.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if "initial_skill" in d:
            d["initial_skill"] = SkillVector(**d["initial_skill"])
        if "train" in d:
            t = dict(d["train"])
            if "ladder" in t:
                t["ladder"] = LadderConfig(**t["ladder"])
            d["train"] = TrainConfig(**t)
        return cls(**d)


@dataclass
class AdmissionStats:
    attempts: int = 0
    raw_passed: int = 0
    fixed: int = 0
    fallbacks: int = 0
    unchanged: int = 0

    @property
    def pass_rate(self) -> float:
        return self.raw_passed / self.attempts if self.attempts else 1.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass_rate"] = self.pass_rate
        return d


@dataclass
class RunResult:
    config: RunConfig
    best_policy: SkillPolicy
    progress: list[float]  # benchmark mean of the iteration's best policy, per iteration
    benchmark: BenchmarkResult
    libraries: list[list[TerrainProgram]]  # training libraries of the last iteration
    admission: AdmissionStats
    run_dir: Optional[str] = None
    proxy_size: int = 0
    transcripts: list[dict] = field(default_factory=list, repr=False)


def make_generator(cfg: RunConfig):
    if cfg.generator == "mock":
        return MockGenerator()
    return RemoteGenerator(RemoteConfig.from_env(url=cfg.remote_url, model=cfg.remote_model))


# --------------------------------------------------------------------------
# admission

def admit(gen, req: GeneratorRequest, rng: np.random.Generator, stats: AdmissionStats,
          parent: Optional[TerrainProgram] = None, goals_after: Optional[float] = None,
          fix: FixConfig = FixConfig()) -> tuple[TerrainProgram, dict]:
    """Sample until a program passes the check (fixes included), else fall back to the mock rules.

    Raises GeneratorExhausted only when every attempt failed at the generator itself.
    """
    record = {"kind": req.kind, "exchanges": [], "rejections": [], "status": None, "unchanged": False}
    failures = 0
    for _ in range(req.max_attempts):
        stats.attempts += 1
        try:
            g = gen.generate(req, rng)
        except GeneratorExhausted as exc:
            record["exchanges"] += exc.exchanges
            record["rejections"].append({"error": str(exc)})
            failures += 1
            continue
        record["exchanges"] += g.exchanges
        raw = check_program(g.program)
        if raw.passed:
            stats.raw_passed += 1
            record["status"] = "valid"
        elif check_program(g.program, fix=fix).passed:
            stats.fixed += 1
            record["status"] = "fixed"
        else:
            record["rejections"].append(raw.to_dict())
            continue
        if parent is not None and g.program == parent:
            stats.unchanged += 1
            record["unchanged"] = True
        record["program"] = g.text
        return g.program, record
    if failures == req.max_attempts:
        raise GeneratorExhausted(f"generator failed {failures} consecutive attempts")
    stats.fallbacks += 1
    if parent is not None:
        p = mock_mutate(parent, goals_after, rng)
    else:
        p = mock_generate(rng)
    record["status"] = "fallback"
    record["program"] = format_program(p)
    log.info("slot fell back to the mock generator")
    return p, record


def generate_initial(gen, incontext: str, count: int, rng: np.random.Generator, stats: AdmissionStats,
                     cfg: RunConfig, sequential: bool = False, random_mode: bool = False):
    """``count`` admitted programs; with ``sequential`` each request lists the programs so far."""
    programs, records = [], []
    for _ in range(count):
        req = GeneratorRequest("initial", incontext, temperature=cfg.temperature, max_attempts=cfg.max_attempts,
                               previous_programs=[format_program(p) for p in programs] if sequential else [],
                               random_mode=random_mode)
        p, rec = admit(gen, req, rng, stats)
        programs.append(p)
        records.append(rec)
    return programs, records


def partition(programs: Sequence[TerrainProgram], N: int, J: int, rng: np.random.Generator):
    order = rng.permutation(len(programs))
    return [[programs[k] for k in order[i * J:(i + 1) * J]] for i in range(N)]


def feedback_for(library: Sequence[TerrainProgram], stats: TrainStats, j: int) -> FeedbackBundle:
    hardest = instantiate(library[j], 10)
    docs = [p.doc for k, p in enumerate(library) if k != j and p.doc]
    return FeedbackBundle(terrain_stats(hardest), stats.before[j], stats.after[j], docs)


def evolve_env(gen, parent: TerrainProgram, feedback: Optional[FeedbackBundle], incontext: str,
               rng: np.random.Generator, stats: AdmissionStats, cfg: RunConfig,
               make_harder: bool = False) -> tuple[TerrainProgram, dict]:
    req = GeneratorRequest("evolve", incontext, parent_program=format_program(parent),
                           feedback=None if make_harder else feedback, temperature=cfg.temperature,
                           max_attempts=cfg.max_attempts, make_harder=make_harder)
    goals_after = None if make_harder else feedback.train_after.goals
    return admit(gen, req, rng, stats, parent=parent, goals_after=goals_after)


def resample_by_learning_progress(history: Sequence[tuple[TerrainProgram, float, float]], k: int,
                                  rng: np.random.Generator, eps: float = LP_FLOOR) -> list[TerrainProgram]:
    """Draw ``k`` terrains (with replacement) with probability proportional to max(eps, after - before)."""
    if not history:
        return []
    lp = np.array([max(eps, after - before) for _, before, after in history])
    idx = rng.choice(len(history), size=k, p=lp / lp.sum())
    return [history[i][0] for i in idx]


# --------------------------------------------------------------------------
# persistence helpers

def _save_agent(store: Optional[RunStore], t: int, i: int, library, ladders, stats: TrainStats, policy):
    if store is None:
        return
    base = f"iter_{t}/agent_{i}"
    for j, p in enumerate(library):
        store.write_text(f"{base}/library/{j:02d}_{p.name}.terrain", format_program(p))
    rec = {"iteration": t, "agent": i, "policy": policy.to_dict(), **stats.to_dict()}
    store.append_jsonl(f"{base}/train_stats.jsonl", rec)
    store.write_json(f"{base}/ladder.json", [s.to_dict() for s in ladders])


def _save_transcripts(store: Optional[RunStore], t: int, prefix: str, records: list[dict]):
    if store is None:
        return
    for k, rec in enumerate(records):
        store.write_json(f"iter_{t}/transcripts/{prefix}_{k:03d}.json", rec)


def _progress_csv(progress: Sequence[float]) -> str:
    return "iteration,benchmark_mean\n" + "".join(f"{t + 1},{v:.6f}\n" for t, v in enumerate(progress))


def _finish(store, cfg, policy, progress, admission, libraries, proxy_size, transcripts) -> RunResult:
    bench = evaluate_benchmark(policy)
    if store is not None:
        store.write_json("final/best_policy.json", policy.to_dict())
        store.write_text("final/benchmark.csv", bench.to_csv())
        store.write_text("final/benchmark_summary.json", bench.summary_json())
        store.write_text("final/progress.csv", _progress_csv(progress))
        store.write_json("final/admission.json", admission.to_dict())
    return RunResult(cfg, policy, list(progress), bench, libraries, admission,
                     str(store.root) if store else None, proxy_size, transcripts)


def _agent_rng(seed: int, agent: int, t: int) -> np.random.Generator:
    return np.random.default_rng([seed ^ agent, t])


# --------------------------------------------------------------------------
# drivers

def run_coevolution(cfg: RunConfig, store: Optional[RunStore] = None, generator=None,
                    reference_libraries: Optional[Sequence[Sequence[TerrainProgram]]] = None,
                    keep_transcripts: bool = False) -> RunResult:
    gen = generator or make_generator(cfg)
    incontext = load_incontext()
    rng = np.random.default_rng(cfg.seed)
    admission = AdmissionStats()
    train_cfg = replace(cfg.train, minibatch=cfg.J)
    if store is not None:
        store.write_json("config.json", {"config_version": 1, **cfg.to_dict()})
    if cfg.ablation in FIXED_SET:
        return _run_fixed_set(cfg, train_cfg, gen, incontext, rng, admission, store, reference_libraries,
                              keep_transcripts)

    random_mode = cfg.ablation == "random_baseline"
    programs, records = generate_initial(gen, incontext, cfg.N * cfg.J, rng, admission, cfg,
                                         random_mode=random_mode)
    all_records = list(records) if keep_transcripts else []
    _save_transcripts(store, 1, "initial", records)
    libraries = partition(programs, cfg.N, cfg.J, rng)
    policies = [SkillPolicy(cfg.initial_skill, np.full(5, train_cfg.init_spread), np.full(5, train_cfg.step_cap))
                for _ in range(cfg.N)]
    ladders = [[CurriculumState() for _ in lib] for lib in libraries]
    proxy: list[TerrainProgram] = []
    seen: set = set()
    history: list[tuple[TerrainProgram, float, float]] = []
    progress: list[float] = []
    best = 0

    for t in range(1, cfg.T + 1):
        stats: list[TrainStats] = []
        for i in range(cfg.N):
            try:
                policies[i], ladders[i], st = train_agent(policies[i], libraries[i], ladders[i],
                                                          _agent_rng(cfg.seed, i, t), train_cfg)
            except Exception:
                if store is not None:
                    store.mark_partial(t, f"training failed for agent {i}")
                raise
            stats.append(st)
            _save_agent(store, t, i, libraries[i], ladders[i], st, policies[i])
            history += [(p, b.goals, a.goals) for p, b, a in zip(libraries[i], st.before, st.after)]
        for lib in libraries:
            for p in lib:
                if p not in seen:
                    seen.add(p)
                    proxy.append(p)
        scores = evaluate_proxy_many(policies, proxy)
        best = min(range(cfg.N), key=lambda i: (-scores[i], i))
        progress.append(benchmark_mean(policies[best]))
        log.info("iteration %d: proxy %s best=%d benchmark %.3f", t,
                 " ".join(f"{s:.2f}" for s in scores), best, progress[-1])
        if store is not None:
            store.write_json(f"iter_{t}/proxy_scores.json",
                             {"proxy_size": len(proxy), "scores": scores, "best": best})
            store.write_json(f"iter_{t}/best_policy.json", policies[best].to_dict())
        if t == cfg.T:
            break

        selection = [soft_select(scores, rng) for _ in range(cfg.N)]
        if store is not None:
            store.write_json(f"iter_{t}/selection.json", {"best": best, "initialized_from": selection})
        next_policies = [policies[s].copy() for s in selection]
        records = []
        if random_mode:
            programs, records = generate_initial(gen, incontext, cfg.N * cfg.J, rng, admission, cfg,
                                                 random_mode=True)
            next_libraries = partition(programs, cfg.N, cfg.J, rng)
            next_ladders = [[CurriculumState() for _ in lib] for lib in next_libraries]
        else:
            parents = libraries[best]
            feedback = [feedback_for(parents, stats[best], j) for j in range(len(parents))]
            next_libraries = []
            for _ in range(cfg.N):
                lib = []
                for j, parent in enumerate(parents):
                    child, rec = evolve_env(gen, parent, feedback[j], incontext, rng, admission, cfg,
                                            make_harder=cfg.ablation == "no_feedback")
                    rec["parent"] = parent.name
                    lib.append(child)
                    records.append(rec)
                next_libraries.append(lib)
            if cfg.resampling_enabled:
                keep = cfg.J - cfg.J // 2
                next_libraries = [lib[:keep] + resample_by_learning_progress(history, cfg.J - keep, rng)
                                  for lib in next_libraries]
            start = [s.level for s in ladders[best]] if cfg.ladder_inherit else [1] * cfg.J
            next_ladders = [[CurriculumState(start[j] if j < len(start) else 1) for j in range(len(lib))]
                            for lib in next_libraries]
        _save_transcripts(store, t + 1, "evolve" if not random_mode else "random", records)
        if keep_transcripts:
            all_records += records
        policies, libraries, ladders = next_policies, next_libraries, next_ladders

    return _finish(store, cfg, policies[best], progress, admission, libraries, len(proxy), all_records)


def _run_fixed_set(cfg, train_cfg, gen, incontext, rng, admission, store, reference_libraries,
                   keep_transcripts) -> RunResult:
    records: list[dict] = []
    if cfg.ablation == "oracle":
        programs = list(build_benchmark().obstacles)
    elif cfg.ablation == "final_only":
        if reference_libraries is None:
            ref = run_coevolution(replace(cfg, ablation=None), None, gen)
            reference_libraries = ref.libraries
        programs = [p for lib in reference_libraries for p in lib]
    else:
        programs, records = generate_initial(gen, incontext, cfg.N * cfg.J, rng, admission, cfg,
                                             sequential=cfg.ablation == "diversity_only")
        _save_transcripts(store, 1, "initial", records)
    policy = SkillPolicy(cfg.initial_skill, np.full(5, train_cfg.init_spread), np.full(5, train_cfg.step_cap))
    ladders = [CurriculumState() for _ in programs]
    progress = []
    for t in range(1, cfg.T + 1):
        policy, ladders, st = train_agent(policy, programs, ladders, _agent_rng(cfg.seed, 0, t), train_cfg)
        _save_agent(store, t, 0, programs, ladders, st, policy)
        progress.append(benchmark_mean(policy))
        if store is not None:
            store.write_json(f"iter_{t}/best_policy.json", policy.to_dict())
        log.info("iteration %d (%s): benchmark %.3f", t, cfg.ablation, progress[-1])
    return _finish(store, cfg, policy, progress, admission, [list(programs)], len(programs),
                   records if keep_transcripts else [])


def open_store(cfg: RunConfig, root: str = "runs") -> RunStore:
    return RunStore(root, make_run_id(cfg.seed, cfg.to_dict()))
