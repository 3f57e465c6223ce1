"""``terraverse`` command line: run, render, bench, check, fix, generate, replay.

Exit codes: 0 ok, 1 check failed, 2 config or input error, 3 generator exhausted, 4 training failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .bench import evaluate_benchmark
from .compiler import compile_program
from .curriculum import level_to_difficulty
from .dsl import DslError, TerrainProgram, format_program, parse_program
from .generation.coevolution import (ABLATIONS, AdmissionStats, RunConfig, admit, load_incontext,
                                     make_generator, open_store, run_coevolution)
from .generation.prompts import GeneratorRequest
from .generation.remote import AuthError, GeneratorExhausted
from .instances import LEVELS
from .render import render_ascii, render_pgm, render_svg, svg_line_chart
from .sim import rollout
from .store import dump_json
from .trainer import SkillPolicy
from .validator import DEFAULT_D_SAMPLES, auto_fix, check, check_program

log = logging.getLogger("terraverse")

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_GENERATOR, EXIT_TRAINING = 0, 1, 2, 3, 4
CONFIG_VERSION = 1


class InputError(Exception):
    """Bad config, missing artifact or unparseable terrain; maps to exit code 2."""


# --------------------------------------------------------------------------
# loading

def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.is_file():
        raise InputError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(p.read_text("utf-8")) if p.suffix == ".toml" else json.loads(p.read_text("utf-8"))
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot parse {path}: {exc}") from exc
    version = raw.pop("config_version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise InputError(f"unsupported config_version {version} (expected {CONFIG_VERSION})")
    try:
        return RunConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid config {path}: {exc}") from exc


def load_terrain(path: str) -> TerrainProgram:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"terrain file not found: {path}")
    try:
        return parse_program(p.read_text("utf-8"))
    except DslError as exc:
        raise InputError(f"{path}: {exc}") from exc


def load_policy(target: str) -> SkillPolicy:
    """A policy JSON file, or a run directory (its final best policy)."""
    p = Path(target)
    if p.is_dir():
        p = p / "final" / "best_policy.json"
    if not p.is_file():
        raise InputError(f"no policy at {p}")
    try:
        return SkillPolicy.from_dict(json.loads(p.read_text("utf-8")))
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"bad policy file {p}: {exc}") from exc


def _iteration_dirs(run: Path) -> list[Path]:
    its = [d for d in run.glob("iter_*") if d.is_dir() and d.name[5:].isdigit()]
    return sorted(its, key=lambda d: int(d.name[5:]))


# --------------------------------------------------------------------------
# commands

def cmd_run(args) -> int:
    cfg = load_config(args.config)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    for key in ("generator", "ablation", "T", "N", "J"):
        if getattr(args, key) is not None:
            over[key] = getattr(args, key)
    try:
        cfg = replace(cfg, **over)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    store = open_store(cfg, root=args.out or "runs")
    log.info("run %s -> %s", store.run_id, store.root)
    try:
        result = run_coevolution(cfg, store)
    except AuthError as exc:
        print(f"error: generator rejected credentials: {exc}", file=sys.stderr)
        return EXIT_GENERATOR
    except GeneratorExhausted as exc:
        print(f"error: generator exhausted: {exc}", file=sys.stderr)
        return EXIT_GENERATOR
    except Exception as exc:
        log.exception("training failed")
        print(f"error: training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    xs = list(range(1, len(result.progress) + 1))
    store.write_text("final/progress.svg", svg_line_chart(xs, result.progress, "benchmark mean per iteration",
                                                          "goals reached"))
    print(f"run_dir {store.root}")
    print(f"benchmark_mean {result.benchmark.mean:.4f}")
    return EXIT_OK


def cmd_render(args) -> int:
    prog = load_terrain(args.terrain)
    t = compile_program(prog, args.difficulty)
    if args.format == "ascii":
        text = render_ascii(t)
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
        return EXIT_OK
    out = Path(args.out or f"{Path(args.terrain).stem}_d{args.difficulty:g}.{args.format}")
    if args.format == "pgm":
        out.write_bytes(render_pgm(t))
    else:
        out.write_text(render_svg(t), encoding="utf-8")
    print(out)
    return EXIT_OK


def cmd_bench(args) -> int:
    target = Path(args.target)
    policy = load_policy(args.target)
    out = Path(args.out) if args.out else (target / "final" if target.is_dir() else target.parent)
    out.mkdir(parents=True, exist_ok=True)
    res = evaluate_benchmark(policy)
    (out / "benchmark.csv").write_text(res.to_csv(), encoding="utf-8")
    (out / "benchmark_summary.json").write_text(res.summary_json() + "\n", encoding="utf-8")
    if target.is_dir() and args.sweep:
        rows = ["iteration,benchmark_mean"]
        xs, ys = [], []
        for d in _iteration_dirs(target):
            f = d / "best_policy.json"
            if f.is_file():
                m = evaluate_benchmark(load_policy(str(f))).mean
                xs.append(int(d.name[5:]))
                ys.append(m)
                rows.append(f"{xs[-1]},{m:.6f}")
        (out / "benchmark_curve.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
        if xs:
            (out / "benchmark_curve.svg").write_text(
                svg_line_chart(xs, ys, "benchmark mean per iteration", "goals reached"), encoding="utf-8")
    print(f"benchmark_mean {res.mean:.4f}")
    print(out / "benchmark.csv")
    return EXIT_OK


def cmd_check(args) -> int:
    prog = load_terrain(args.terrain)
    rep = check_program(prog)
    print(rep.to_json())
    return EXIT_OK if rep.passed else EXIT_CHECK


def _grid_patch(before, after) -> dict:
    changed = np.argwhere(before.heights != after.heights)
    return {
        "cells": [[int(i), int(j), float(before.heights[i, j]), float(after.heights[i, j])] for i, j in changed],
        "goals_before": [list(g) for g in before.goals],
        "goals_after": [list(g) for g in after.goals],
    }


def cmd_fix(args) -> int:
    """Fixes act on compiled grids, so the program is kept as written and each
    sampled difficulty gets a grid patch in a sidecar JSON."""
    src = Path(args.terrain)
    prog = load_terrain(args.terrain)
    out_dir = Path(args.out) if args.out else src.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    patches, passed = [], True
    for d in DEFAULT_D_SAMPLES:
        try:
            t = compile_program(prog, d)
        except Exception as exc:
            raise InputError(f"{args.terrain} does not compile at d={d:g}: {exc}") from exc
        fixed, flog = auto_fix(t)
        rep = check(fixed)
        passed &= rep.passed
        patches.append({"difficulty": d, "fixes": flog.applied, "check": rep.to_dict(), **_grid_patch(t, fixed)})
    stem = src.name[:-len(".terrain")] if src.name.endswith(".terrain") else src.stem
    note = f"grid-level fixes recorded in {stem}.fixed.json; apply after compile"
    annotated = replace(prog, doc=f"{prog.doc} [{note}]" if prog.doc else f"[{note}]")
    (out_dir / f"{stem}.fixed.terrain").write_text(format_program(annotated), encoding="utf-8")
    (out_dir / f"{stem}.fixed.json").write_text(
        dump_json({"source": str(src), "passed": passed, "patches": patches}), encoding="utf-8")
    print(json.dumps({"passed": passed, "fixed_terrain": str(out_dir / f"{stem}.fixed.terrain"),
                      "applied": sum(len(p["fixes"]) for p in patches)}))
    return EXIT_OK if passed else EXIT_CHECK


def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    over = {"generator": args.generator} if args.generator else {}
    cfg = replace(cfg, **over)
    rng = np.random.default_rng(cfg.seed if args.seed is None else args.seed)
    gen = make_generator(cfg)
    stats = AdmissionStats()
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    incontext = load_incontext()
    try:
        for k in range(args.count):
            req = GeneratorRequest("initial", incontext, temperature=cfg.temperature,
                                   max_attempts=cfg.max_attempts, random_mode=args.random)
            p, _ = admit(gen, req, rng, stats)
            text = format_program(p)
            if out:
                (out / f"{k:03d}_{p.name}.terrain").write_text(text, encoding="utf-8")
            else:
                sys.stdout.write(text + "\n")
    except (GeneratorExhausted, AuthError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GENERATOR
    print(json.dumps(stats.to_dict(), sort_keys=True), file=sys.stderr)
    return EXIT_OK


def cmd_replay(args) -> int:
    policy = load_policy(args.policy)
    files = [Path(f) for f in args.terrains]
    if not files:
        run = Path(args.policy)
        its = _iteration_dirs(run) if run.is_dir() else []
        if not its:
            raise InputError("no terrains given and no run libraries to replay")
        files = sorted(its[-1].glob("agent_*/library/*.terrain"))
    levels = args.level or list(LEVELS)
    for f in files:
        prog = load_terrain(str(f))
        for k in levels:
            t, _ = auto_fix(compile_program(prog, level_to_difficulty(k)))
            r = rollout(t, policy.mean, with_path=False)
            print(json.dumps({"terrain": str(f), "level": k, **r.to_dict()}, sort_keys=True))
    return EXIT_OK


# --------------------------------------------------------------------------

def _global_flags(parser: argparse.ArgumentParser, suppress: bool):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="TOML or JSON run config")
    parser.add_argument("--seed", type=int, default=default)
    parser.add_argument("--out", default=default, help="output path (run root, directory or file)")
    parser.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="terraverse", description=__doc__.splitlines()[0])
    _global_flags(ap, suppress=False)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        p.set_defaults(func=fn)
        return p

    p = add("run", cmd_run, "run the co-evolution loop")
    p.add_argument("--generator", choices=("mock", "remote"))
    p.add_argument("--ablation", choices=ABLATIONS)
    p.add_argument("--iterations", dest="T", type=int)
    p.add_argument("--agents", dest="N", type=int)
    p.add_argument("--library-size", dest="J", type=int)

    p = add("render", cmd_render, "render a terrain program")
    p.add_argument("terrain")
    p.add_argument("--difficulty", type=float, default=1.0)
    p.add_argument("--format", choices=("pgm", "svg", "ascii"), default="ascii")

    p = add("bench", cmd_bench, "evaluate a policy or run on the benchmark")
    p.add_argument("target", help="policy JSON or run directory")
    p.add_argument("--sweep", action="store_true", help="also score every iteration's best policy")

    p = add("check", cmd_check, "validate a terrain program")
    p.add_argument("terrain")

    p = add("fix", cmd_fix, "auto-fix a terrain program's compiled grids")
    p.add_argument("terrain")

    p = add("generate", cmd_generate, "sample terrain programs from a generator")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--generator", choices=("mock", "remote"))
    p.add_argument("--random", action="store_true", help="random-obstacle mode (baseline generator)")

    p = add("replay", cmd_replay, "re-evaluate a stored policy on terrains")
    p.add_argument("policy", help="policy JSON or run directory")
    p.add_argument("terrains", nargs="*")
    p.add_argument("--level", type=int, action="append", choices=list(LEVELS))
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    if args.verbose:
        logging.getLogger("numba").setLevel(logging.WARNING)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
