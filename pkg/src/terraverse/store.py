"""On-disk layout of a run: ``runs/<run_id>/iter_<t>/agent_<i>/...`` plus ``final/``."""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path
from typing import Any


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha1(blob).hexdigest()[:8]


def make_run_id(seed: int, cfg: dict, now: float = None) -> str:
    stamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime(time.time() if now is None else now))
    return f"seed{seed}-{stamp}-{config_hash(cfg)}"


def dump_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


class RunStore:
    def __init__(self, root: Path | str, run_id: str):
        base = Path(root) / run_id
        k = 1
        while base.exists():  # same second, same config: keep runs apart
            base = Path(root) / f"{run_id}-{k}"
            k += 1
        self.root = base
        self.run_id = base.name
        self.root.mkdir(parents=True)

    def path(self, *parts: str) -> Path:
        p = self.root.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def write_text(self, rel: str, text: str) -> Path:
        p = self.path(*rel.split("/"))
        p.write_text(text, encoding="utf-8")
        return p

    def write_json(self, rel: str, obj: Any) -> Path:
        return self.write_text(rel, dump_json(obj))

    def append_jsonl(self, rel: str, record: dict):
        p = self.path(*rel.split("/"))
        with p.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    def mark_partial(self, t: int, reason: str):
        self.write_json(f"iter_{t}/PARTIAL.json", {"reason": reason})
