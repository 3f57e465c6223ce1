"""Chat-completion client that turns model replies into terrain programs."""

from __future__ import annotations

import logging
import os
import re
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import requests

from ..dsl import DslError, TerrainProgram, parse_program
from .prompts import GeneratorRequest, build_prompt

log = logging.getLogger(__name__)

API_KEY_ENV = "TERRAVERSE_API_KEY"
ENDPOINT_ENV = "TERRAVERSE_ENDPOINT"

_FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)


class GeneratorExhausted(RuntimeError):
    """No usable program after the allowed number of attempts."""

    def __init__(self, message: str, exchanges: Optional[list] = None):
        super().__init__(message)
        self.exchanges = exchanges or []


class AuthError(RuntimeError):
    """The endpoint rejected the credentials; never retried."""


def extract_code_block(text: str) -> Optional[str]:
    m = _FENCE_RE.search(text)
    return m.group(1) if m else None


@dataclass
class Generation:
    """One generated program plus the full exchange that produced it."""

    program: TerrainProgram
    text: str
    exchanges: list[dict] = field(default_factory=list)  # [{"messages": [...], "response": str}, ...]
    attempts: int = 1


@dataclass
class RemoteConfig:
    url: str = ""
    model: str = "gpt-4o"
    api_key: Optional[str] = None
    timeout: float = 60.0
    max_retries: int = 5
    backoff_base: float = 1.0

    @classmethod
    def from_env(cls, url: str = "", model: str = "gpt-4o", **kw) -> "RemoteConfig":
        return cls(url=os.environ.get(ENDPOINT_ENV, url), model=model, api_key=os.environ.get(API_KEY_ENV), **kw)


class RemoteGenerator:
    name = "remote"

    def __init__(self, cfg: RemoteConfig, session: Optional[requests.Session] = None,
                 sleep: Callable[[float], None] = time.sleep):
        if not cfg.url:
            raise ValueError(f"no endpoint configured (set {ENDPOINT_ENV} or the config url)")
        self.cfg = cfg
        self.session = session or requests.Session()
        self.sleep = sleep
        self.retries = 0  # transport-level retries observed, for diagnostics

    def chat(self, messages: list[dict], temperature: float) -> str:
        """POST one completion request, retrying transport errors and 5xx with exponential backoff."""
        headers = {"Content-Type": "application/json"}
        if self.cfg.api_key:
            headers["Authorization"] = f"Bearer {self.cfg.api_key}"
        body = {"model": self.cfg.model, "messages": messages, "temperature": temperature}
        last = None
        for attempt in range(self.cfg.max_retries + 1):
            if attempt:
                self.retries += 1
                delay = self.cfg.backoff_base * 2 ** (attempt - 1)
                log.warning("retry %d after %s (sleeping %.2fs)", attempt, last, delay)
                self.sleep(delay)
            try:
                r = self.session.post(self.cfg.url, json=body, headers=headers, timeout=self.cfg.timeout)
            except (requests.ConnectionError, requests.Timeout) as exc:
                last = exc
                continue
            if r.status_code in (401, 403):
                raise AuthError(f"endpoint returned {r.status_code}")
            if r.status_code >= 500:
                last = f"HTTP {r.status_code}"
                continue
            if r.status_code != 200:
                raise GeneratorExhausted(f"endpoint returned {r.status_code}: {r.text[:200]}")
            try:
                return r.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise GeneratorExhausted(f"malformed response: {exc}") from exc
        raise GeneratorExhausted(f"endpoint unavailable after {self.cfg.max_retries} retries: {last}")

    def generate(self, req: GeneratorRequest, rng=None) -> Generation:
        """Sample until a reply parses, feeding parse errors back; at most ``req.max_attempts`` replies."""
        messages = build_prompt(req)
        exchanges = []
        for attempt in range(1, req.max_attempts + 1):
            reply = self.chat(messages, req.temperature)
            exchanges.append({"messages": [dict(m) for m in messages], "response": reply})
            code = extract_code_block(reply)
            try:
                if code is None:
                    raise DslError("reply contains no fenced code block")
                program = parse_program(code)
            except DslError as exc:
                log.info("attempt %d did not parse: %s", attempt, exc)
                messages = messages + [
                    {"role": "assistant", "content": reply},
                    {"role": "user", "content": f"That program failed to parse: {exc}\n"
                                                "Reply with a corrected program in one fenced code block."},
                ]
                continue
            return Generation(program, code, exchanges, attempt)
        raise GeneratorExhausted(f"no parseable program after {req.max_attempts} attempts", exchanges)
