"""Completion backends, transcript recording and answer parsing."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from collections.abc import Callable, Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .model import Operator, PrivilegeSet
from .prompts import TEMPLATES, render_prompt

logger = logging.getLogger(__name__)


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class GatewayError(RuntimeError):
    def __init__(self, template_id: str, message: str):
        super().__init__(f"[{template_id}] {message}")
        self.template_id = template_id


class ReplayMiss(GatewayError):
    pass


@dataclass(frozen=True)
class PromptRequest:
    template_id: str
    slots: Mapping[str, object]
    prompt: str
    candidates: tuple[str, ...] = ()

    @property
    def digest(self) -> str:
        return prompt_digest(self.prompt)


@dataclass(frozen=True)
class TranscriptEntry:
    template_id: str
    rendered_prompt: str
    prompt_digest: str
    response: str
    backend: str

    def to_fixture(self) -> dict:
        return {
            "digest": self.prompt_digest,
            "template_id": self.template_id,
            "prompt": self.rendered_prompt,
            "response": self.response,
        }


class ReplayBackend:
    name = "replay"

    def __init__(self, records: Mapping[str, str] | None = None):
        self.records: dict[str, str] = dict(records or {})

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> ReplayBackend:
        backend = cls()
        backend.load(path)
        return backend

    def load(self, path: str | os.PathLike) -> None:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                rec = json.loads(line)
                digest = rec.get("digest") or prompt_digest(rec["prompt"])
                self.records[digest] = rec["response"]

    def complete(self, request: PromptRequest) -> str:
        try:
            return self.records[request.digest]
        except KeyError:
            raise ReplayMiss(
                request.template_id, f"no fixture for prompt digest {request.digest[:12]}"
            ) from None


Rule = Callable[[PromptRequest], "str | None"]


class OracleBackend:
    """Answers from a rule table: template id -> callable(request) -> response.

    A rule returning None falls through to ``default``; with no default the
    call fails like a replay miss.
    """

    name = "oracle"

    def __init__(self, rules: Mapping[str, Rule], default: Rule | None = None):
        self.rules = dict(rules)
        self.default = default

    def complete(self, request: PromptRequest) -> str:
        rule = self.rules.get(request.template_id)
        answer = rule(request) if rule else None
        if answer is None and self.default is not None:
            answer = self.default(request)
        if answer is None:
            raise ReplayMiss(request.template_id, "oracle has no rule for this prompt")
        return answer


class LiveBackend:
    """Chat-completion endpoint over HTTP (OpenAI-compatible wire format)."""

    name = "live"

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        temperature: float = 0.0,
        max_tokens: int | None = None,
        retries: int = 3,
        timeout: float = 60.0,
        transport=None,
    ):
        import httpx

        self.model = model
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.retries = retries
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(
            base_url=base_url.rstrip("/"), headers=headers, timeout=timeout, transport=transport
        )

    def complete(self, request: PromptRequest) -> str:
        import httpx

        payload: dict = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": self.temperature,
        }
        if self.max_tokens:
            payload["max_tokens"] = self.max_tokens
        last: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = self._client.post("/chat/completions", json=payload)
                if resp.status_code >= 500 or resp.status_code == 429:
                    raise httpx.HTTPStatusError(
                        f"status {resp.status_code}", request=resp.request, response=resp
                    )
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
            except (httpx.HTTPError, KeyError, ValueError) as exc:
                last = exc
                logger.warning("live completion failed (attempt %d): %s", attempt + 1, exc)
                time.sleep(min(2**attempt, 8) * 0.1)
        raise GatewayError(request.template_id, f"transport failure after retries: {last}")


class Gateway:
    """Renders cataloged prompts, calls a backend and records every call."""

    def __init__(self, backend, parallelism: int = 4):
        self.backend = backend
        self.parallelism = max(1, parallelism)
        self.transcript: list[TranscriptEntry] = []
        self._lock = threading.Lock()

    @property
    def calls(self) -> int:
        return len(self.transcript)

    def _request(self, template_id: str, slots: Mapping[str, object], candidates) -> PromptRequest:
        prompt = render_prompt(template_id, slots)
        return PromptRequest(template_id, dict(slots), prompt, tuple(candidates or ()))

    def _record(self, request: PromptRequest, response: str) -> None:
        entry = TranscriptEntry(
            request.template_id, request.prompt, request.digest, response, self.backend.name
        )
        with self._lock:
            self.transcript.append(entry)

    def ask(
        self, template_id: str, slots: Mapping[str, object], candidates: Sequence[str] = ()
    ) -> str:
        request = self._request(template_id, slots, candidates)
        response = self.backend.complete(request)
        self._record(request, response)
        return response

    def complete(self, prompt: str, template_id: str = "raw") -> str:
        request = PromptRequest(template_id, {}, prompt)
        response = self.backend.complete(request)
        self._record(request, response)
        return response

    def ask_many(
        self, calls: Iterable[tuple[str, Mapping[str, object], Sequence[str]]]
    ) -> list[str]:
        """Issue independent prompts; the transcript keeps submission order."""
        requests = [self._request(t, s, c) for t, s, c in calls]
        workers = self.parallelism if self.backend.name == "live" else 1
        if workers > 1 and len(requests) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                responses = list(pool.map(self.backend.complete, requests))
        else:
            responses = [self.backend.complete(r) for r in requests]
        for request, response in zip(requests, responses):
            self._record(request, response)
        return responses

    def save_fixtures(self, path: str | os.PathLike, append: bool = False) -> int:
        """Write the transcript as replay fixtures, one JSON record per line."""
        seen: set[str] = set()
        lines = []
        for entry in self.transcript:
            if entry.prompt_digest in seen:
                continue
            seen.add(entry.prompt_digest)
            lines.append(json.dumps(entry.to_fixture(), ensure_ascii=False, sort_keys=True))
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "a" if append else "w", encoding="utf-8") as fh:
            fh.writelines(line + "\n" for line in lines)
        return len(lines)


# -- answer parsing -----------------------------------------------------------


def _norm(text: str) -> str:
    text = text.casefold().replace("_", " ")
    text = re.sub(r"[^\w\s]", " ", text)
    return re.sub(r"\s+", " ", text).strip()


_LEADIN = re.compile(r"^\s*(?:answer\s*:|\d+\s*[.)]|[-*>\"'`]+)\s*", re.IGNORECASE)


@dataclass(frozen=True)
class Choice:
    candidate: str | None
    explanation: str
    ambiguous: bool = False

    @property
    def matched(self) -> bool:
        return self.candidate is not None


def parse_choice(response: str, candidates: Sequence[str]) -> Choice:
    """Pick the candidate the response begins with, else the single contained one.

    Never guesses: a response naming no candidate (or several, without a
    prefix match) yields no match. The response is kept as the explanation.
    """
    if not candidates:
        raise ValueError("parse_choice needs at least one candidate")
    stripped = _LEADIN.sub("", response.strip(), count=1)
    head = _norm(stripped)
    normed = [(c, _norm(c)) for c in candidates]
    prefixed = [
        (c, n) for c, n in normed if n and (head == n or head.startswith(n + " "))
    ]
    if prefixed:
        best = max(prefixed, key=lambda cn: len(cn[1]))[0]
        return Choice(best, response.strip())
    # numbered answer ("2" or "2. ...") refers to the rendered list position
    m = re.match(r"^\s*(\d+)\s*(?:[.)]|$)", response)
    if m and 1 <= int(m.group(1)) <= len(candidates):
        return Choice(candidates[int(m.group(1)) - 1], response.strip())
    padded = f" {_norm(response)} "
    contained = [c for c, n in normed if n and f" {n} " in padded]
    if len(contained) == 1:
        return Choice(contained[0], response.strip())
    if len(contained) > 1:
        # several named without a clear lead: take the first mentioned, flag it
        first = min(contained, key=lambda c: padded.index(f" {_norm(c)} "))
        longest = max(contained, key=lambda c: len(_norm(c)))
        if all(_norm(c) in _norm(longest) for c in contained):
            return Choice(longest, response.strip())
        return Choice(first, response.strip() + " [ambiguous: several candidates named]", True)
    return Choice(None, response.strip())


def parse_subset(response: str, candidates: Sequence[str]) -> list[str]:
    """Every candidate whose text occurs in the response, in candidate order."""
    padded = f" {_norm(response)} "
    hits = [c for c in candidates if _norm(c) and f" {_norm(c)} " in padded]
    # drop candidates only matched as a substring of a longer matched one
    return [c for c in hits if not any(c != o and f" {_norm(c)} " in f" {_norm(o)} " for o in hits)]


def parse_yes_no(response: str) -> bool | None:
    head = _norm(response)[:40]
    m = re.match(r"^(yes|no)\b", head)
    if m:
        return m.group(1) == "yes"
    yes = re.search(r"\byes\b", head) is not None
    no = re.search(r"\bno\b", head) is not None
    if yes != no:
        return yes
    return None


def parse_operator_list(response: str) -> PrivilegeSet | None:
    """Operators named in the response, intersected with the canonical universe."""
    text = re.sub(r"(?i)\bwith\s+grant\s+option\b", " GRANT ", response)
    ops = set()
    for token in re.findall(r"[A-Za-z]+", text):
        up = token.upper()
        if up in Operator.__members__ and token.isupper():
            ops.add(Operator(up))
    if not ops or ops == {Operator.GRANT}:
        return None
    return PrivilegeSet(frozenset(ops))


_FENCE = re.compile(r"```[ \t]*(?:[A-Za-z0-9_+-]*)[ \t]*\n(.*?)```", re.DOTALL)


def extract_code_blocks(response: str) -> list[str]:
    """Fenced code blocks in a response; the whole response if there are none."""
    blocks = [b.strip() for b in _FENCE.findall(response)]
    return [b for b in blocks if b] or [response.strip()]


def template_ids() -> list[str]:
    return sorted(TEMPLATES)
