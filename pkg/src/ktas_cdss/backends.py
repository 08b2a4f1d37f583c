"""Completion backends: scripted replay for tests and an OpenAI-compatible HTTP client."""

from __future__ import annotations

import abc
import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import httpx

from .core import AgentRole, CdssError

log = logging.getLogger(__name__)

DEFAULT_MODEL_ID = "llama-3-70b"
API_KEY_ENV = "KTAS_CDSS_API_KEY"


class BackendError(CdssError):
    """Transport failure, HTTP error status, timeout or malformed response."""


class FixtureMiss(BackendError):
    pass


@dataclass(frozen=True)
class CompletionRequest:
    system_prompt: str
    user_prompt: str
    temperature: float = 0.0
    max_tokens: int = 2048
    model_id: str = DEFAULT_MODEL_ID
    # routing metadata for scripted replay; never sent over the wire
    role: AgentRole | None = field(default=None, compare=False)
    case_id: str | None = field(default=None, compare=False)
    mode: str | None = field(default=None, compare=False)
    turn: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        if not self.system_prompt or not self.user_prompt:
            raise ValueError("prompts must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")

    def digest(self) -> str:
        return prompt_digest(self.system_prompt, self.user_prompt)


def prompt_digest(system_prompt: str, user_prompt: str) -> str:
    h = hashlib.sha256()
    h.update(system_prompt.encode("utf-8"))
    h.update(b"\x00")
    h.update(user_prompt.encode("utf-8"))
    return h.hexdigest()


class LlmBackend(abc.ABC):
    """Completion provider. Implementations must be safe to call from many threads."""

    @abc.abstractmethod
    def complete(self, request: CompletionRequest) -> str:
        ...

    def close(self) -> None:  # noqa: B027 - optional hook
        pass


# ---------------------------------------------------------------------------
# scripted replay

BY_ROLE_AND_CASE = "role_and_case"
BY_PROMPT_DIGEST = "prompt_digest"


class ScriptedBackend(LlmBackend):
    """Replays canned completions.

    In ``role_and_case`` mode entries are keyed ``"<role>/<case_id>"``. A
    ``"<mode>:"`` prefix (``multi:``/``single:``) scopes an entry to one run
    mode, a ``"#<turn>"`` suffix answers a specific tool-loop turn, and
    ``"<role>/*"`` matches any case. Lookup tries the most specific key
    first. In ``prompt_digest`` mode keys are :func:`prompt_digest` hex
    strings.
    """

    def __init__(self, entries: Mapping[str, str], key_mode: str = BY_ROLE_AND_CASE,
                 cases: tuple[str, ...] | None = None) -> None:
        if key_mode not in (BY_ROLE_AND_CASE, BY_PROMPT_DIGEST):
            raise ValueError(f"unknown key mode {key_mode!r}")
        self.entries = dict(entries)
        self.key_mode = key_mode
        self.cases = cases
        self._lock = threading.Lock()
        self.calls: list[CompletionRequest] = []

    @classmethod
    def from_path(cls, path: str | os.PathLike[str]) -> ScriptedBackend:
        """Load a fixture file, or ``fixture.json`` inside a directory.

        Entry values may be inline strings or ``{"file": "<relative path>"}``.
        """
        p = Path(path)
        if p.is_dir():
            p = p / "fixture.json"
        try:
            data = json.loads(p.read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise BackendError(f"cannot load scripted fixture {p}: {exc}") from exc
        entries = {}
        for key, value in data.get("entries", {}).items():
            if isinstance(value, Mapping):
                value = (p.parent / value["file"]).read_text("utf-8")
            entries[key] = value
        cases = tuple(data["cases"]) if "cases" in data else None
        return cls(entries, data.get("key_mode", BY_ROLE_AND_CASE), cases)

    def _lookup(self, request: CompletionRequest) -> str:
        if self.key_mode == BY_PROMPT_DIGEST:
            key = request.digest()
            if key in self.entries:
                return self.entries[key]
            raise FixtureMiss(f"no scripted completion for prompt digest {key[:12]}")
        if request.role is None or request.case_id is None:
            raise FixtureMiss("role_and_case lookup needs role and case_id on the request")
        role = request.role.value
        prefixes = ([f"{request.mode}:"] if request.mode else []) + [""]
        for case in (request.case_id, "*"):
            for prefix in prefixes:
                for suffix in (f"#{request.turn}", ""):
                    key = f"{prefix}{role}/{case}{suffix}"
                    if key in self.entries:
                        return self.entries[key]
        raise FixtureMiss(f"no scripted completion for {role}/{request.case_id}")

    def complete(self, request: CompletionRequest) -> str:
        with self._lock:
            self.calls.append(request)
        return self._lookup(request)


# ---------------------------------------------------------------------------
# HTTP


class HttpBackend(LlmBackend):
    """Client for ``POST <base_url>/chat/completions``.

    Transport errors, timeouts, 429 and 5xx responses are retried
    ``retries`` times with exponential backoff. Any other status >= 400 and
    any response without ``choices[0].message.content`` as a string raise
    :class:`BackendError` immediately.
    """

    def __init__(self, base_url: str, model_id: str = DEFAULT_MODEL_ID, *,
                 api_key: str | None = None, timeout_s: float = 120.0, max_in_flight: int = 4,
                 retries: int = 2, backoff_s: float = 0.5,
                 transport: httpx.BaseTransport | None = None) -> None:
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        self.base_url = base_url.rstrip("/")
        self.model_id = model_id
        self.retries = retries
        self.backoff_s = backoff_s
        self._slots = threading.BoundedSemaphore(max_in_flight)
        key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        self._client = httpx.Client(timeout=timeout_s, headers=headers, transport=transport)

    def payload(self, request: CompletionRequest) -> dict[str, Any]:
        return {
            "model": request.model_id or self.model_id,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }

    def complete(self, request: CompletionRequest) -> str:
        url = f"{self.base_url}/chat/completions"
        body = self.payload(request)
        attempt = 0
        while True:
            try:
                with self._slots:
                    resp = self._client.post(url, json=body)
            except httpx.TimeoutException as exc:
                err: BackendError = BackendError(f"timeout calling {url}: {exc}")
            except httpx.HTTPError as exc:
                err = BackendError(f"transport error calling {url}: {exc}")
            else:
                if resp.status_code < 400:
                    return _extract_content(resp)
                err = BackendError(f"HTTP {resp.status_code} from {url}: {resp.text[:200]}")
                if resp.status_code != 429 and resp.status_code < 500:
                    raise err
            if attempt >= self.retries:
                raise err
            delay = self.backoff_s * (2 ** attempt)
            log.warning("%s; retrying in %.2fs", err, delay)
            time.sleep(delay)
            attempt += 1

    def close(self) -> None:
        self._client.close()


def _extract_content(resp: httpx.Response) -> str:
    try:
        data = resp.json()
    except ValueError as exc:
        raise BackendError(f"response body is not JSON: {exc}") from exc
    try:
        content = data["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise BackendError("response lacks choices[0].message.content") from exc
    if not isinstance(content, str):
        raise BackendError("choices[0].message.content is not a string")
    return content
