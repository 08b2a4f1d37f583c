"""RxNorm client, interaction and search sources, and the bounded tool-call loop.

Agents request tools with a line-oriented marker::

    TOOL_CALL <tool_name> <json-object-args>

Each call's result is appended to the prompt under ``=== TOOL RESULT ===``
and the backend is asked again, up to ``max_iterations`` rounds.
"""

from __future__ import annotations

import abc
import dataclasses
import hashlib
import json
import logging
import re
import threading
import time
import urllib.parse
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import httpx

from .backends import BackendError, CompletionRequest, LlmBackend
from .core import CdssError

log = logging.getLogger(__name__)

RXNORM_BASE_URL = "https://rxnav.nlm.nih.gov/REST"
TOOL_NAMES = ("rxnorm_lookup", "rxnorm_interactions", "web_search")
TOOL_RESULT_HEADER = "=== TOOL RESULT ==="
DEFAULT_MAX_ITERATIONS = 3

_TOOL_CALL_RE = re.compile(r"^\s*TOOL_CALL\s+(?P<name>\S+)\s*(?P<args>.*?)\s*$")


class NotFound(CdssError, LookupError):
    pass


# ---------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class RxNormConcept:
    rxcui: str
    name: str

    def __post_init__(self) -> None:
        if not self.rxcui or not self.rxcui.isdigit():
            raise ValueError(f"rxcui must be a non-empty digit string, got {self.rxcui!r}")


@dataclass(frozen=True)
class DrugInteraction:
    rxcui_a: str
    rxcui_b: str
    severity: str
    description: str

    def __post_init__(self) -> None:
        if self.rxcui_a == self.rxcui_b:
            raise ValueError("an interaction needs two distinct concepts")


@dataclass(frozen=True)
class SearchResult:
    title: str
    snippet: str
    url: str


@dataclass(frozen=True)
class ToolCallRecord:
    tool_name: str
    arguments: Mapping[str, str]
    result_digest: str
    outcome: str  # "ok" | "not_found" | "error"

    def to_json(self) -> dict[str, Any]:
        return {"tool_name": self.tool_name, "arguments": dict(self.arguments),
                "result_digest": self.result_digest, "outcome": self.outcome}

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> ToolCallRecord:
        return cls(data["tool_name"], dict(data["arguments"]), data["result_digest"],
                   data["outcome"])


OK, NOT_FOUND, ERROR = "ok", "not_found", "error"


# ---------------------------------------------------------------------------
# rate limiting


class TokenBucket:
    """Thread-safe token bucket; ``acquire`` blocks until a token is available."""

    def __init__(self, rate: float, capacity: float | None = None,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep) -> None:
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(1.0, rate)
        self._tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1:
                    self._tokens -= 1
                    return
                wait = (1 - self._tokens) / self.rate
            self._sleep(wait)


class HostRateLimiter:
    def __init__(self, rate: float = 10.0) -> None:
        self.rate = rate
        self._buckets: dict[str, TokenBucket] = {}
        self._lock = threading.Lock()

    def acquire(self, url: str) -> None:
        host = urllib.parse.urlsplit(url).netloc
        with self._lock:
            bucket = self._buckets.setdefault(host, TokenBucket(self.rate))
        bucket.acquire()


# ---------------------------------------------------------------------------
# recorded HTTP fixtures


def fixture_key(method: str, url: httpx.URL | str) -> str:
    u = httpx.URL(str(url))
    query = sorted(urllib.parse.parse_qsl(u.query.decode() if isinstance(u.query, bytes)
                                          else u.query, keep_blank_values=True))
    qs = urllib.parse.urlencode(query)
    return f"{method.upper()} {u.path}" + (f"?{qs}" if qs else "")


class RecordedTransport(httpx.BaseTransport):
    """Serves responses from a ``responses.json`` recording, matched on method, path and query.

    Unrecorded requests fail with a transport error so tests never fall
    through to the network.
    """

    def __init__(self, recording: str | Path | Mapping[str, Any]) -> None:
        if isinstance(recording, Mapping):
            data = recording
        else:
            p = Path(recording)
            if p.is_dir():
                p = p / "responses.json"
            data = json.loads(p.read_text("utf-8"))
        self.responses = {fixture_key(*k.split(" ", 1)): v for k, v in data.items()}

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        key = fixture_key(request.method, request.url)
        entry = self.responses.get(key)
        if entry is None:
            raise httpx.ConnectError(f"no recorded response for {key}", request=request)
        return httpx.Response(entry.get("status", 200), json=entry.get("body"), request=request)


# ---------------------------------------------------------------------------
# RxNorm


class RxNormClient:
    def __init__(self, base_url: str = RXNORM_BASE_URL, *, timeout_s: float = 30.0,
                 transport: httpx.BaseTransport | None = None,
                 limiter: HostRateLimiter | None = None) -> None:
        self.base_url = base_url.rstrip("/")
        self._client = httpx.Client(timeout=timeout_s, transport=transport)
        self._limiter = limiter or HostRateLimiter()

    def _get(self, path: str, params: Mapping[str, Any] | None = None) -> httpx.Response:
        url = f"{self.base_url}{path}"
        self._limiter.acquire(url)
        try:
            return self._client.get(url, params=params)
        except httpx.HTTPError as exc:
            raise BackendError(f"RxNorm request failed: {exc}") from exc

    def _json(self, resp: httpx.Response) -> Any:
        if resp.status_code >= 400:
            raise BackendError(f"RxNorm HTTP {resp.status_code} for {resp.request.url}")
        try:
            return resp.json()
        except ValueError as exc:
            raise BackendError(f"RxNorm returned non-JSON body: {exc}") from exc

    def find_rxcui(self, name: str) -> RxNormConcept:
        """Resolve a drug name with normalized search (``search=2``).

        The concept name comes from the concept's properties when available,
        otherwise the echoed query name.

        Raises:
            NotFound: no candidate concept.
            BackendError: transport or HTTP failure.
        """
        if not name or not name.strip():
            raise ValueError("drug name must be non-empty")
        data = self._json(self._get("/rxcui.json", {"name": name.strip(), "search": 2}))
        group = (data or {}).get("idGroup") or {}
        ids = group.get("rxnormId") or []
        if not ids:
            raise NotFound(f"no RxNorm concept for {name!r}")
        rxcui = str(ids[0])
        concept_name = group.get("name") or name
        resp = self._get(f"/rxcui/{rxcui}/properties.json")
        if resp.status_code < 400:
            try:
                props = (resp.json() or {}).get("properties") or {}
                concept_name = props.get("name") or concept_name
            except ValueError:
                pass
        return RxNormConcept(rxcui, concept_name)

    def close(self) -> None:
        self._client.close()


# ---------------------------------------------------------------------------
# interactions


class InteractionSource(abc.ABC):
    @abc.abstractmethod
    def pairwise(self, rxcuis: Sequence[str]) -> list[DrugInteraction]:
        ...


class LocalInteractionTable(InteractionSource):
    """Symmetric lookup over a JSON list of ``{rxcui_a, rxcui_b, severity, description}``."""

    def __init__(self, rows: Iterable[Mapping[str, str]]) -> None:
        self._table: dict[frozenset[str], Mapping[str, str]] = {}
        for row in rows:
            self._table[frozenset((str(row["rxcui_a"]), str(row["rxcui_b"])))] = row

    @classmethod
    def from_path(cls, path: str | Path) -> LocalInteractionTable:
        data = json.loads(Path(path).read_text("utf-8"))
        return cls(data["interactions"] if isinstance(data, Mapping) else data)

    def pairwise(self, rxcuis: Sequence[str]) -> list[DrugInteraction]:
        out = []
        for i, a in enumerate(rxcuis):
            for b in rxcuis[i + 1:]:
                row = self._table.get(frozenset((a, b)))
                if row is not None and a != b:
                    out.append(DrugInteraction(a, b, row.get("severity", ""),
                                               row.get("description", "")))
        return out


class RemoteInteractionSource(InteractionSource):
    """Client for an endpoint speaking the legacy RxNav ``interaction/list.json`` format."""

    def __init__(self, base_url: str, *, timeout_s: float = 30.0,
                 transport: httpx.BaseTransport | None = None,
                 limiter: HostRateLimiter | None = None) -> None:
        self.base_url = base_url.rstrip("/")
        self._client = httpx.Client(timeout=timeout_s, transport=transport)
        self._limiter = limiter or HostRateLimiter()

    def pairwise(self, rxcuis: Sequence[str]) -> list[DrugInteraction]:
        url = f"{self.base_url}/interaction/list.json"
        self._limiter.acquire(url)
        try:
            resp = self._client.get(url, params={"rxcuis": " ".join(rxcuis)})
        except httpx.HTTPError as exc:
            raise BackendError(f"interaction request failed: {exc}") from exc
        if resp.status_code >= 400:
            raise BackendError(f"interaction endpoint HTTP {resp.status_code}")
        try:
            data = resp.json() or {}
        except ValueError as exc:
            raise BackendError("interaction endpoint returned non-JSON body") from exc
        out = []
        for group in data.get("fullInteractionTypeGroup") or []:
            for itype in group.get("fullInteractionType") or []:
                for pair in itype.get("interactionPair") or []:
                    concepts = pair.get("interactionConcept") or []
                    if len(concepts) != 2:
                        continue
                    a, b = (str(c.get("minConceptItem", {}).get("rxcui", "")) for c in concepts)
                    if a and b and a != b:
                        out.append(DrugInteraction(a, b, pair.get("severity", ""),
                                                   pair.get("description", "")))
        return out


def get_interactions(rxcuis: Sequence[str], source: InteractionSource) -> list[DrugInteraction]:
    """Pairwise interactions among ``rxcuis``; duplicates never self-interact."""
    if not rxcuis:
        raise ValueError("rxcuis must be non-empty")
    for r in rxcuis:
        if not isinstance(r, str) or not r.isdigit():
            raise ValueError(f"invalid rxcui {r!r}")
    unique = list(dict.fromkeys(rxcuis))
    if len(unique) < 2:
        return []
    return [x for x in source.pairwise(unique) if x.rxcui_a != x.rxcui_b]


# ---------------------------------------------------------------------------
# search


class SearchProvider(abc.ABC):
    @abc.abstractmethod
    def search(self, query: str, max_results: int = 5) -> list[SearchResult]:
        ...


def query_slug(query: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", query.lower()).strip("-") or "empty"


class FixtureSearch(SearchProvider):
    """Offline search: ``<dir>/<query-slug>.json`` holds a list of results.

    ``default.json`` answers unknown queries when present; otherwise the
    result list is empty.
    """

    def __init__(self, directory: str | Path) -> None:
        self.directory = Path(directory)

    def search(self, query: str, max_results: int = 5) -> list[SearchResult]:
        for name in (f"{query_slug(query)}.json", "default.json"):
            p = self.directory / name
            if p.is_file():
                rows = json.loads(p.read_text("utf-8"))
                return [SearchResult(r["title"], r["snippet"], r["url"]) for r in rows][:max_results]
        return []


class DuckDuckGoSearch(SearchProvider):
    """Live search through the DuckDuckGo instant-answer API."""

    URL = "https://api.duckduckgo.com/"

    def __init__(self, *, timeout_s: float = 15.0, transport: httpx.BaseTransport | None = None,
                 limiter: HostRateLimiter | None = None) -> None:
        self._client = httpx.Client(timeout=timeout_s, transport=transport)
        self._limiter = limiter or HostRateLimiter()

    def search(self, query: str, max_results: int = 5) -> list[SearchResult]:
        self._limiter.acquire(self.URL)
        try:
            resp = self._client.get(self.URL, params={"q": query, "format": "json",
                                                      "no_html": 1})
            resp.raise_for_status()
            data = resp.json()
        except (httpx.HTTPError, ValueError) as exc:
            raise BackendError(f"search failed: {exc}") from exc
        out = []
        if data.get("AbstractText"):
            out.append(SearchResult(data.get("Heading", query), data["AbstractText"],
                                    data.get("AbstractURL", "")))
        for topic in data.get("RelatedTopics") or []:
            if "Text" in topic:
                out.append(SearchResult(topic["Text"].split(" - ")[0], topic["Text"],
                                        topic.get("FirstURL", "")))
        return out[:max_results]


# ---------------------------------------------------------------------------
# registry and loop


ToolFn = Callable[[Mapping[str, Any]], Any]


class ToolRegistry:
    """Named tools; each returns a JSON-serializable result or raises."""

    def __init__(self) -> None:
        self._tools: dict[str, tuple[ToolFn, str]] = {}

    def register(self, name: str, fn: ToolFn, usage: str = "") -> None:
        self._tools[name] = (fn, usage)

    def names(self) -> tuple[str, ...]:
        return tuple(self._tools)

    def __contains__(self, name: str) -> bool:
        return name in self._tools

    def help_text(self) -> str:
        lines = [
            "To use a tool, write a line of the form:",
            "TOOL_CALL <tool_name> <json arguments>",
            "Results are returned under a \"=== TOOL RESULT ===\" section.",
            "Available tools:",
        ]
        lines += [f"- {name} {usage}".rstrip() for name, (_, usage) in self._tools.items()]
        return "\n".join(lines)

    def call(self, name: str, args: Mapping[str, Any]) -> tuple[str, str]:
        """Run a tool and return ``(outcome, result_text)``; never raises."""
        entry = self._tools.get(name)
        if entry is None:
            return ERROR, json.dumps({"error": f"unknown tool {name!r}"})
        fn, _ = entry
        try:
            result = fn(args)
        except NotFound as exc:
            return NOT_FOUND, json.dumps({"not_found": str(exc)})
        except Exception as exc:  # tool failures are reported back to the agent
            return ERROR, json.dumps({"error": f"{type(exc).__name__}: {exc}"})
        return OK, json.dumps(result, sort_keys=True, default=_jsonable)


def _jsonable(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj):
        return dataclasses.asdict(obj)
    raise TypeError(f"not serializable: {type(obj).__name__}")


def build_registry(rxnorm: RxNormClient | None = None,
                   interactions: InteractionSource | None = None,
                   search: SearchProvider | None = None) -> ToolRegistry:
    reg = ToolRegistry()
    if rxnorm is not None:
        reg.register("rxnorm_lookup", lambda a: rxnorm.find_rxcui(str(a["name"])),
                     '{"name": "<drug name>"}: resolve a drug name to its RxNorm concept')

        def interactions_tool(a: Mapping[str, Any]) -> list[DrugInteraction]:
            if interactions is None:
                raise BackendError("no interaction source configured")
            ids = [str(x) for x in a.get("rxcuis") or []]
            ids += [rxnorm.find_rxcui(str(n)).rxcui for n in a.get("names") or []]
            return get_interactions(ids, interactions)

        reg.register("rxnorm_interactions", interactions_tool,
                     '{"rxcuis": ["<rxcui>", ...]} or {"names": ["<drug>", ...]}: '
                     "check pairwise drug interactions")
    if search is not None:
        reg.register("web_search",
                     lambda a: search.search(str(a["query"]), int(a.get("max_results", 5))),
                     '{"query": "<text>"}: search for clinical guidelines')
    return reg


def parse_tool_calls(text: str) -> list[tuple[str, str]]:
    """``(tool_name, raw_args)`` for each ``TOOL_CALL`` line, in order."""
    out = []
    for line in text.splitlines():
        m = _TOOL_CALL_RE.match(line)
        if m:
            out.append((m.group("name"), m.group("args")))
    return out


def strip_tool_calls(text: str) -> str:
    kept = [ln for ln in text.splitlines() if not _TOOL_CALL_RE.match(ln)]
    return "\n".join(kept).strip("\n")


def _stringify_args(args: Mapping[str, Any]) -> dict[str, str]:
    return {str(k): v if isinstance(v, str) else json.dumps(v, sort_keys=True)
            for k, v in args.items()}


def tool_loop(request: CompletionRequest, backend: LlmBackend, registry: ToolRegistry,
              max_iterations: int = DEFAULT_MAX_ITERATIONS, *,
              enabled: bool = True) -> tuple[str, list[ToolCallRecord]]:
    """Run one stage's completion, executing tool calls between turns.

    Makes at most ``max_iterations + 1`` backend calls. With ``enabled``
    false the first completion is returned untouched and no tool runs.
    """
    if max_iterations < 1:
        raise ValueError("max_iterations must be >= 1")
    text = backend.complete(request)
    if not enabled:
        return text, []

    calls: list[ToolCallRecord] = []
    prompt = request.user_prompt
    for iteration in range(1, max_iterations + 1):
        pending = parse_tool_calls(text)
        if not pending:
            break
        results = []
        for name, raw_args in pending:
            try:
                args = json.loads(raw_args) if raw_args else {}
                if not isinstance(args, dict):
                    raise ValueError("arguments must be a JSON object")
            except ValueError as exc:
                outcome, result = ERROR, json.dumps({"error": f"malformed arguments: {exc}"})
                arguments = {"_raw": raw_args}
            else:
                outcome, result = registry.call(name, args)
                arguments = _stringify_args(args)
            calls.append(ToolCallRecord(name, arguments,
                                        hashlib.sha256(result.encode()).hexdigest(), outcome))
            results.append(f"TOOL_CALL {name} {raw_args}".rstrip() + f"\n{outcome}: {result}")
        prompt = f"{prompt}\n\n{TOOL_RESULT_HEADER}\n" + "\n".join(results) + "\n"
        request = dataclasses.replace(request, user_prompt=prompt, turn=iteration)
        text = backend.complete(request)
    return strip_tool_calls(text), calls
