"""Generation backends: a remote HTTP client and a scripted deterministic mock.

Both expose the same two capabilities:
  complete(prompt, params)            -> free-form continuation
  next_token_distribution(prefix)     -> normalized per-step TokenDistribution

Remote wire protocol (JSON over HTTP):
  POST /complete {prompt, temperature, top_p, max_tokens, stop} -> {text}
  POST /logits   {prefix, top_k}                                -> {entries: [{token_id, token, p}]}

Distributions reported as a truncated top-k list get a residual-mass entry
(token_id -1) so every TokenDistribution sums to 1; the residual is
bookkeeping only and is never selectable by argmax.
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .errors import (
    BackendRefusalError,
    DistributionUnsupportedError,
    MockScriptError,
    TransportError,
)

RESIDUAL_TOKEN_ID = -1
RESIDUAL_TOKEN_TEXT = "<residual>"

PROB_SUM_TOLERANCE = 1e-6

DEFAULT_MAX_ATTEMPTS = 3
DEFAULT_BACKOFF_START = 1.0
DEFAULT_MAX_IN_FLIGHT = 4
DEFAULT_LOGITS_TOP_K = 50


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 1.0
    top_p: float = 0.98
    max_tokens: int = 256
    stop_sequences: tuple[str, ...] = ()

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if not (0 < self.top_p <= 1):
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {self.max_tokens}")


# near-zero temperature approximates greedy on remote backends; the mock is
# argmax-deterministic regardless of temperature
GREEDY_PARAMS = SamplingParams(temperature=1e-4, top_p=1.0)


@dataclass
class TokenDistribution:
    step_index: int
    entries: list[tuple[int, str, float]]

    def validate(self) -> None:
        ids = [e[0] for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate token_ids in distribution")
        if any(e[2] < 0 for e in self.entries):
            raise ValueError("negative probability in distribution")
        total = sum(e[2] for e in self.entries)
        if abs(total - 1.0) > PROB_SUM_TOLERANCE:
            raise ValueError(f"distribution sums to {total}, expected 1 within {PROB_SUM_TOLERANCE}")

    def prob(self, token_id: int) -> float:
        for tid, _, p in self.entries:
            if tid == token_id:
                return p
        return 0.0

    def argmax(self) -> tuple[int, str]:
        """Highest-probability real token; ties broken by lowest token_id."""
        best = None
        for tid, text, p in self.entries:
            if tid == RESIDUAL_TOKEN_ID:
                continue
            if best is None or p > best[2] or (p == best[2] and tid < best[0]):
                best = (tid, text, p)
        if best is None:
            raise ValueError("distribution has no selectable tokens")
        return best[0], best[1]


@dataclass(frozen=True)
class BackendHandle:
    """Address plus role of one model endpoint: URL or "mock:<script path>"."""

    endpoint: str
    model: str = ""
    role: str = "base"

    def __post_init__(self):
        if self.role not in ("base", "aligned"):
            raise ValueError(f"role must be 'base' or 'aligned', got {self.role!r}")


def _finalize_entries(entries: list[tuple[int, str, float]]) -> list[tuple[int, str, float]]:
    """Clamp/renormalize a reported top-k list and add the residual entry."""
    total = sum(p for _, _, p in entries)
    if total > 1.0 + PROB_SUM_TOLERANCE:
        entries = [(tid, text, p / total) for tid, text, p in entries]
        total = 1.0
    residual = 1.0 - total
    if residual > PROB_SUM_TOLERANCE:
        entries = entries + [(RESIDUAL_TOKEN_ID, RESIDUAL_TOKEN_TEXT, residual)]
    return entries


def truncate_at_stop(text: str, stop_sequences: tuple[str, ...] | list[str]) -> str:
    """Cut text before the earliest stop sequence occurrence."""
    cut = len(text)
    for stop in stop_sequences:
        if stop:
            i = text.find(stop)
            if i != -1 and i < cut:
                cut = i
    return text[:cut]


class _RetryMixin:
    max_attempts: int = DEFAULT_MAX_ATTEMPTS
    backoff_start: float = DEFAULT_BACKOFF_START
    _sleep = staticmethod(time.sleep)

    def _with_retries(self, fn):
        delay = self.backoff_start
        last: TransportError | None = None
        for attempt in range(self.max_attempts):
            try:
                return fn()
            except TransportError as exc:
                last = exc
                if attempt + 1 < self.max_attempts:
                    self._sleep(delay)
                    delay *= 2
        raise last


class HttpBackend(_RetryMixin):
    """Client for the JSON wire protocol, with bounded retries and a cap on
    concurrent in-flight requests."""

    def __init__(
        self,
        url: str,
        model: str = "",
        role: str = "base",
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
        backoff_start: float = DEFAULT_BACKOFF_START,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
        logits_top_k: int = DEFAULT_LOGITS_TOP_K,
        timeout: float = 120.0,
        sleep=time.sleep,
    ):
        self.handle = BackendHandle(endpoint=url, model=model, role=role)
        self.url = url.rstrip("/")
        self.max_attempts = max_attempts
        self.backoff_start = backoff_start
        self.logits_top_k = logits_top_k
        self.timeout = timeout
        self._sleep = sleep
        self._session = requests.Session()
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def _post(self, route: str, payload: dict) -> dict:
        with self._slots:
            try:
                resp = self._session.post(self.url + route, json=payload, timeout=self.timeout)
            except requests.RequestException as exc:
                raise TransportError(f"POST {route}: {exc}") from exc
        if resp.status_code >= 500:
            raise TransportError(f"POST {route}: server error {resp.status_code}")
        if resp.status_code in (404, 501):
            raise DistributionUnsupportedError(f"POST {route}: not supported ({resp.status_code})")
        if resp.status_code >= 400:
            raise BackendRefusalError(f"POST {route}: rejected ({resp.status_code}): {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise TransportError(f"POST {route}: invalid JSON response") from exc

    def complete(self, prompt: str, params: SamplingParams) -> str:
        if not prompt:
            raise ValueError("prompt must be nonempty")
        payload = {
            "prompt": prompt,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
            "stop": list(params.stop_sequences),
        }
        data = self._with_retries(lambda: self._post("/complete", payload))
        if "text" not in data:
            raise TransportError("/complete response missing 'text'")
        # servers are expected to honor stop; enforce client-side as well
        return truncate_at_stop(str(data["text"]), params.stop_sequences)

    def supports_distributions(self) -> bool:
        return True

    def next_token_distribution(self, prefix: str, step_index: int = 0) -> TokenDistribution:
        if not prefix:
            raise ValueError("prefix must be nonempty")
        payload = {"prefix": prefix, "top_k": self.logits_top_k}
        data = self._with_retries(lambda: self._post("/logits", payload))
        raw = data.get("entries")
        if not isinstance(raw, list) or not raw:
            raise TransportError("/logits response missing 'entries'")
        entries = [(int(e["token_id"]), str(e["token"]), float(e["p"])) for e in raw]
        dist = TokenDistribution(step_index=step_index, entries=_finalize_entries(entries))
        dist.validate()
        return dist


class MockBackend(_RetryMixin):
    """Deterministic scripted backend for pipeline tests.

    Script is a JSON object (or file):
      completions: ordered rules [{pattern, replies: [str | {"error": "transport"|"refusal"}], cycle}]
      default_completion: optional string
      distributions: ordered rules [{pattern, dists: [{token: p, ...}]}, ...]
      default_distribution: optional {token: p}
      vocab: optional {token: id}; unlisted tokens get ids after the
             explicit ones, in sorted token order

    Rules match by regex search against the full prompt/prefix, first match
    wins. Reply/distribution lists advance a per-rule cursor on every call
    (sticking at the last entry unless cycle is true), so a fixed call order
    reproduces byte-identical outputs.
    """

    def __init__(self, script: dict | str | Path, role: str = "base", model: str = "mock"):
        if isinstance(script, (str, Path)):
            path = Path(script)
            if not path.exists():
                raise MockScriptError(f"mock script not found: {path}")
            script = json.loads(path.read_text(encoding="utf-8"))
            endpoint = f"mock:{path}"
        else:
            endpoint = "mock:<inline>"
        self.handle = BackendHandle(endpoint=endpoint, model=model, role=role)
        self._script = script
        self._completion_rules = [
            (re.compile(rule["pattern"], re.DOTALL), rule)
            for rule in script.get("completions", [])
        ]
        self._dist_rules = [
            (re.compile(rule["pattern"], re.DOTALL), rule)
            for rule in script.get("distributions", [])
        ]
        self._cursors: dict[int, int] = {}
        self._lock = threading.Lock()
        self._vocab = self._build_vocab(script)
        self.max_attempts = int(script.get("max_attempts", DEFAULT_MAX_ATTEMPTS))
        self._sleep = lambda _s: None  # retries never wall-clock sleep in tests

    @staticmethod
    def _build_vocab(script: dict) -> dict[str, int]:
        vocab = {str(k): int(v) for k, v in script.get("vocab", {}).items()}
        tokens: set[str] = set()
        for rule in script.get("distributions", []):
            for dist in rule.get("dists", []):
                tokens.update(dist)
        if script.get("default_distribution"):
            tokens.update(script["default_distribution"])
        next_id = max(vocab.values(), default=-1) + 1
        for tok in sorted(tokens - set(vocab)):
            vocab[tok] = next_id
            next_id += 1
        return vocab

    def _advance(self, rule_key: int, items: list, cycle: bool):
        with self._lock:
            i = self._cursors.get(rule_key, 0)
            self._cursors[rule_key] = i + 1
        if cycle:
            return items[i % len(items)]
        return items[min(i, len(items) - 1)]

    def _pick_reply(self, prompt: str):
        for rx, rule in self._completion_rules:
            if rx.search(prompt):
                return self._advance(id(rule), rule["replies"], bool(rule.get("cycle", False)))
        if "default_completion" in self._script:
            return self._script["default_completion"]
        raise MockScriptError(f"no completion rule matches prompt starting: {prompt[:80]!r}")

    def complete(self, prompt: str, params: SamplingParams) -> str:
        if not prompt:
            raise ValueError("prompt must be nonempty")

        def attempt() -> str:
            reply = self._pick_reply(prompt)
            if isinstance(reply, dict):
                kind = reply.get("error")
                if kind == "transport":
                    raise TransportError("scripted transport failure")
                raise BackendRefusalError(reply.get("message", "scripted refusal"))
            text = truncate_at_stop(str(reply), params.stop_sequences)
            # the mock owns its tokenization: whitespace-delimited chunks
            pieces = re.findall(r"\S+\s*", text)
            if len(pieces) > params.max_tokens:
                text = "".join(pieces[: params.max_tokens]).rstrip()
            return text

        return self._with_retries(attempt)

    def supports_distributions(self) -> bool:
        return bool(self._dist_rules) or bool(self._script.get("default_distribution"))

    def next_token_distribution(self, prefix: str, step_index: int = 0) -> TokenDistribution:
        if not prefix:
            raise ValueError("prefix must be nonempty")
        if not self.supports_distributions():
            raise DistributionUnsupportedError("mock script defines no distributions")
        dist_map = None
        for rx, rule in self._dist_rules:
            if rx.search(prefix):
                dist_map = self._advance(id(rule), rule["dists"], bool(rule.get("cycle", False)))
                break
        if dist_map is None:
            dist_map = self._script.get("default_distribution")
        if dist_map is None:
            raise MockScriptError(f"no distribution rule matches prefix ending: {prefix[-80:]!r}")
        entries = [(self._vocab[tok], tok, float(p)) for tok, p in sorted(dist_map.items())]
        dist = TokenDistribution(step_index=step_index, entries=_finalize_entries(entries))
        dist.validate()
        return dist


def open_backend(spec: str, role: str = "base") -> HttpBackend | MockBackend:
    """Resolve a backend spec string: "mock:<script path>" or an HTTP URL."""
    if spec.startswith("mock:"):
        return MockBackend(spec[len("mock:"):], role=role)
    if spec.startswith("http://") or spec.startswith("https://"):
        return HttpBackend(spec, role=role)
    raise ValueError(f"backend spec must be an http(s) URL or mock:<path>, got {spec!r}")
