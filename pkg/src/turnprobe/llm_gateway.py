"""Provider-agnostic chat-completion access with disk caching and mocks.

Requests default to temperature 0 and a single completion, the maximally
deterministic setting. Results are cached content-addressed on disk
(``cache/<hh>/<hash>.json``) so runs are resumable and auditable; cache
writes are atomic and never contain credentials (only the *name* of the
API-key environment variable is ever configured).

Besides the ``http-chat`` provider (de-facto chat-completions JSON shape,
one user message carrying the whole rendered prompt), three mock providers
enable offline end-to-end runs. Mocks read the turn under test straight out
of the prompt's INPUT section, exactly like a real model would, and resolve
it against a probing dataset: ``mock-identity`` echoes the input,
``mock-gold`` answers with the gold clean utterance, and ``mock-scripted``
applies a per-turn transformation script.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import requests

from .align import tokenize_hypothesis
from .conllu import Dialogue
from .probe_dataset import ProbeDataset, turn_tokens
from .prompt_kit import extract_input_block
from .speech_filter import detokenize, join_forms

_sleep = time.sleep  # patchable in tests

BACKOFF_BASE_SECONDS = 1.0
TRANSIENT_STATUS = {429}


class GatewayError(Exception):
    pass


class AuthMissingError(GatewayError):
    pass


class ProviderRequestError(GatewayError):
    """Non-retryable provider failure (4xx other than 429, bad payload)."""


class ProviderTransientError(GatewayError):
    """Retryable failure that survived every retry."""


class ScriptError(GatewayError):
    pass


class UnresolvedTurnError(GatewayError):
    """A mock could not map the prompt's INPUT text to a dataset turn."""


@dataclass(frozen=True, slots=True)
class GenerationRequest:
    model: str
    prompt: str
    temperature: float = 0.0
    n_completions: int = 1
    max_tokens: int | None = None


@dataclass(frozen=True, slots=True)
class GenerationResult:
    text: str
    provider: str
    cached: bool
    latency: float
    request_hash: str


@dataclass(frozen=True, slots=True)
class ProviderConfig:
    kind: str = "mock-identity"
    model: str = "mock"
    base_url: str | None = None
    auth_env: str | None = None
    timeout: float = 30.0
    max_retries: int = 5
    max_parallel: int = 4


def request_hash(provider_kind: str, request: GenerationRequest) -> str:
    payload = json.dumps({
        "provider": provider_kind,
        "model": request.model,
        "prompt": request.prompt,
        "temperature": request.temperature,
        "n": request.n_completions,
        "max_tokens": request.max_tokens,
    }, ensure_ascii=False, sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class MockOracle:
    """Turn lookup and gold rendering for mock providers.

    String-mode prompts are resolved by token sequence: the INPUT text is
    tokenized and matched against each turn's token forms. When the source
    dialogues are available their rendered text feeds the index (spacing
    metadata included); otherwise forms are joined heuristically.
    """

    def __init__(self, dataset: ProbeDataset, dialogues: list[Dialogue] | None = None):
        self.dataset = dataset
        self._index: dict[tuple[str, ...], tuple[str, int]] = {}
        rendered: dict[tuple[str, int], str] = {}
        if dialogues is not None:
            for dialogue in dialogues:
                for turn in dialogue.turns:
                    rendered[(dialogue.id, turn.turn_index)] = detokenize(list(turn.tokens))
        for d_id, idx, turn in dataset.turns():
            text = rendered.get((d_id, idx)) or join_forms(
                [t.token for t in turn_tokens(turn)])
            key = self._key(text)
            self._index.setdefault(key, (d_id, idx))

    @staticmethod
    def _key(text: str) -> tuple[str, ...]:
        return tuple(t.casefold() for t in tokenize_hypothesis(text))

    def resolve(self, input_text: str) -> tuple[str, int]:
        key = self._key(input_text)
        if key not in self._index:
            raise UnresolvedTurnError(
                f"no dataset turn matches the prompt input {input_text!r}")
        return self._index[key]

    def has_dialogue(self, dialogue_id: str) -> bool:
        return dialogue_id in self.dataset.dialogues

    def turn_count(self, dialogue_id: str) -> int:
        return len(self.dataset.dialogues[dialogue_id])

    def gold_text(self, dialogue_id: str, turn_index: int) -> str:
        turn = self.dataset.turn(dialogue_id, turn_index)
        return join_forms([t.token for t in turn_tokens(turn) if t.status])

    def drop_flag_text(self, dialogue_id: str, turn_index: int, flag: str) -> str:
        turn = self.dataset.turn(dialogue_id, turn_index)
        keep = [t.token for t in turn_tokens(turn)
                if t.speech_type is None or not getattr(t.speech_type, flag)]
        return join_forms(keep)


def _parse_input_payload(prompt: str) -> tuple[str, dict | None]:
    """INPUT text plus the decoded JSON batch when the prompt is JSON-mode."""
    text = extract_input_block(prompt)
    if text.lstrip().startswith("{"):
        try:
            payload = json.loads(text)
        except json.JSONDecodeError:
            return text, None
        if isinstance(payload, dict) and len(payload) == 1:
            (d_id, turns), = payload.items()
            if isinstance(turns, list) and all(isinstance(t, str) for t in turns):
                return text, {"dialogue_id": d_id, "turns": turns}
    return text, None


def _wrap_json(dialogue_id: str, turns: list[str]) -> str:
    return json.dumps({dialogue_id: turns}, ensure_ascii=False, indent=4)


class Provider:
    kind = "abstract"

    def complete(self, request: GenerationRequest) -> str:
        raise NotImplementedError


class IdentityProvider(Provider):
    kind = "mock-identity"

    def complete(self, request: GenerationRequest) -> str:
        return extract_input_block(request.prompt)


class GoldProvider(Provider):
    kind = "mock-gold"

    def __init__(self, oracle: MockOracle):
        self.oracle = oracle

    def complete(self, request: GenerationRequest) -> str:
        text, batch = _parse_input_payload(request.prompt)
        if batch is not None:
            d_id = batch["dialogue_id"]
            if not self.oracle.has_dialogue(d_id):
                raise UnresolvedTurnError(f"dialogue {d_id!r} not in the dataset")
            turns = [self.oracle.gold_text(d_id, i) for i in range(len(batch["turns"]))]
            return _wrap_json(d_id, turns)
        d_id, idx = self.oracle.resolve(text)
        return self.oracle.gold_text(d_id, idx)


_NOISE_RE = re.compile(r"^gold-plus-noise\((\d+)\)$")
SCRIPT_OPS = ("drop-discourse-flagged", "drop-all-flagged", "echo", "empty")


class ScriptedProvider(Provider):
    """Applies per-turn transformations keyed by ``<dialogue_id>-<turn_index>``
    (with an optional ``*`` default). Operations: drop-discourse-flagged,
    drop-all-flagged, echo, empty, gold-plus-noise(k)."""

    kind = "mock-scripted"

    def __init__(self, script: dict[str, str], oracle: MockOracle):
        for op in script.values():
            if op not in SCRIPT_OPS and not _NOISE_RE.match(op):
                raise ScriptError(f"unknown transformation {op!r}")
        self.script = dict(script)
        self.oracle = oracle

    def _op_for(self, d_id: str, idx: int) -> str:
        address = f"{d_id}-{idx}"
        if address in self.script:
            return self.script[address]
        if "*" in self.script:
            return self.script["*"]
        raise ScriptError(f"script does not address turn {address!r}")

    def _apply(self, op: str, d_id: str, idx: int, input_text: str) -> str:
        if op == "echo":
            return input_text
        if op == "empty":
            return ""
        if op == "drop-all-flagged":
            return self.oracle.gold_text(d_id, idx)
        if op == "drop-discourse-flagged":
            return self.oracle.drop_flag_text(d_id, idx, "discourse")
        noise = _NOISE_RE.match(op)
        if noise:
            k = int(noise.group(1))
            gold = self.oracle.gold_text(d_id, idx)
            extra = " ".join(f"qqnoise{i}" for i in range(1, k + 1))
            return f"{gold} {extra}".strip()
        raise ScriptError(f"unknown transformation {op!r}")

    def complete(self, request: GenerationRequest) -> str:
        text, batch = _parse_input_payload(request.prompt)
        if batch is not None:
            d_id = batch["dialogue_id"]
            if not self.oracle.has_dialogue(d_id):
                raise UnresolvedTurnError(f"dialogue {d_id!r} not in the dataset")
            turns = [
                self._apply(self._op_for(d_id, i), d_id, i, turn_text)
                for i, turn_text in enumerate(batch["turns"])
            ]
            return _wrap_json(d_id, turns)
        d_id, idx = self.oracle.resolve(text)
        return self._apply(self._op_for(d_id, idx), d_id, idx, text)


class HttpChatProvider(Provider):
    kind = "http-chat"

    def __init__(self, config: ProviderConfig):
        if not config.base_url:
            raise ValueError("http-chat provider needs a base_url")
        self.config = config

    def _api_key(self) -> str:
        name = self.config.auth_env
        if not name or name not in os.environ:
            raise AuthMissingError(
                f"API key environment variable {name or '<unset>'} is not set")
        return os.environ[name]

    def complete(self, request: GenerationRequest) -> str:
        key = self._api_key()
        payload = {
            "model": request.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "n": request.n_completions,
        }
        if request.max_tokens is not None:
            payload["max_tokens"] = request.max_tokens
        headers = {"Authorization": f"Bearer {key}",
                   "Content-Type": "application/json"}
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            try:
                response = requests.post(self.config.base_url, json=payload,
                                         headers=headers, timeout=self.config.timeout)
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_error = exc
            else:
                if response.status_code == 200:
                    try:
                        return response.json()["choices"][0]["message"]["content"]
                    except (KeyError, IndexError, ValueError) as exc:
                        raise ProviderRequestError(
                            f"malformed completion payload: {exc}") from exc
                if response.status_code in TRANSIENT_STATUS or response.status_code >= 500:
                    last_error = ProviderTransientError(
                        f"HTTP {response.status_code} from {self.config.base_url}")
                else:
                    raise ProviderRequestError(
                        f"HTTP {response.status_code} from {self.config.base_url}: "
                        f"{response.text[:200]}")
            if attempt < self.config.max_retries:
                delay = BACKOFF_BASE_SECONDS * (2 ** attempt)
                _sleep(delay + random.uniform(0, delay / 4))
        raise ProviderTransientError(f"request failed after "
                                     f"{self.config.max_retries + 1} attempts: {last_error}")


def build_provider(config: ProviderConfig, oracle: MockOracle | None = None,
                   script: dict[str, str] | None = None) -> Provider:
    if config.kind == "mock-identity":
        return IdentityProvider()
    if config.kind == "mock-gold":
        if oracle is None:
            raise ValueError("mock-gold needs a probing-dataset oracle")
        return GoldProvider(oracle)
    if config.kind == "mock-scripted":
        if oracle is None or script is None:
            raise ValueError("mock-scripted needs an oracle and a script")
        return ScriptedProvider(script, oracle)
    if config.kind == "http-chat":
        return HttpChatProvider(config)
    raise ValueError(f"unknown provider kind {config.kind!r}")


def mock_scripted(script: dict[str, str], oracle: MockOracle) -> ScriptedProvider:
    return ScriptedProvider(script, oracle)


def _cache_path(cache_dir: Path, key: str) -> Path:
    return cache_dir / key[:2] / f"{key}.json"


def _atomic_write(path: Path, content: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}.{threading.get_ident()}")
    tmp.write_text(content, encoding="utf-8")
    os.replace(tmp, path)


def generate(provider: Provider, request: GenerationRequest,
             cache_dir: str | Path | None = None) -> GenerationResult:
    """One completion, served from the cache when available."""
    key = request_hash(provider.kind, request)
    started = time.monotonic()
    if cache_dir is not None:
        path = _cache_path(Path(cache_dir), key)
        if path.exists():
            record = json.loads(path.read_text(encoding="utf-8"))
            return GenerationResult(text=record["text"], provider=provider.kind,
                                    cached=True, latency=time.monotonic() - started,
                                    request_hash=key)
    text = provider.complete(request)
    latency = time.monotonic() - started
    if cache_dir is not None:
        record = {
            "request_hash": key,
            "provider": provider.kind,
            "model": request.model,
            "prompt": request.prompt,
            "temperature": request.temperature,
            "n_completions": request.n_completions,
            "max_tokens": request.max_tokens,
            "text": text,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        }
        _atomic_write(_cache_path(Path(cache_dir), key),
                      json.dumps(record, ensure_ascii=False, indent=2))
    return GenerationResult(text=text, provider=provider.kind, cached=False,
                            latency=latency, request_hash=key)


def generate_many(provider: Provider, requests_: list[GenerationRequest],
                  cache_dir: str | Path | None = None,
                  max_parallel: int = 4) -> list[GenerationResult]:
    """Run requests with bounded fan-out, preserving input order."""
    if not requests_:
        return []
    with ThreadPoolExecutor(max_workers=max(1, max_parallel)) as pool:
        futures = [pool.submit(generate, provider, r, cache_dir) for r in requests_]
        return [f.result() for f in futures]
