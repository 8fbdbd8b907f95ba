"""Text-generation backends with per-sample fingerprinting and a file cache.

Two backends share one interface (``fetch(prompt, temperature, ordinals)``):

* ``RemoteBackend`` posts a chat-completion request
  ``{model, messages:[{role:"user",content:prompt}], temperature, n}`` and
  reads ``choices[i].message.content`` in order.
* ``MockBackend`` serves completions from a fixture table keyed by
  ``"<sha256(prompt)>:<ordinal>"`` and errors on unknown keys, which makes
  whole pipeline runs deterministic and offline.

Every sample is addressed by a stable fingerprint of
(model_id, prompt, temperature, ordinal); the cache stores one file per
fingerprint with an integrity checksum line, so warm runs never touch a
backend and a bumped n_samples fetches only the new ordinals.
"""

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import requests

from .errors import BackendError, FixtureMissError

log = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 1.0
DEFAULT_MODEL_ID = "gpt-3.5-turbo"
API_KEY_ENV_VAR = "LLM_API_KEY"


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    temperature: float = DEFAULT_TEMPERATURE
    n_samples: int = 1
    model_id: str = DEFAULT_MODEL_ID

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.temperature < 0.0:
            raise ValueError("temperature must be >= 0")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")


@dataclass(frozen=True)
class GenerationBatch:
    texts: tuple[str, ...]
    request_fingerprint: str


def prompt_hash(prompt: str) -> str:
    """Stable identifier for a prompt; keys the mock fixture table."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def sample_fingerprint(model_id: str, prompt: str, temperature: float, ordinal: int) -> str:
    key = json.dumps(
        {"model": model_id, "prompt": prompt, "temperature": temperature, "ordinal": ordinal},
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(key.encode("utf-8")).hexdigest()


def request_fingerprint(req: GenerationRequest) -> str:
    parts = "".join(
        sample_fingerprint(req.model_id, req.prompt, req.temperature, i)
        for i in range(req.n_samples)
    )
    return hashlib.sha256(parts.encode("ascii")).hexdigest()


def fixture_key(prompt: str, ordinal: int) -> str:
    return f"{prompt_hash(prompt)}:{ordinal}"


class MockBackend:
    """Deterministic backend backed by an in-memory fixture table."""

    def __init__(self, fixtures: dict[str, str], model_id: str = "mock"):
        self.fixtures = dict(fixtures)
        self.model_id = model_id

    @classmethod
    def from_file(cls, path: str, model_id: str = "mock") -> "MockBackend":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in data.items()
        ):
            raise BackendError(f"{path}: mock fixtures must be a JSON object of strings")
        return cls(data, model_id=model_id)

    def fetch(self, prompt: str, temperature: float, ordinals: Sequence[int]) -> list[str]:
        del temperature  # fixtures are keyed by prompt and ordinal only
        digest = prompt_hash(prompt)
        out = []
        for ordinal in ordinals:
            key = f"{digest}:{ordinal}"
            if key not in self.fixtures:
                raise FixtureMissError(
                    f"no mock fixture for prompt hash {digest} sample {ordinal}"
                )
            out.append(self.fixtures[key])
        return out


class RemoteBackend:
    """Chat-completion HTTP backend with retry/backoff."""

    def __init__(
        self,
        endpoint: str,
        model_id: str = DEFAULT_MODEL_ID,
        api_key: Optional[str] = None,
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff: float = 1.0,
        single_sample_requests: bool = False,
        session: Optional[requests.Session] = None,
    ):
        self.endpoint = endpoint
        self.model_id = model_id
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV_VAR)
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self.single_sample_requests = single_sample_requests
        self._session = session or requests.Session()

    def fetch(self, prompt: str, temperature: float, ordinals: Sequence[int]) -> list[str]:
        if self.single_sample_requests:
            return [self._request(prompt, temperature, 1)[0] for _ in ordinals]
        return self._request(prompt, temperature, len(ordinals))

    def _request(self, prompt: str, temperature: float, n: int) -> list[str]:
        body = {
            "model": self.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
            "n": n,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        error: BackendError = BackendError("no request attempted")
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._session.post(
                    self.endpoint, json=body, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                error = BackendError(f"request to {self.endpoint} failed: {exc}")
                log.warning("backend request failed (attempt %d): %s", attempt + 1, exc)
                continue
            if resp.status_code == 200:
                return self._parse_choices(resp, n)
            error = BackendError(
                f"backend returned HTTP {resp.status_code}: {resp.text[:200]}",
                status=resp.status_code,
            )
            if resp.status_code < 500 and resp.status_code != 429:
                break  # client errors do not get better on retry
            log.warning("backend HTTP %d (attempt %d)", resp.status_code, attempt + 1)
        raise error

    @staticmethod
    def _parse_choices(resp: requests.Response, n: int) -> list[str]:
        try:
            choices = resp.json()["choices"]
            texts = [choice["message"]["content"] or "" for choice in choices]
        except (ValueError, KeyError, TypeError) as exc:
            raise BackendError(f"malformed backend response: {exc}") from exc
        if len(texts) < n:
            raise BackendError(f"backend returned {len(texts)} choices, expected {n}")
        return texts[:n]


class GenerationCache:
    """One file per sample fingerprint under a root directory.

    Entry layout: a ``sha256:<hex>`` checksum line, then the completion
    bytes verbatim. Corrupt entries are dropped with a warning and refetched.
    """

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, fingerprint: str) -> Path:
        return self.root / fingerprint

    def get(self, fingerprint: str) -> Optional[str]:
        try:
            blob = self._path(fingerprint).read_bytes()
        except FileNotFoundError:
            return None
        except OSError as exc:
            log.warning("cache read failed for %s: %s", fingerprint, exc)
            return None
        head, sep, body = blob.partition(b"\n")
        if not sep or not head.startswith(b"sha256:"):
            log.warning("cache entry %s is malformed; refetching", fingerprint)
            return None
        if hashlib.sha256(body).hexdigest().encode("ascii") != head[len(b"sha256:"):]:
            log.warning("cache entry %s failed its integrity check; refetching", fingerprint)
            return None
        return body.decode("utf-8")

    def put(self, fingerprint: str, text: str) -> None:
        body = text.encode("utf-8")
        payload = b"sha256:" + hashlib.sha256(body).hexdigest().encode("ascii") + b"\n" + body
        tmp = self.root / f"{fingerprint}.tmp.{os.getpid()}"
        tmp.write_bytes(payload)
        os.replace(tmp, self._path(fingerprint))

    def _entries(self):
        return [p for p in self.root.iterdir() if p.is_file() and ".tmp." not in p.name]

    def stats(self) -> dict:
        entries = self._entries()
        return {"entries": len(entries), "bytes": sum(p.stat().st_size for p in entries)}

    def clear(self) -> int:
        entries = self._entries()
        for p in entries:
            p.unlink()
        return len(entries)


def generate(backend, req: GenerationRequest) -> GenerationBatch:
    """Fetch all samples for a request straight from the backend."""
    texts = backend.fetch(req.prompt, req.temperature, list(range(req.n_samples)))
    if len(texts) != req.n_samples:
        raise BackendError(f"backend produced {len(texts)} samples, expected {req.n_samples}")
    return GenerationBatch(tuple(texts), request_fingerprint(req))


def cached_generate(cache: GenerationCache, backend, req: GenerationRequest) -> GenerationBatch:
    """Per-sample cache lookup; only missing ordinals reach the backend."""
    fingerprints = [
        sample_fingerprint(req.model_id, req.prompt, req.temperature, i)
        for i in range(req.n_samples)
    ]
    texts: list[Optional[str]] = [cache.get(fp) for fp in fingerprints]
    missing = [i for i, t in enumerate(texts) if t is None]
    if missing:
        fetched = backend.fetch(req.prompt, req.temperature, missing)
        if len(fetched) != len(missing):
            raise BackendError(
                f"backend produced {len(fetched)} samples, expected {len(missing)}"
            )
        for ordinal, text in zip(missing, fetched):
            cache.put(fingerprints[ordinal], text)
            texts[ordinal] = text
    return GenerationBatch(tuple(texts), request_fingerprint(req))


class LlmClient:
    """Backend plus optional cache, as used by the expansion pipelines."""

    def __init__(self, backend, cache: Optional[GenerationCache] = None,
                 model_id: Optional[str] = None):
        self.backend = backend
        self.cache = cache
        self.model_id = model_id or getattr(backend, "model_id", DEFAULT_MODEL_ID)

    def sample(self, prompt: str, n: int, temperature: float = DEFAULT_TEMPERATURE) -> list[str]:
        req = GenerationRequest(
            prompt=prompt, temperature=temperature, n_samples=n, model_id=self.model_id
        )
        if self.cache is not None:
            batch = cached_generate(self.cache, self.backend, req)
        else:
            batch = generate(self.backend, req)
        return list(batch.texts)
