"""Provider-abstracted chat completion client with streaming and cancellation.

A generation runs on a worker thread and pushes text chunks to a callback;
the returned handle is addressable from any thread, so a "stop" request can
arrive while another thread is still consuming chunks.  Transport failures
are retried with exponential backoff, but only while no chunk has been
delivered yet: once output started flowing, a retry would corrupt the
consumer's stream, so the generation fails instead.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
import uuid
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Protocol

import httpx

logger = logging.getLogger(__name__)

STREAMING = "streaming"
DONE = "done"
CANCELLED = "cancelled"
FAILED = "failed"

_RETRYABLE_STATUSES = {429, 500, 502, 503, 504}


class GatewayError(Exception):
    """Base class for generation failures."""


class ProviderError(GatewayError):
    def __init__(self, status: int | None, message: str):
        super().__init__(f"provider error ({status}): {message}")
        self.status = status
        self.message = message

    @property
    def retryable(self) -> bool:
        return self.status is None or self.status in _RETRYABLE_STATUSES


class GenerationTimeout(GatewayError):
    pass


class Cancelled(GatewayError):
    pass


class UnknownHandle(GatewayError):
    def __init__(self, handle_id: str):
        super().__init__(f"no generation with id {handle_id!r}")
        self.handle_id = handle_id


@dataclass(frozen=True)
class ChatTurn:
    role: str  # "system" | "user" | "assistant"
    text: str

    def __post_init__(self) -> None:
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"invalid role {self.role!r}")
        if self.role in ("user", "assistant") and not self.text:
            raise ValueError(f"{self.role} turn must have non-empty text")


@dataclass(frozen=True)
class ProviderConfig:
    base_url: str = "https://api.openai.com/v1"
    model_name: str = ""
    api_key: str = ""
    temperature: float = 0.7
    timeout: float = 60.0
    max_retries: int = 2

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be within [0, 2]")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")

    @classmethod
    def from_env(cls, env: dict[str, str] | None = None) -> "ProviderConfig":
        env = os.environ if env is None else env
        kwargs: dict = {}
        if env.get("LLM_BASE_URL"):
            kwargs["base_url"] = env["LLM_BASE_URL"]
        if env.get("LLM_MODEL"):
            kwargs["model_name"] = env["LLM_MODEL"]
        if env.get("LLM_API_KEY"):
            kwargs["api_key"] = env["LLM_API_KEY"]
        if env.get("LLM_TIMEOUT_SECS"):
            kwargs["timeout"] = float(env["LLM_TIMEOUT_SECS"])
        return cls(**kwargs)


def fingerprint(turns: Iterable[ChatTurn]) -> str:
    """Stable digest of a turn list, used to script the mock provider."""
    digest = hashlib.sha256()
    for turn in turns:
        digest.update(turn.role.encode("utf-8"))
        digest.update(b"\x1f")
        digest.update(turn.text.encode("utf-8"))
        digest.update(b"\x1e")
    return digest.hexdigest()


class Provider(Protocol):
    def stream(self, turns: list[ChatTurn], config: ProviderConfig) -> Iterator[str]:
        """Yield response text chunks in order; raise ProviderError on failure."""
        ...


class GenerationHandle:
    """Addressable state of one in-flight or finished generation."""

    def __init__(self) -> None:
        self.id = "gen-" + uuid.uuid4().hex[:12]
        self._lock = threading.Lock()
        self._terminal = threading.Event()
        self._status = STREAMING
        self._chunks: list[str] = []
        self._cancel_requested = False
        self.retries = 0
        self.error: Exception | None = None

    @property
    def status(self) -> str:
        with self._lock:
            return self._status

    @property
    def text(self) -> str:
        with self._lock:
            return "".join(self._chunks)

    @property
    def chunks_delivered(self) -> int:
        with self._lock:
            return len(self._chunks)

    @property
    def cancel_requested(self) -> bool:
        with self._lock:
            return self._cancel_requested

    def request_cancel(self) -> str:
        """Ask the worker to stop; idempotent, terminal states unchanged."""
        with self._lock:
            if self._status == STREAMING:
                self._cancel_requested = True
            return self._status

    def wait(self, timeout: float | None = None) -> bool:
        return self._terminal.wait(timeout)

    def result(self) -> str:
        """Block until terminal; the full text on success."""
        self._terminal.wait()
        with self._lock:
            if self._status == DONE:
                return "".join(self._chunks)
            if self._status == CANCELLED:
                raise Cancelled("generation was cancelled")
            assert self.error is not None
            raise self.error

    # -- worker side ------------------------------------------------------

    def _append(self, chunk: str) -> None:
        with self._lock:
            self._chunks.append(chunk)

    def _terminate(self, status: str, error: Exception | None = None) -> bool:
        with self._lock:
            if self._status != STREAMING:
                return False
            self._status = status
            self.error = error
        self._terminal.set()
        return True


class Gateway:
    """Runs generations on worker threads and tracks handles for cancel."""

    def __init__(
        self,
        provider: Provider,
        config: ProviderConfig | None = None,
        backoff_base: float = 0.5,
    ) -> None:
        self.provider = provider
        self.config = config or ProviderConfig()
        self.backoff_base = backoff_base
        self._handles: dict[str, GenerationHandle] = {}
        self._lock = threading.Lock()

    def generate(
        self,
        turns: list[ChatTurn],
        *,
        config: ProviderConfig | None = None,
        on_chunk: Callable[[str], None] | None = None,
        on_done: Callable[[GenerationHandle], None] | None = None,
    ) -> GenerationHandle:
        """Start a generation; returns immediately with a live handle.

        ``on_chunk`` and ``on_done`` are invoked on the worker thread.
        """
        if not turns:
            raise ValueError("turns must be non-empty")
        config = config or self.config
        handle = GenerationHandle()
        with self._lock:
            self._handles[handle.id] = handle
        worker = threading.Thread(
            target=self._run,
            args=(handle, list(turns), config, on_chunk, on_done),
            name=f"generation-{handle.id}",
            daemon=True,
        )
        worker.start()
        return handle

    def handle(self, handle_id: str) -> GenerationHandle:
        with self._lock:
            try:
                return self._handles[handle_id]
            except KeyError:
                raise UnknownHandle(handle_id) from None

    def cancel(self, handle: GenerationHandle | str) -> str:
        """Idempotent stop request; returns the handle status at call time."""
        if isinstance(handle, str):
            handle = self.handle(handle)
        return handle.request_cancel()

    def _run(
        self,
        handle: GenerationHandle,
        turns: list[ChatTurn],
        config: ProviderConfig,
        on_chunk: Callable[[str], None] | None,
        on_done: Callable[[GenerationHandle], None] | None,
    ) -> None:
        deadline = time.monotonic() + config.timeout * (config.max_retries + 1)
        attempt = 0
        try:
            while True:
                attempt_deadline = min(deadline, time.monotonic() + config.timeout)
                try:
                    for chunk in self.provider.stream(turns, config):
                        if handle.cancel_requested:
                            handle._terminate(CANCELLED)
                            return
                        now = time.monotonic()
                        if now > attempt_deadline or now > deadline:
                            raise GenerationTimeout(
                                f"generation exceeded {config.timeout}s budget"
                            )
                        handle._append(chunk)
                        if on_chunk is not None:
                            on_chunk(chunk)
                    if handle.cancel_requested:
                        handle._terminate(CANCELLED)
                    else:
                        handle._terminate(DONE)
                    return
                except GatewayError as exc:
                    retryable = isinstance(exc, ProviderError) and exc.retryable
                    # Chunks already delivered cannot be retried without
                    # corrupting the consumer's stream.
                    if (
                        not retryable
                        or handle.chunks_delivered > 0
                        or attempt >= config.max_retries
                        or time.monotonic() >= deadline
                    ):
                        handle._terminate(FAILED, exc)
                        return
                    attempt += 1
                    handle.retries = attempt
                    delay = min(self.backoff_base * (2 ** (attempt - 1)), config.timeout)
                    logger.warning(
                        "generation %s attempt %d failed (%s), retrying in %.2fs",
                        handle.id,
                        attempt,
                        exc,
                        delay,
                    )
                    time.sleep(delay)
        except Exception as exc:  # defensive: a provider bug must not hang consumers
            logger.exception("generation %s crashed", handle.id)
            handle._terminate(FAILED, ProviderError(None, str(exc)))
        finally:
            if on_done is not None:
                try:
                    on_done(handle)
                except Exception:
                    logger.exception("on_done callback failed for %s", handle.id)


def _chunked(text: str, size: int) -> list[str]:
    if not text:
        return []
    return [text[i : i + size] for i in range(0, len(text), size)]


class MockProvider:
    """Deterministic offline provider.

    ``script`` maps :func:`fingerprint` values to a response (a string,
    chunked automatically, or an explicit list of chunks).  Unmatched
    prompts fall back to ``fallback``: a string, a callable of the turn
    list, or None to fail with a ProviderError.
    """

    def __init__(
        self,
        script: dict[str, str | list[str]] | None = None,
        fallback: str | list[str] | Callable[[list[ChatTurn]], str | list[str]] | None = None,
        chunk_chars: int = 24,
        chunk_delay: float = 0.0,
    ) -> None:
        self.script = dict(script or {})
        self.fallback = fallback
        self.chunk_chars = chunk_chars
        self.chunk_delay = chunk_delay
        self.calls: list[str] = []

    def stream(self, turns: list[ChatTurn], config: ProviderConfig) -> Iterator[str]:
        key = fingerprint(turns)
        self.calls.append(key)
        response = self.script.get(key)
        if response is None:
            if self.fallback is None:
                raise ProviderError(404, "no scripted response for prompt")
            response = self.fallback(turns) if callable(self.fallback) else self.fallback
        chunks = response if isinstance(response, list) else _chunked(response, self.chunk_chars)
        for chunk in chunks:
            if self.chunk_delay:
                time.sleep(self.chunk_delay)
            yield chunk


class FlakyProvider:
    """Test double that fails a scripted number of times before delegating."""

    def __init__(self, inner: Provider, failures: list[Exception]):
        self.inner = inner
        self.failures = list(failures)
        self.attempts = 0

    def stream(self, turns: list[ChatTurn], config: ProviderConfig) -> Iterator[str]:
        self.attempts += 1
        if self.failures:
            raise self.failures.pop(0)
        yield from self.inner.stream(turns, config)


class HttpProvider:
    """Chat-completion provider speaking the de-facto JSON wire shape.

    Sends ``POST {base_url}/chat/completions`` with a messages array and
    ``stream: true``, and yields the delta content of each streamed event
    line.  Works against any endpoint speaking this shape, including local
    model servers.
    """

    def __init__(self, client: httpx.Client | None = None):
        self._client = client

    def stream(self, turns: list[ChatTurn], config: ProviderConfig) -> Iterator[str]:
        if not config.model_name:
            raise ProviderError(None, "no model configured; set LLM_MODEL")
        payload = {
            "model": config.model_name,
            "messages": [{"role": t.role, "content": t.text} for t in turns],
            "temperature": config.temperature,
            "stream": True,
        }
        headers = {}
        if config.api_key:
            headers["Authorization"] = f"Bearer {config.api_key}"
        client = self._client or httpx.Client(timeout=config.timeout)
        owns_client = self._client is None
        try:
            with client.stream(
                "POST",
                config.base_url.rstrip("/") + "/chat/completions",
                json=payload,
                headers=headers,
            ) as response:
                if response.status_code != 200:
                    body = response.read().decode("utf-8", errors="replace")
                    raise ProviderError(response.status_code, body[:500])
                for line in response.iter_lines():
                    if not line.startswith("data:"):
                        continue
                    data = line[len("data:") :].strip()
                    if data == "[DONE]":
                        break
                    try:
                        event = json.loads(data)
                    except json.JSONDecodeError:
                        logger.debug("skipping malformed stream line: %r", line)
                        continue
                    choices = event.get("choices") or []
                    if not choices:
                        continue
                    delta = choices[0].get("delta") or {}
                    content = delta.get("content")
                    if content:
                        yield content
        except httpx.TimeoutException as exc:
            raise GenerationTimeout(str(exc)) from exc
        except httpx.HTTPError as exc:
            raise ProviderError(None, str(exc)) from exc
        finally:
            if owns_client:
                client.close()
