"""Completions-style HTTP backend exposing the same handle as the synthetic one.

Each call returns top-k log-probabilities only, so distributions live on small
per-call vocabularies that are renormalized locally.  All policies built from
one `TokenRegistry` share token ids, which is what lets two remote models (or a
remote draft plus expert) be compared position-by-position.
"""

from __future__ import annotations

import os
import threading
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .errors import BackendUnavailable, ContextTooLong
from .policy import PolicyContext, TokenDistribution, Vocabulary

DEFAULT_TOP_LOGPROBS = 20
DEFAULT_MAX_SEQ_LEN = 32768

# A transport maps (url, api_key, payload) to a decoded JSON body.
Transport = Callable[[str, str | None, dict[str, Any]], dict[str, Any]]


def _requests_transport(url: str, api_key: str | None, payload: dict[str, Any]) -> dict[str, Any]:
    import requests

    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    try:
        resp = requests.post(url, json=payload, headers=headers, timeout=120)
    except requests.RequestException as exc:
        raise BackendUnavailable(f"request to {url} failed: {exc}") from exc
    if resp.status_code != 200:
        raise BackendUnavailable(f"{url} returned HTTP {resp.status_code}: {resp.text[:200]}")
    return resp.json()


@dataclass(frozen=True)
class RemoteEndpointConfig:
    url: str
    api_key: str | None = None
    model: str | None = None
    top_logprobs: int = DEFAULT_TOP_LOGPROBS
    max_seq_len: int = DEFAULT_MAX_SEQ_LEN
    max_in_flight: int = 4

    @classmethod
    def from_env(cls, **overrides: Any) -> "RemoteEndpointConfig":
        url = overrides.pop("url", None) or os.environ.get("SCMCTS_API_URL")
        if not url:
            raise BackendUnavailable("no endpoint url: set SCMCTS_API_URL or pass url=")
        key = overrides.pop("api_key", None) or os.environ.get("SCMCTS_API_KEY")
        return cls(url=url, api_key=key, **overrides)


class TokenRegistry:
    """Process-wide shared mapping of token text to stable integer ids.

    Remote models only ever show us token *strings*; giving every policy in a
    run the same registry makes their ids directly comparable.
    """

    def __init__(self) -> None:
        self._tokens: list[str] = []
        self._index: dict[str, int] = {}
        self._lock = threading.Lock()

    def intern(self, token: str) -> int:
        with self._lock:
            idx = self._index.get(token)
            if idx is None:
                idx = len(self._tokens)
                self._tokens.append(token)
                self._index[token] = idx
            return idx

    def text(self, token_id: int) -> str:
        return self._tokens[token_id]

    def __len__(self) -> int:
        return len(self._tokens)


@dataclass
class RemotePolicy:
    """Policy handle backed by a completions endpoint with echo support."""

    config: RemoteEndpointConfig
    registry: TokenRegistry
    transport: Transport = field(default=_requests_transport)

    def __post_init__(self) -> None:
        self._gate = threading.Semaphore(self.config.max_in_flight)
        self._warned_topk = False

    # -------------------------------------------------------------- plumbing

    def _call(self, payload: dict[str, Any]) -> dict[str, Any]:
        if self.config.model:
            payload.setdefault("model", self.config.model)
        with self._gate:
            body = self.transport(self.config.url, self.config.api_key, payload)
        try:
            return body["choices"][0]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailable(f"malformed response body: {body!r:.200}") from exc

    def _check_length(self, ctx: PolicyContext, max_new: int) -> None:
        if len(ctx.tokens) + max_new > self.config.max_seq_len:
            raise ContextTooLong(
                f"{len(ctx.tokens)} context + {max_new} new tokens exceeds "
                f"{self.config.max_seq_len}"
            )

    def _prompt_text(self, ctx: PolicyContext) -> str:
        return "".join(self.registry.text(t) for t in ctx.tokens)

    # -------------------------------------------------------------- handle API

    def encode(self, text: str) -> tuple[int, ...]:
        """Tokenize by echoing the text at zero completion length."""
        choice = self._call({"prompt": text, "max_tokens": 0, "logprobs": 0, "echo": True})
        try:
            pieces = choice["logprobs"]["tokens"]
        except (KeyError, TypeError) as exc:
            raise BackendUnavailable("echo response carried no token list") from exc
        return tuple(self.registry.intern(p) for p in pieces)

    def decode(self, tokens: Sequence[int]) -> str:
        return "".join(self.registry.text(t) for t in tokens)

    def token_id(self, token: str) -> int:
        return self.registry.intern(token)

    def next_distribution(self, ctx: PolicyContext) -> TokenDistribution:
        self._check_length(ctx, 1)
        choice = self._call(
            {
                "prompt": self._prompt_text(ctx),
                "max_tokens": 1,
                "logprobs": self.config.top_logprobs,
                "echo": False,
            }
        )
        try:
            top: dict[str, float] = choice["logprobs"]["top_logprobs"][0]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailable("completion carried no top_logprobs") from exc
        if not top:
            raise BackendUnavailable("empty top_logprobs entry")
        if not self._warned_topk:
            warnings.warn(
                f"distributions are truncated to the top {self.config.top_logprobs} tokens "
                "and renormalized; tail mass is dropped",
                stacklevel=2,
            )
            self._warned_topk = True
        texts = sorted(top)  # stable order regardless of server dict order
        for t in texts:
            self.registry.intern(t)
        vocab = Vocabulary(tuple(texts), eos_markers=())
        raw = np.exp(np.array([top[t] for t in texts], dtype=float))
        return TokenDistribution(vocab, raw / raw.sum())

    def score_sequence(self, ctx: PolicyContext) -> list[float]:
        """Echoed log-probabilities of the answer tokens under this model."""
        if len(ctx.tokens) == ctx.prefix_len:
            return []
        self._check_length(ctx, 0)
        choice = self._call(
            {
                "prompt": self._prompt_text(ctx),
                "max_tokens": 0,
                "logprobs": 0,
                "echo": True,
            }
        )
        try:
            lps = choice["logprobs"]["token_logprobs"]
        except (KeyError, TypeError) as exc:
            raise BackendUnavailable("echo response carried no token_logprobs") from exc
        if len(lps) != len(ctx.tokens):
            raise BackendUnavailable(
                f"echo returned {len(lps)} logprobs for {len(ctx.tokens)} tokens"
            )
        return [float(x) if x is not None else 0.0 for x in lps[ctx.prefix_len :]]
