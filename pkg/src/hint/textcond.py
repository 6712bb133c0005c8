"""Word-level and sentence-level text embeddings.

The toy encoder maps any string to a unit-norm pseudo-random vector derived
from a blake2b hash in counter mode, with Box-Muller applied to the hash
bytes directly. No RNG library is involved, so embeddings are byte-exact
across processes, platforms, and library versions.

A real encoder plugs in through the same interface; it is never silently
substituted by the toy one when unavailable.
"""

from __future__ import annotations

import hashlib
import json
import re
import urllib.error
import urllib.request
from dataclasses import dataclass

import numpy as np

from .errors import EncoderUnavailableError

PAD_TOKEN = "<pad>"
_WORD_RE = re.compile(r"[^a-z0-9\s]")


def tokenize_words(text: str) -> list[str]:
    """Lowercase, strip punctuation, split on whitespace; empty → [PAD_TOKEN]."""
    cleaned = _WORD_RE.sub(" ", text.lower())
    tokens = cleaned.split()
    return tokens if tokens else [PAD_TOKEN]


@dataclass
class WordTokens:
    embeddings: np.ndarray  # (L, e_dim)
    tokens: list[str]
    mask: np.ndarray  # (L,) bool


@dataclass
class CommandToken:
    embedding: np.ndarray  # (e_dim,)


def _hash_normals(key: str, n: int) -> np.ndarray:
    """n standard normals from blake2b(key) in counter mode, Box-Muller."""
    blocks = (n + 7) // 8  # 64 hash bytes -> 8 u64 -> 4 uniform pairs -> 8 normals
    raw = b"".join(
        hashlib.blake2b(f"{key}\x00{i}".encode(), digest_size=64).digest()
        for i in range(blocks)
    )
    u64 = np.frombuffer(raw, dtype="<u8").astype(np.float64)
    u = (u64 + 1.0) / 18446744073709551616.0  # (0, 1]
    u1, u2 = u[0::2], u[1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
    return z[:n]


class ToyTextEncoder:
    """Deterministic hash-embedding encoder."""

    def __init__(self, e_dim: int = 512):
        self.e_dim = e_dim
        self._cache: dict[str, np.ndarray] = {}

    def _vector(self, key: str) -> np.ndarray:
        vec = self._cache.get(key)
        if vec is None:
            vec = _hash_normals(key, self.e_dim)
            vec = vec / np.linalg.norm(vec)
            self._cache[key] = vec
        return vec

    def encode_words(self, tokens: list[str]) -> np.ndarray:
        return np.stack([self._vector(t) for t in tokens])

    def encode_command(self, text: str) -> np.ndarray:
        return self._vector(" ".join(tokenize_words(text)))


class ExternalEncoderAdapter:
    """Bridge to a text encoder served over a local HTTP endpoint.

    Request: POST {"texts": [...]} ; response: {"embeddings": [[...], ...]}.
    Any transport or schema failure raises, never falls back.
    """

    def __init__(self, endpoint: str, e_dim: int = 512, timeout: float = 10.0):
        self.endpoint = endpoint
        self.e_dim = e_dim
        self.timeout = timeout

    def _call(self, texts: list[str]) -> np.ndarray:
        body = json.dumps({"texts": texts}).encode()
        req = urllib.request.Request(
            self.endpoint, data=body, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read())
        except (urllib.error.URLError, OSError, json.JSONDecodeError) as e:
            raise EncoderUnavailableError(
                f"text encoder at {self.endpoint} unavailable: {e}"
            ) from e
        emb = np.asarray(payload.get("embeddings"), dtype=np.float64)
        if emb.ndim != 2 or emb.shape[0] != len(texts) or emb.shape[1] != self.e_dim:
            raise EncoderUnavailableError(
                f"text encoder returned shape {emb.shape}, expected ({len(texts)}, {self.e_dim})"
            )
        return emb

    def encode_words(self, tokens: list[str]) -> np.ndarray:
        return self._call(tokens)

    def encode_command(self, text: str) -> np.ndarray:
        return self._call([" ".join(tokenize_words(text))])[0]


def encode_text(text: str, encoder) -> tuple[WordTokens, CommandToken]:
    tokens = tokenize_words(text)
    emb = encoder.encode_words(tokens)
    return (
        WordTokens(embeddings=emb, tokens=tokens, mask=np.ones(len(tokens), dtype=bool)),
        CommandToken(embedding=encoder.encode_command(text)),
    )


def make_encoder(name: str = "toy", e_dim: int = 512, endpoint: str | None = None):
    if name == "toy":
        return ToyTextEncoder(e_dim=e_dim)
    if name == "external":
        if not endpoint:
            raise EncoderUnavailableError("external encoder requested without an endpoint")
        return ExternalEncoderAdapter(endpoint, e_dim=e_dim)
    raise EncoderUnavailableError(f"unknown text encoder {name!r}")
