"""Label embedding store with a deterministic hashing fallback.

The store maps normalized labels (space-joined lowercase tokens) to fixed-size
vectors, usually exported from a pretrained sentence encoder. When a label is
missing, the configured fallback either synthesizes a hash-based vector or
fails loudly, so the rest of the pipeline can run with or without an export.

File format (UTF-8 text): first line ``dim=<N>``, then one row per label:
``<normalized label>\\t<v1> <v2> ... <vN>`` with decimal reals.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

_CAMEL_BOUNDARY_1 = re.compile(r"([a-z0-9])([A-Z])")
_CAMEL_BOUNDARY_2 = re.compile(r"([A-Z]+)([A-Z][a-z])")
_SEPARATORS = re.compile(r"[\s_\-]+")


class MissingEmbeddingError(KeyError):
    def __init__(self, label: str):
        super().__init__(f"no embedding for label {label!r} and hash fallback is disabled")
        self.label = label


class EmbeddingFormatError(ValueError):
    pass


def tokenize(label: str) -> list[str]:
    """Split on whitespace / underscores / hyphens / camelCase; lowercase."""
    s = _CAMEL_BOUNDARY_2.sub(r"\1 \2", label)
    s = _CAMEL_BOUNDARY_1.sub(r"\1 \2", s)
    return [t.lower() for t in _SEPARATORS.split(s) if t]


def normalize_label(label: str) -> str:
    return " ".join(tokenize(label))


def _gram_hash(seed: int, gram: str) -> int:
    digest = hashlib.blake2b(f"{seed}:{gram}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def hash_embed(tokens: list[str], dim: int, seed: int) -> np.ndarray:
    """Deterministic trigram-hashing embedding.

    Per token, character trigrams of '#token#' are hashed into `dim` signed
    buckets; token vectors are averaged and the result L2-normalized. The
    all-zero degenerate case (no tokens, or full cancellation) stays zero.
    """
    if dim <= 0:
        raise ValueError("dim must be positive")
    acc = np.zeros(dim)
    if not tokens:
        return acc
    for token in tokens:
        padded = f"#{token}#"
        vec = np.zeros(dim)
        for i in range(len(padded) - 2):
            h = _gram_hash(seed, padded[i : i + 3])
            sign = 1.0 if (h >> 63) & 1 else -1.0
            vec[h % dim] += sign
        acc += vec
    acc /= len(tokens)
    norm = np.linalg.norm(acc)
    if norm > 0:
        acc /= norm
    return acc


@dataclass
class EmbeddingStore:
    """Immutable after construction; concurrent lookups are safe.

    fallback_seed=None means lookups fail on a miss; an integer seed enables
    the hash fallback and makes lookups total.
    """

    dim: int
    vectors: dict[str, np.ndarray] = field(default_factory=dict)
    fallback_seed: int | None = None

    def lookup(self, label: str) -> np.ndarray:
        key = normalize_label(label)
        hit = self.vectors.get(key)
        if hit is not None:
            return hit
        if self.fallback_seed is None:
            raise MissingEmbeddingError(label)
        return hash_embed(tokenize(label), self.dim, self.fallback_seed)


def lookup(store: EmbeddingStore, label: str) -> np.ndarray:
    return store.lookup(label)


def save_store(store: EmbeddingStore, path: str | Path) -> None:
    lines = [f"dim={store.dim}"]
    for key in sorted(store.vectors):
        values = " ".join(repr(float(v)) for v in store.vectors[key])
        lines.append(f"{key}\t{values}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_store(path: str | Path, fallback_seed: int | None = None) -> EmbeddingStore:
    text = Path(path).read_text(encoding="utf-8")
    lines = [line for line in text.split("\n") if line.strip()]
    if not lines or not lines[0].startswith("dim="):
        raise EmbeddingFormatError(f"{path}: first line must be 'dim=<N>'")
    try:
        dim = int(lines[0][len("dim=") :])
    except ValueError as exc:
        raise EmbeddingFormatError(f"{path}: bad dimension header {lines[0]!r}") from exc
    if dim <= 0:
        raise EmbeddingFormatError(f"{path}: dimension must be positive")

    vectors: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if "\t" not in line:
            raise EmbeddingFormatError(f"{path}:{lineno}: missing tab separator")
        key, _, values = line.partition("\t")
        try:
            vec = np.array([float(v) for v in values.split()])
        except ValueError as exc:
            raise EmbeddingFormatError(f"{path}:{lineno}: non-numeric value") from exc
        if vec.shape != (dim,):
            raise EmbeddingFormatError(
                f"{path}:{lineno}: row has {vec.shape[0]} values, header says {dim}"
            )
        if not np.all(np.isfinite(vec)):
            raise EmbeddingFormatError(f"{path}:{lineno}: non-finite value")
        vectors[key] = vec
    return EmbeddingStore(dim=dim, vectors=vectors, fallback_seed=fallback_seed)
