"""Text embedding providers for literal repair."""

from __future__ import annotations

import re
import zlib
from collections.abc import Sequence
from typing import Protocol

import numpy as np


class Embedder(Protocol):
    def embed(self, text: str) -> np.ndarray: ...


class TrigramEmbedder:
    """Deterministic bag of hashed character trigrams.

    Text is lower-cased, runs of non-alphanumerics become one space, and the
    result is padded with two leading spaces and one trailing space.
    """

    def __init__(self, dim: int = 4096):
        self.dim = dim

    @staticmethod
    def trigrams(text: str) -> list[str]:
        norm = re.sub(r"[^0-9a-z]+", " ", text.lower()).strip()
        padded = f"  {norm} "
        return [padded[i : i + 3] for i in range(len(padded) - 2)]

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        for gram in self.trigrams(text):
            vec[zlib.crc32(gram.encode("utf-8")) % self.dim] += 1.0
        return vec

    def embed_many(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([self.embed(t) for t in texts]) if texts else np.zeros((0, self.dim))


class SentenceEmbedder:
    """Transformer sentence encoder; loaded lazily, needs sentence-transformers."""

    def __init__(self, model_name: str = "all-MiniLM-L6-v2"):
        from sentence_transformers import SentenceTransformer

        self._model = SentenceTransformer(model_name)

    def embed(self, text: str) -> np.ndarray:
        return np.asarray(self._model.encode(text), dtype=float)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def nearest(text: str, candidates: Sequence[str], embedder: Embedder) -> str | None:
    """Candidate with the highest cosine similarity; ties go to the lexicographically smallest."""
    if not candidates:
        return None
    q = embedder.embed(text)
    scored = [(-round(cosine(q, embedder.embed(c)), 12), c) for c in candidates]
    return min(scored)[1]
