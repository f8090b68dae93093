"""Character n-gram TF-IDF featurization into sparse vectors.

Text is case-folded and sliced into all character n-grams with lengths in
[n_min, n_max]; each document becomes a sparse vector of raw counts scaled
by smoothed idf, optionally L2-normalized. No other normalization is done:
forum slang and leetspeak carry signal.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .util import read_json, sha256_bytes, stable_json_dumps

FORMAT_VERSION = "chainforge-tfidf/1"

DEFAULT_N_MIN = 2
DEFAULT_N_MAX = 5
DEFAULT_MIN_DF = 2
DEFAULT_MAX_FEATURES = 200_000


class FeaturizeError(Exception):
    pass


@dataclass(frozen=True)
class SparseVector:
    """(index, value) pairs sorted by strictly increasing index; no zeros."""

    indices: tuple[int, ...]
    values: tuple[float, ...]
    dimension: int

    def __post_init__(self):
        if len(self.indices) != len(self.values):
            raise ValueError("indices and values length mismatch")

    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.values))

    def scale(self, factor: float) -> "SparseVector":
        return SparseVector(self.indices,
                            tuple(v * factor for v in self.values),
                            self.dimension)

    def to_dense(self) -> list[float]:
        dense = [0.0] * self.dimension
        for i, v in zip(self.indices, self.values):
            dense[i] = v
        return dense

    def nnz(self) -> int:
        return len(self.indices)


def char_ngrams(text: str, n_min: int, n_max: int) -> Iterable[str]:
    """All character n-grams of the case-folded text, lengths n_min..n_max."""
    folded = text.casefold()
    length = len(folded)
    for n in range(n_min, n_max + 1):
        for i in range(length - n + 1):
            yield folded[i:i + n]


@dataclass
class NgramVocabulary:
    n_min: int
    n_max: int
    term_to_index: dict[str, int]
    document_frequency: dict[str, int]

    def __len__(self) -> int:
        return len(self.term_to_index)


@dataclass
class TfidfModel:
    vocabulary: NgramVocabulary
    idf: list[float]  # aligned with term index
    n_docs_fitted: int
    normalize: bool = True
    min_df: int = DEFAULT_MIN_DF
    max_features: int = DEFAULT_MAX_FEATURES
    _fingerprint: str | None = field(default=None, repr=False)

    @property
    def dimension(self) -> int:
        return len(self.vocabulary)

    def fingerprint(self) -> str:
        """Stable identity of params+vocabulary+idf, for model/feature pairing."""
        if self._fingerprint is None:
            payload = stable_json_dumps(self._to_payload()).encode("utf-8")
            object.__setattr__(self, "_fingerprint", sha256_bytes(payload))
        return self._fingerprint

    def _to_payload(self) -> dict:
        terms = sorted(self.vocabulary.term_to_index,
                       key=self.vocabulary.term_to_index.get)
        return {
            "format": FORMAT_VERSION,
            "n_min": self.vocabulary.n_min,
            "n_max": self.vocabulary.n_max,
            "min_df": self.min_df,
            "max_features": self.max_features,
            "normalize": self.normalize,
            "n_docs_fitted": self.n_docs_fitted,
            "terms": terms,
            "document_frequency": [self.vocabulary.document_frequency[t] for t in terms],
            "idf": [repr(v) for v in self.idf],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(stable_json_dumps(self._to_payload()) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TfidfModel":
        payload = read_json(path)
        if payload.get("format") != FORMAT_VERSION:
            raise FeaturizeError(
                f"unsupported tf-idf model format: expected {FORMAT_VERSION}, "
                f"found {payload.get('format')!r}")
        terms = payload["terms"]
        vocab = NgramVocabulary(
            n_min=payload["n_min"], n_max=payload["n_max"],
            term_to_index={t: i for i, t in enumerate(terms)},
            document_frequency=dict(zip(terms, payload["document_frequency"])),
        )
        return cls(vocabulary=vocab,
                   idf=[float(v) for v in payload["idf"]],
                   n_docs_fitted=payload["n_docs_fitted"],
                   normalize=payload["normalize"],
                   min_df=payload["min_df"],
                   max_features=payload["max_features"])


def fit(docs: Sequence[str], n_min: int = DEFAULT_N_MIN, n_max: int = DEFAULT_N_MAX,
        min_df: int = DEFAULT_MIN_DF, max_features: int = DEFAULT_MAX_FEATURES,
        normalize: bool = True) -> TfidfModel:
    """Fit vocabulary and idf weights over the documents.

    Retains n-grams with document frequency >= min_df, truncated to the
    max_features highest-df terms (ties broken lexicographically); indices
    are assigned in lexicographic term order. idf(t) = ln((1+N)/(1+df)) + 1.
    """
    if not docs:
        raise FeaturizeError("no documents to fit")
    if not (1 <= n_min <= n_max <= 8):
        raise ValueError(f"n-gram range must satisfy 1 <= n_min <= n_max <= 8, "
                         f"got [{n_min}, {n_max}]")
    df: Counter[str] = Counter()
    for doc in docs:
        df.update(set(char_ngrams(doc, n_min, n_max)))
    if not df:
        raise FeaturizeError("empty vocabulary: all documents empty")
    kept = [t for t, c in df.items() if c >= min_df]
    if not kept:
        raise FeaturizeError(
            f"empty vocabulary: no n-gram reaches min_df={min_df}")
    kept.sort(key=lambda t: (-df[t], t))
    kept = kept[:max_features]
    kept.sort()
    n_docs = len(docs)
    vocab = NgramVocabulary(
        n_min=n_min, n_max=n_max,
        term_to_index={t: i for i, t in enumerate(kept)},
        document_frequency={t: df[t] for t in kept},
    )
    idf = [math.log((1 + n_docs) / (1 + df[t])) + 1.0 for t in kept]
    return TfidfModel(vocabulary=vocab, idf=idf, n_docs_fitted=n_docs,
                      normalize=normalize, min_df=min_df, max_features=max_features)


def transform(model: TfidfModel, doc: str) -> SparseVector:
    """Featurize one document; unseen n-grams are ignored."""
    vocab = model.vocabulary
    counts: Counter[int] = Counter()
    for gram in char_ngrams(doc, vocab.n_min, vocab.n_max):
        index = vocab.term_to_index.get(gram)
        if index is not None:
            counts[index] += 1
    indices = tuple(sorted(counts))
    values = tuple(counts[i] * model.idf[i] for i in indices)
    vector = SparseVector(indices, values, model.dimension)
    if model.normalize:
        norm = vector.norm()
        if norm > 0:
            vector = vector.scale(1.0 / norm)
    return vector


def transform_many(model: TfidfModel, docs: Iterable[str]) -> list[SparseVector]:
    return [transform(model, doc) for doc in docs]
