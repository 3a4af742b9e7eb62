"""Inverted index and Okapi BM25 first-stage retrieval.

Index file layout (little-endian), version 1::

    magic     8 bytes   b"PRBM25IX"
    version   uint32
    meta_len  uint32    length of the UTF-8 JSON metadata block
    meta      JSON      {"doc_ids": [...], "terms": [...], "stem": bool, "stopwords": bool}
    arrays    .npy      offsets (int64, len(terms)+1), postings_doc (int32),
                        postings_tf (int32), doc_lengths (int32), each written
                        with numpy.save back to back

Postings of term ``t`` are ``[offsets[t], offsets[t+1])`` in the two posting arrays.
"""

from __future__ import annotations

import json
import math
import re
import struct
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .core import Candidate, ContractViolation, IngestionError, Passage, Query, RerankError

MAGIC = b"PRBM25IX"
FORMAT_VERSION = 1

_TOKEN = re.compile(r"[^\W_]+")

# Lucene's default English stop set (as used by Anserini)
STOPWORDS = frozenset(
    "a an and are as at be but by for if in into is it no not of on or such that the their "
    "then there these they this to was will with".split()
)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on anything that is not a letter or digit."""
    return _TOKEN.findall(text.lower())


@lru_cache(maxsize=1)
def _stemmer():
    try:
        import snowballstemmer
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise RerankError("stemming needs the 'snowballstemmer' package (pip install artifact[stem])") from exc
    return snowballstemmer.stemmer("english")


def make_analyzer(stem: bool = False, stopwords: bool = False) -> Callable[[str], list[str]]:
    def analyze(text: str) -> list[str]:
        terms = tokenize(text)
        if stopwords:
            terms = [t for t in terms if t not in STOPWORDS]
        if stem:
            terms = _stemmer().stemWords(terms)
        return terms

    return analyze


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 0.9
    b: float = 0.4

    def __post_init__(self) -> None:
        if self.k1 < 0:
            raise ContractViolation("k1 must be >= 0")
        if not 0.0 <= self.b <= 1.0:
            raise ContractViolation("b must lie in [0, 1]")


class InvertedIndex:
    """Immutable CSR-style postings. Safe for concurrent searches once built."""

    def __init__(
        self,
        doc_ids: list[str],
        terms: list[str],
        offsets: np.ndarray,
        postings_doc: np.ndarray,
        postings_tf: np.ndarray,
        doc_lengths: np.ndarray,
        stem: bool = False,
        stopwords: bool = False,
    ):
        self.doc_ids = doc_ids
        self.terms = terms
        self.term_ids = {t: i for i, t in enumerate(terms)}
        self.offsets = offsets
        self.postings_doc = postings_doc
        self.postings_tf = postings_tf
        self.doc_lengths = doc_lengths
        self.stem = stem
        self.stopwords = stopwords
        self.analyze = make_analyzer(stem, stopwords)

    @property
    def N(self) -> int:
        return len(self.doc_ids)

    @property
    def avgdl(self) -> float:
        return float(self.doc_lengths.mean()) if self.N else 0.0

    @property
    def vocabulary_size(self) -> int:
        return len(self.terms)

    def df(self, term: str) -> int:
        tid = self.term_ids.get(term)
        return 0 if tid is None else int(self.offsets[tid + 1] - self.offsets[tid])

    def postings(self, term: str) -> list[tuple[int, int]]:
        tid = self.term_ids.get(term)
        if tid is None:
            return []
        lo, hi = self.offsets[tid], self.offsets[tid + 1]
        return list(zip(self.postings_doc[lo:hi].tolist(), self.postings_tf[lo:hi].tolist()))

    def summary(self) -> dict:
        return {"N": self.N, "avgdl": self.avgdl, "vocabulary_size": self.vocabulary_size}

    def save(self, path: str | Path) -> None:
        meta = json.dumps(
            {"doc_ids": self.doc_ids, "terms": self.terms, "stem": self.stem, "stopwords": self.stopwords}
        ).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<II", FORMAT_VERSION, len(meta)))
            fh.write(meta)
            for array in (self.offsets, self.postings_doc, self.postings_tf, self.doc_lengths):
                np.save(fh, array, allow_pickle=False)

    @classmethod
    def load(cls, path: str | Path) -> "InvertedIndex":
        with open(path, "rb") as fh:
            if fh.read(len(MAGIC)) != MAGIC:
                raise IngestionError("not a BM25 index file", path=str(path))
            version, meta_len = struct.unpack("<II", fh.read(8))
            if version != FORMAT_VERSION:
                raise IngestionError(f"unsupported index version {version}", path=str(path))
            meta = json.loads(fh.read(meta_len).decode("utf-8"))
            arrays = [np.load(fh, allow_pickle=False) for _ in range(4)]
        return cls(meta["doc_ids"], meta["terms"], *arrays, stem=meta["stem"], stopwords=meta["stopwords"])


def build_index(corpus: Iterable[Passage], *, stem: bool = False, stopwords: bool = False) -> InvertedIndex:
    """Index title + text of every passage. Duplicate ids are rejected."""
    analyze = make_analyzer(stem, stopwords)
    doc_ids: list[str] = []
    seen: set[str] = set()
    lengths: list[int] = []
    term_ids: dict[str, int] = {}
    # per-term growable posting lists, flattened to CSR at the end
    docs_by_term: list[list[int]] = []
    tfs_by_term: list[list[int]] = []
    for passage in corpus:
        if passage.id in seen:
            raise IngestionError(f"duplicate passage id {passage.id!r}")
        seen.add(passage.id)
        ordinal = len(doc_ids)
        doc_ids.append(passage.id)
        terms = analyze(passage.full_text)
        lengths.append(len(terms))
        for term, tf in Counter(terms).items():
            tid = term_ids.get(term)
            if tid is None:
                tid = term_ids[term] = len(docs_by_term)
                docs_by_term.append([])
                tfs_by_term.append([])
            docs_by_term[tid].append(ordinal)
            tfs_by_term[tid].append(tf)

    terms_sorted = sorted(term_ids)
    offsets = np.zeros(len(terms_sorted) + 1, dtype=np.int64)
    for new_id, term in enumerate(terms_sorted):
        offsets[new_id + 1] = offsets[new_id] + len(docs_by_term[term_ids[term]])
    postings_doc = np.empty(int(offsets[-1]), dtype=np.int32)
    postings_tf = np.empty(int(offsets[-1]), dtype=np.int32)
    for new_id, term in enumerate(terms_sorted):
        old = term_ids[term]
        lo, hi = offsets[new_id], offsets[new_id + 1]
        postings_doc[lo:hi] = docs_by_term[old]
        postings_tf[lo:hi] = tfs_by_term[old]
    return InvertedIndex(
        doc_ids,
        terms_sorted,
        offsets,
        postings_doc,
        postings_tf,
        np.asarray(lengths, dtype=np.int32),
        stem=stem,
        stopwords=stopwords,
    )


def idf(N: int, df: int) -> float:
    return math.log(1.0 + (N - df + 0.5) / (df + 0.5))


def score_all(index: InvertedIndex, params: Bm25Params, query_text: str) -> np.ndarray:
    """Dense BM25 score vector over every document (0 where no term matches)."""
    scores = np.zeros(index.N, dtype=np.float64)
    if index.N == 0:
        return scores
    norm = params.k1 * (1.0 - params.b + params.b * index.doc_lengths / index.avgdl) if index.avgdl > 0 else None
    for term in dict.fromkeys(index.analyze(query_text)):
        tid = index.term_ids.get(term)
        if tid is None:
            continue
        lo, hi = index.offsets[tid], index.offsets[tid + 1]
        docs = index.postings_doc[lo:hi]
        tf = index.postings_tf[lo:hi].astype(np.float64)
        w = idf(index.N, hi - lo)
        scores[docs] += w * tf * (params.k1 + 1.0) / (tf + norm[docs])
    return scores


def search(index: InvertedIndex, params: Bm25Params, query: Query, top_k: int) -> list[Candidate]:
    """Top ``top_k`` documents by BM25, ties broken by passage id ascending."""
    if top_k < 1:
        raise ContractViolation("top_k must be positive")
    scores = score_all(index, params, query.text)
    matched = np.flatnonzero(scores > 0)
    if len(matched) > top_k:
        # keep everything tied with the k-th best so id tie-breaking stays exact
        kth = np.partition(scores[matched], len(matched) - top_k)[len(matched) - top_k]
        matched = matched[scores[matched] >= kth]
    order = sorted(matched.tolist(), key=lambda d: (-scores[d], index.doc_ids[d]))[:top_k]
    return [Candidate(index.doc_ids[d], float(scores[d]), rank) for rank, d in enumerate(order, start=1)]
