"""Readers and writers for BEIR JSONL, TREC qrels and TREC run files."""

from __future__ import annotations

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Iterable, Iterator

from .core import ContractViolation, IngestionError, Passage, Query, RankedItem, Ranking, ValidationError
from .metrics import Qrels

log = logging.getLogger(__name__)


def _json_lines(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestionError(f"invalid JSON ({exc.msg})", path=str(path), line=lineno) from None
            if not isinstance(record, dict):
                raise IngestionError("expected a JSON object", path=str(path), line=lineno)
            yield lineno, record


def _field(record: dict, name: str, path, lineno: int) -> str:
    if name not in record:
        raise IngestionError(f"missing required field {name!r}", path=str(path), line=lineno)
    value = record[name]
    if not isinstance(value, str):
        if isinstance(value, (int, float)) and not isinstance(value, bool) and name == "_id":
            return str(value)
        raise IngestionError(f"field {name!r} must be a string", path=str(path), line=lineno)
    return value


def load_corpus(path: str | Path) -> Iterator[Passage]:
    """Stream passages from a BEIR ``corpus.jsonl`` (``_id``, ``title``, ``text``)."""
    seen: set[str] = set()
    for lineno, record in _json_lines(path):
        pid = _field(record, "_id", path, lineno)
        text = _field(record, "text", path, lineno)
        title = _field(record, "title", path, lineno) if "title" in record else ""
        if not pid:
            raise IngestionError("empty '_id'", path=str(path), line=lineno)
        if pid in seen:
            raise IngestionError(f"duplicate _id {pid!r}", path=str(path), line=lineno)
        seen.add(pid)
        yield Passage(pid, text, title)


def load_queries(path: str | Path) -> list[Query]:
    queries: list[Query] = []
    seen: set[str] = set()
    for lineno, record in _json_lines(path):
        qid = _field(record, "_id", path, lineno)
        text = _field(record, "text", path, lineno)
        if qid in seen:
            raise IngestionError(f"duplicate _id {qid!r}", path=str(path), line=lineno)
        seen.add(qid)
        try:
            queries.append(Query(qid, text))
        except ContractViolation as exc:
            raise IngestionError(str(exc), path=str(path), line=lineno) from None
    return queries


def load_qrels(path: str | Path) -> Qrels:
    """Parse ``qid 0 docid grade`` lines. Later duplicates win, with a warning."""
    qrels: Qrels = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 4:
                raise IngestionError(f"expected 4 fields, got {len(fields)}", path=str(path), line=lineno)
            qid, _, pid, raw = fields
            try:
                grade = int(raw)
            except ValueError:
                raise IngestionError(f"grade {raw!r} is not an integer", path=str(path), line=lineno) from None
            if grade < 0:
                raise IngestionError(f"negative grade {grade}", path=str(path), line=lineno)
            docs = qrels.setdefault(qid, {})
            if pid in docs:
                log.warning("%s:%d: duplicate judgement for (%s, %s), %d replaces %d", path, lineno, qid, pid, grade, docs[pid])
            docs[pid] = grade
    return qrels


def format_run_line(query_id: str, item: RankedItem, tag: str) -> str:
    return f"{query_id} Q0 {item.passage_id} {item.rank} {item.score:.6f} {tag}\n"


def write_run(rankings: Iterable[Ranking], tag: str, path: str | Path) -> None:
    """Write a TREC run atomically (temp file + rename), so no partial files appear."""
    if not tag or any(c.isspace() for c in tag):
        raise ContractViolation(f"run tag must be a non-empty token, got {tag!r}")
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            for ranking in rankings:
                for item in ranking.items:
                    fh.write(format_run_line(ranking.query_id, item, tag))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_run(path: str | Path) -> list[Ranking]:
    """Read a TREC run, checking rank contiguity, score order and id uniqueness."""
    grouped: dict[str, list[RankedItem]] = {}
    tags: dict[str, str] = {}
    last_score: dict[str, float] = {}
    ids: dict[str, set[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 6:
                raise IngestionError(f"expected 6 fields, got {len(fields)}", path=str(path), line=lineno)
            qid, _, pid, raw_rank, raw_score, tag = fields
            try:
                rank, score = int(raw_rank), float(raw_score)
            except ValueError:
                raise IngestionError("rank must be an integer and score a number", path=str(path), line=lineno) from None
            items = grouped.setdefault(qid, [])
            tags.setdefault(qid, tag)
            if rank != len(items) + 1:
                raise ValidationError(
                    f"query {qid}: rank {rank} where {len(items) + 1} was expected", path=str(path), line=lineno
                )
            if items and score > last_score[qid]:
                raise ValidationError(
                    f"query {qid}: score {score} at rank {rank} exceeds the score at rank {rank - 1}",
                    path=str(path),
                    line=lineno,
                )
            seen = ids.setdefault(qid, set())
            if pid in seen:
                raise ValidationError(f"query {qid}: passage {pid} listed twice", path=str(path), line=lineno)
            seen.add(pid)
            last_score[qid] = score
            items.append(RankedItem(pid, score, rank))
    return [Ranking(qid, tuple(items), tags[qid]) for qid, items in grouped.items()]
