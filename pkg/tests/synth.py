"""Synthetic reranking fixtures shared by the test modules."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from passage_rerank.core import Candidate, Passage, Query, Ranking
from passage_rerank.dataio import write_run

# graded relevance profile per query: grade -> how many candidates get it
GRADE_PROFILE = {4: 2, 3: 3, 2: 4, 1: 6}

VOCAB = [f"w{i}" for i in range(300)]


@dataclass
class SyntheticDataset:
    queries: dict[str, Query]
    passages: dict[str, Passage]
    candidates: dict[str, list[Candidate]]
    qrels: dict[str, dict[str, int]]


def make_dataset(n_queries: int = 20, n_candidates: int = 100, seed: int = 7) -> SyntheticDataset:
    """Queries with shuffled first-stage lists and hidden graded judgements.

    The first-stage order is a random permutation, so it carries no relevance
    signal and any ordering by grade has to come from the reranker.
    """
    rng = np.random.default_rng(seed)
    queries, passages, candidates, qrels = {}, {}, {}, {}
    for qi in range(n_queries):
        qid = f"q{qi}"
        queries[qid] = Query(qid, " ".join(rng.choice(VOCAB, size=4)))
        ids = [f"{qid}-d{j}" for j in range(n_candidates)]
        for pid in ids:
            passages[pid] = Passage(pid, " ".join(rng.choice(VOCAB, size=int(rng.integers(20, 60)))))
        grades = [g for g, count in GRADE_PROFILE.items() for _ in range(count)]
        grades += [0] * (n_candidates - len(grades))
        rng.shuffle(grades)
        qrels[qid] = {pid: int(g) for pid, g in zip(ids, grades)}
        order = rng.permutation(n_candidates)
        first_stage_scores = np.sort(rng.uniform(5, 25, size=n_candidates))[::-1]
        candidates[qid] = [
            Candidate(ids[j], float(s), rank) for rank, (j, s) in enumerate(zip(order, first_stage_scores), start=1)
        ]
    return SyntheticDataset(queries, passages, candidates, qrels)


@dataclass
class DatasetFiles:
    corpus: Path
    queries: Path
    qrels: Path
    run: Path


def write_files(ds: SyntheticDataset, directory: Path) -> DatasetFiles:
    """Materialize a dataset as BEIR JSONL, TREC qrels and a first-stage TREC run."""
    files = DatasetFiles(directory / "corpus.jsonl", directory / "queries.jsonl", directory / "qrels.txt", directory / "first.run")
    with open(files.corpus, "w", encoding="utf-8") as fh:
        for p in ds.passages.values():
            fh.write(json.dumps({"_id": p.id, "title": p.title, "text": p.text}) + "\n")
    with open(files.queries, "w", encoding="utf-8") as fh:
        for q in ds.queries.values():
            fh.write(json.dumps({"_id": q.id, "text": q.text}) + "\n")
    with open(files.qrels, "w", encoding="utf-8") as fh:
        for qid, judged in ds.qrels.items():
            for pid, grade in judged.items():
                fh.write(f"{qid} 0 {pid} {grade}\n")
    write_run(
        [Ranking.from_scored(qid, [(c.passage_id, c.first_stage_score) for c in cands], "first") for qid, cands in ds.candidates.items()],
        "first",
        files.run,
    )
    return files
