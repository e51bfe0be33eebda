"""Ranking evaluation: reciprocal-rank metrics, timings, score summaries.

Reciprocal ranks are computed against each query's full candidate pool,
sorted by descending score with ties broken by ascending doc id. Under
query removal the target is the first relevant (positive) document;
under document removal it is the first document named for removal,
whatever its label. Queries whose target never appears in their pool
are excluded from the mean and counted separately.

Per-query work can be spread over threads by setting NUMUR_THREADS > 1;
results are reduced in query order either way, so reports do not depend
on the thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .corpus import Dataset, Label, Sample
from .errors import ConfigError, DataError
from .partition import ForgetSpec, Partition, RemovalKind
from .ranker import ScoreModel, score_pool

MRR_EMPTY = 0.0


@dataclass(frozen=True)
class RankedList:
    query_id: str
    doc_ids: tuple[str, ...]


@dataclass(frozen=True)
class MrrResult:
    value: float
    evaluated: int
    skipped: int

    def __float__(self) -> float:
        return self.value


@dataclass
class MetricsReport:
    mrr_forget: float
    mrr_entangled: float
    mrr_disjoint: float
    mrr_test: float
    normalized_forget: float | None = None
    normalized_epoch_duration: float | None = None
    total_unlearn_time: float | None = None
    epochs_run: int = 0
    stopped_early: bool = False
    edited_params: int = 0
    skipped_forget_queries: int = 0


@dataclass(frozen=True)
class ScoreDistribution:
    model_name: str
    set_name: str
    count: int
    min: float
    max: float
    mean: float
    deciles: tuple[float, ...]  # 10th through 90th percentile


def _max_threads() -> int:
    raw = os.environ.get("NUMUR_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _map_queries(fn, query_ids: list[str]) -> list:
    threads = min(_max_threads(), len(query_ids)) if query_ids else 1
    if threads <= 1:
        return [fn(qid) for qid in query_ids]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, query_ids))


def rank(model: ScoreModel, dataset: Dataset, query_id: str) -> RankedList:
    """The query's pool sorted by descending score, ties by ascending doc id."""
    if query_id not in dataset.queries:
        raise DataError(f"unknown query id {query_id!r}")
    pool = dataset.pools.get(query_id)
    if not pool:
        raise DataError(f"query {query_id!r} has an empty pool")
    scores = score_pool(model, dataset, query_id)
    order = sorted(range(len(pool)), key=lambda i: (-scores[i], pool[i]))
    return RankedList(query_id=query_id, doc_ids=tuple(pool[i] for i in order))


def _first_rank(ranking: RankedList, targets: set[str]) -> int | None:
    for position, did in enumerate(ranking.doc_ids, start=1):
        if did in targets:
            return position
    return None


def _mean_reciprocal(per_query_targets: dict[str, set[str]], model: ScoreModel,
                     dataset: Dataset) -> MrrResult:
    qids = sorted(per_query_targets)
    ranks = _map_queries(
        lambda qid: _first_rank(rank(model, dataset, qid), per_query_targets[qid]), qids)
    reciprocals = [1.0 / r for r in ranks if r is not None]
    skipped = sum(1 for r in ranks if r is None)
    if not reciprocals:
        return MrrResult(value=MRR_EMPTY, evaluated=0, skipped=skipped)
    return MrrResult(value=sum(reciprocals) / len(reciprocals),
                     evaluated=len(reciprocals), skipped=skipped)


def mrr_forget(model: ScoreModel, dataset: Dataset, part: Partition,
               spec: ForgetSpec) -> MrrResult:
    """Mean reciprocal rank over the distinct queries of the forget set.

    Query removal targets the first positive document of the query;
    document removal targets the first document named for removal.
    """
    if not part.forget_queries:
        raise ConfigError("forget set contains no queries")
    targets: dict[str, set[str]] = {}
    for qid in part.forget_queries:
        if spec.kind is RemovalKind.DOCUMENT:
            targets[qid] = {did for did in dataset.pools.get(qid, ()) if did in spec.ids}
        else:
            targets[qid] = set(dataset.positives_of(qid))
    return _mean_reciprocal(targets, model, dataset)


def mrr_set(model: ScoreModel, dataset: Dataset, samples: list[Sample]) -> MrrResult:
    """Mean reciprocal rank of the first positive doc, per query, within `samples`.

    Relevance is restricted to the positive-labelled docs a query has in
    `samples`; the ranking is over the query's full pool. Queries with
    no positive in `samples` are skipped.
    """
    positives: dict[str, set[str]] = {}
    for s in samples:
        if s.label is Label.POSITIVE:
            positives.setdefault(s.query_id, set()).add(s.doc_id)
    queries_seen = {s.query_id for s in samples}
    skipped_no_positive = len(queries_seen - set(positives))
    if not positives:
        return MrrResult(value=MRR_EMPTY, evaluated=0, skipped=skipped_no_positive)
    result = _mean_reciprocal(positives, model, dataset)
    return MrrResult(value=result.value, evaluated=result.evaluated,
                     skipped=result.skipped + skipped_no_positive)


def normalized_forget_score(mrr_forget_unlearn: float, mrr_test_retrain: float) -> float:
    """1 - |forget MRR of the unlearned model - test MRR of the retrained model|."""
    return 1.0 - abs(mrr_forget_unlearn - mrr_test_retrain)


def normalized_forget(run, retrain_report: MetricsReport) -> float:
    """Closeness of an unlearning run's final forget MRR to the retrained test MRR."""
    final = run.trajectory[-1].mrr_forget
    return normalized_forget_score(final, retrain_report.mrr_test)


def timing_metrics(train_epoch_times: list[float], unlearn_epoch_times: list[float],
                   epochs_run: int) -> dict[str, float]:
    """Unlearn epoch duration relative to a training epoch, and the total cost."""
    if not train_epoch_times or not unlearn_epoch_times:
        raise ConfigError("timing metrics need at least one epoch time on each side")
    normalized = (sum(unlearn_epoch_times) / len(unlearn_epoch_times)) / \
        (sum(train_epoch_times) / len(train_epoch_times))
    return {
        "normalized_epoch_duration": normalized,
        "total_unlearn_time": normalized * epochs_run,
    }


def score_distribution(models: list[tuple[str, ScoreModel]], dataset: Dataset,
                       sets: list[tuple[str, list[Sample]]]) -> list[ScoreDistribution]:
    """Per (model, sample set): min/max/mean and deciles of pair scores."""
    from .ranker import forward

    out: list[ScoreDistribution] = []
    for model_name, model in models:
        for set_name, samples in sets:
            scores = np.array([forward(model, dataset, s.query_id, s.doc_id)
                               for s in samples])
            if scores.size == 0:
                out.append(ScoreDistribution(model_name, set_name, 0, 0.0, 0.0, 0.0,
                                             tuple(0.0 for _ in range(9))))
                continue
            deciles = np.percentile(scores, np.arange(10, 100, 10))
            out.append(ScoreDistribution(
                model_name=model_name, set_name=set_name, count=int(scores.size),
                min=float(scores.min()), max=float(scores.max()),
                mean=float(scores.mean()), deciles=tuple(float(x) for x in deciles)))
    return out
