"""Shared fixtures: tiny hand-built datasets and the acceptance pipeline.

The acceptance corpus, trained model, retrained model, and reference
unlearning runs are session-scoped; they are the expensive artifacts
that several test modules compare against.
"""

import pytest

from numur import (CorpusSplit, Dataset, Document, ForgetSpec, Label, Query,
                   RemovalKind, Sample, SyntheticConfig, TrainConfig,
                   generate_synthetic, partition, retrain, train)
from numur.partition import sample_forget_spec

ACCEPT_CORPUS = SyntheticConfig(n_queries=64, n_docs=256, vocab_size=512,
                                positives_per_query=2, pool_size=100,
                                entanglement_rate=0.5, test_fraction=0.2, seed=7)
ACCEPT_TRAIN = TrainConfig(learning_rate=0.05, epochs=30, margin=1.0, seed=7,
                           negatives_per_positive=4, dim=16)
ACCEPT_UNLEARN_LR = 0.5
ACCEPT_MAX_EPOCHS = 200


def build_dataset(samples, pools, vocab_size=32, extra_docs=()):
    """Assemble a valid Dataset from (query_id, doc_id, label) triples."""
    queries = {}
    documents = {}
    token = [0]

    def next_token():
        token[0] = (token[0] + 1) % vocab_size
        return token[0]

    sample_objs = []
    for qid, did, label in samples:
        if qid not in queries:
            queries[qid] = Query(qid, (next_token(), next_token()))
        if did not in documents:
            documents[did] = Document(did, (next_token(), next_token()))
        sample_objs.append(Sample(qid, did, Label.POSITIVE if label else Label.NEGATIVE))
    for did in extra_docs:
        if did not in documents:
            documents[did] = Document(did, (next_token(), next_token()))
    for qid, docs in pools.items():
        if qid not in queries:
            queries[qid] = Query(qid, (next_token(), next_token()))
        for did in docs:
            if did not in documents:
                documents[did] = Document(did, (next_token(), next_token()))
    ds = Dataset(queries=queries, documents=documents, samples=sample_objs,
                 pools={q: tuple(p) for q, p in pools.items()}, vocab_size=vocab_size)
    ds.validate()
    return ds


def figure_case_dataset():
    """Seven samples over five queries and five docs; d2 is relevant to three queries."""
    triples = [("q1", "d1", 1), ("q1", "d2", 1), ("q2", "d2", 1), ("q3", "d2", 1),
               ("q4", "d3", 1), ("q4", "d4", 1), ("q5", "d5", 1)]
    pools = {"q1": ["d1", "d2"], "q2": ["d2"], "q3": ["d2"],
             "q4": ["d3", "d4"], "q5": ["d5"]}
    return build_dataset(triples, pools)


@pytest.fixture
def figure_case():
    return figure_case_dataset()


@pytest.fixture(scope="session")
def accept_split() -> CorpusSplit:
    return generate_synthetic(ACCEPT_CORPUS)


@pytest.fixture(scope="session")
def accept_spec(accept_split) -> ForgetSpec:
    return sample_forget_spec(accept_split.train, RemovalKind.DOCUMENT, 0.25, seed=7)


@pytest.fixture(scope="session")
def accept_partition(accept_split, accept_spec):
    return partition(accept_split.train, accept_spec)


@pytest.fixture(scope="session")
def accept_train_result(accept_split):
    return train(accept_split, ACCEPT_TRAIN)


@pytest.fixture(scope="session")
def accept_model(accept_train_result):
    return accept_train_result.model


@pytest.fixture(scope="session")
def accept_retrain_result(accept_split, accept_partition):
    return retrain(accept_split, ACCEPT_TRAIN, accept_partition)
