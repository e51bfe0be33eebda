"""Unlearning strategies with a shared rank-targeted stopping rule.

Every iterative strategy starts from a copy of the trained model and
runs epochs until the forget-set mean reciprocal rank drops to the
target, or the epoch budget runs out. The target is checked before the
first epoch too, so an already-satisfied request costs zero epochs.

Strategies:

- cocol: contrastive suppression of forget pairs toward the teacher's
  per-query score floor, each paired with a sampled entangled partner,
  then a consistency pass pinning disjoint pairs to the teacher.
- cf: keep training on the retained samples only and let the forget
  pairs decay on their own.
- amnesiac: for each forget positive, push a sampled pool negative
  above it; keep ordinary training on the entangled set.
- neggrad: gradient ascent of the training loss on the forget samples.
- ssd: one-shot dampening of parameters far more important to the
  forget set than to the full training set.
- badt: distill the forget set toward a randomly initialised teacher
  and everything else toward the trained teacher.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .corpus import CorpusSplit, Label, Sample
from .errors import ConfigError
from .evaluation import mrr_forget, mrr_set
from .partition import Partition, entangled_partners
from .ranker import (ScoreModel, apply_gradients, clone_model,
                     hinge_loss_and_grad, init_model, new_buffer, pairwise_epoch,
                     pool_negatives, snapshot)
from .unlearn_losses import (abs_delta_loss, build_min_cache, consistent_loss,
                             contrastive_loss)


class Method(enum.Enum):
    COCOL = "cocol"
    CF = "cf"
    AMNESIAC = "amnesiac"
    NEGGRAD = "neggrad"
    SSD = "ssd"
    BADT = "badt"


@dataclass(frozen=True)
class UnlearnConfig:
    delta_target: float = 0.5
    max_epochs: int = 200
    learning_rate: float = 0.5
    seed: int = 7
    check_every: int = 1
    method: Method = Method.COCOL
    method_params: dict = field(default_factory=dict)
    log_touched: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.delta_target <= 1.0:
            raise ConfigError("delta_target must lie in (0, 1]")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be at least 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.check_every < 1:
            raise ConfigError("check_every must be at least 1")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    mrr_forget: float
    mrr_entangled: float
    mrr_disjoint: float
    mrr_test: float
    epoch_wall_time: float


@dataclass
class UnlearnRun:
    final_model: ScoreModel
    epochs_run: int
    stopped_early: bool
    trajectory: list[EpochRecord]
    method: Method
    epoch_times: list[float] = field(default_factory=list)
    edited_params: int = 0
    touched: list[tuple[str, str, str]] = field(default_factory=list)


@dataclass(frozen=True)
class Destinations:
    d1: float  # retrained model's forget-set MRR
    d2: float  # retrained model's test MRR
    d3: float  # half of d2


def swap_labels(samples: list[Sample]) -> list[Sample]:
    """Positive becomes negative and vice versa; applying twice restores the input."""
    flip = {Label.POSITIVE: Label.NEGATIVE, Label.NEGATIVE: Label.POSITIVE}
    return [Sample(s.query_id, s.doc_id, flip[s.label]) for s in samples]


def _require(cfg: UnlearnConfig, method: Method) -> None:
    if cfg.method is not method:
        raise ConfigError(f"config method is {cfg.method.value!r}, expected {method.value!r}")


def _param(cfg: UnlearnConfig, key: str, default: float) -> float:
    return float(cfg.method_params.get(key, default))


def _evaluate(student: ScoreModel, split: CorpusSplit, part: Partition,
              epoch: int, wall: float) -> EpochRecord:
    return EpochRecord(
        epoch=epoch,
        mrr_forget=mrr_forget(student, split.train, part, part.spec).value,
        mrr_entangled=mrr_set(student, split.train, part.entangled).value,
        mrr_disjoint=mrr_set(student, split.train, part.disjoint).value,
        mrr_test=mrr_set(student, split.test, split.test.samples).value,
        epoch_wall_time=wall,
    )


def _drive(student: ScoreModel, split: CorpusSplit, part: Partition, cfg: UnlearnConfig,
           epoch_fn, touched: list[tuple[str, str, str]]) -> UnlearnRun:
    """Run epoch_fn until the forget MRR reaches the target or the budget ends."""
    rng = np.random.default_rng(cfg.seed)
    records = [_evaluate(student, split, part, 0, 0.0)]
    epoch_times: list[float] = []
    stopped = records[0].mrr_forget <= cfg.delta_target
    epochs_run = 0
    if not stopped:
        for epoch in range(1, cfg.max_epochs + 1):
            t0 = time.perf_counter()
            epoch_fn(student, rng)
            epoch_times.append(time.perf_counter() - t0)
            epochs_run = epoch
            if epoch % cfg.check_every == 0 or epoch == cfg.max_epochs:
                record = _evaluate(student, split, part, epoch, epoch_times[-1])
                records.append(record)
                if record.mrr_forget <= cfg.delta_target:
                    stopped = True
                    break
    return UnlearnRun(final_model=student, epochs_run=epochs_run, stopped_early=stopped,
                      trajectory=records, method=cfg.method, epoch_times=epoch_times,
                      touched=touched)


def cocol_unlearn(m_train: ScoreModel, split: CorpusSplit, part: Partition,
                  cfg: UnlearnConfig) -> UnlearnRun:
    """Contrastive pass over the forget set, consistency pass over the disjoint set.

    method_params: entangled_term / phase2 (bools) switch the partner
    term and the consistency pass off for ablation runs.
    """
    _require(cfg, Method.COCOL)
    if not part.forget:
        raise ConfigError("forget set is empty")
    use_entangled = bool(cfg.method_params.get("entangled_term", True))
    use_phase2 = bool(cfg.method_params.get("phase2", True))

    teacher = snapshot(m_train)
    cache = build_min_cache(teacher, split.train)
    partners = [entangled_partners(part, x) for x in part.forget]
    d_pos = [s for s in part.disjoint if s.label is Label.POSITIVE]
    d_neg = [s for s in part.disjoint if s.label is Label.NEGATIVE]
    if use_phase2 and (not d_pos or not d_neg):
        raise ConfigError("disjoint set lacks positives or negatives for the "
                          "consistency pass")

    student = clone_model(m_train)
    buf = new_buffer(student)
    touched: list[tuple[str, str, str]] = []

    def epoch(model: ScoreModel, rng: np.random.Generator) -> None:
        for i in rng.permutation(len(part.forget)):
            x = part.forget[int(i)]
            options = partners[int(i)]
            partner = None
            if options and use_entangled:
                partner = options[int(rng.integers(len(options)))]
            buf.zero()
            contrastive_loss(cache, teacher, model, split.train, x, partner, buf)
            apply_gradients(model, buf, cfg.learning_rate)
            if cfg.log_touched:
                touched.append(("phase1", x.query_id, x.doc_id))
        if not use_phase2:
            return
        for i in rng.permutation(len(part.disjoint)):
            s = part.disjoint[int(i)]
            if s.label is Label.POSITIVE:
                pos, neg = s, d_neg[int(rng.integers(len(d_neg)))]
            else:
                pos, neg = d_pos[int(rng.integers(len(d_pos)))], s
            buf.zero()
            consistent_loss(teacher, model, split.train, pos, neg, buf)
            apply_gradients(model, buf, cfg.learning_rate)
            if cfg.log_touched:
                touched.append(("phase2", s.query_id, s.doc_id))

    return _drive(student, split, part, cfg, epoch, touched)


def cf_unlearn(m_train: ScoreModel, split: CorpusSplit, part: Partition,
               cfg: UnlearnConfig) -> UnlearnRun:
    """Keep training on retained samples; forgetting happens only by drift."""
    _require(cfg, Method.CF)
    if not part.forget:
        raise ConfigError("forget set is empty")
    margin = _param(cfg, "margin", 1.0)
    npp = int(_param(cfg, "negatives_per_positive", 4))
    retained = [s for s in split.train.samples if not part.is_forgotten(s)]

    student = clone_model(m_train)
    buf = new_buffer(student)
    touched: list[tuple[str, str, str]] = []

    def epoch(model: ScoreModel, rng: np.random.Generator) -> None:
        raw: list[tuple[str, str]] | None = [] if cfg.log_touched else None
        pairwise_epoch(model, split.train, retained, rng, cfg.learning_rate,
                       margin, npp, buf, raw)
        if raw is not None:
            touched.extend(("retain", q, d) for q, d in raw)

    return _drive(student, split, part, cfg, epoch, touched)


def amnesiac_unlearn(m_train: ScoreModel, split: CorpusSplit, part: Partition,
                     cfg: UnlearnConfig) -> UnlearnRun:
    """Push sampled pool negatives above each forget positive; train the entangled set."""
    _require(cfg, Method.AMNESIAC)
    if not part.forget:
        raise ConfigError("forget set is empty")
    margin = _param(cfg, "margin", 1.0)
    npp = int(_param(cfg, "negatives_per_positive", 4))

    train_positives: dict[str, set[str]] = {}
    for s in split.train.samples:
        if s.label is Label.POSITIVE:
            train_positives.setdefault(s.query_id, set()).add(s.doc_id)

    forget_pos = [s for s in part.forget if s.label is Label.POSITIVE]
    ent_pos = [s for s in part.entangled if s.label is Label.POSITIVE]
    negatives: dict[str, list[str]] = {}
    for s in forget_pos + ent_pos:
        if s.query_id not in negatives:
            negs = pool_negatives(split.train, s.query_id,
                                  train_positives.get(s.query_id, set()))
            if not negs:
                raise ConfigError(f"forget query {s.query_id!r} has no pool negatives "
                                  "to promote")
            negatives[s.query_id] = negs

    tasks = [("forget", s) for s in forget_pos] + [("retain", s) for s in ent_pos]
    student = clone_model(m_train)
    buf = new_buffer(student)
    touched: list[tuple[str, str, str]] = []

    def epoch(model: ScoreModel, rng: np.random.Generator) -> None:
        for i in rng.permutation(len(tasks)):
            tag, s = tasks[int(i)]
            negs = negatives[s.query_id]
            if tag == "forget":
                promoted = negs[int(rng.integers(len(negs)))]
                buf.zero()
                hinge_loss_and_grad(model, split.train, s.query_id, promoted,
                                    s.doc_id, margin, buf)
                apply_gradients(model, buf, cfg.learning_rate)
            else:
                for _ in range(npp):
                    neg = negs[int(rng.integers(len(negs)))]
                    buf.zero()
                    hinge_loss_and_grad(model, split.train, s.query_id, s.doc_id,
                                        neg, margin, buf)
                    apply_gradients(model, buf, cfg.learning_rate)
            if cfg.log_touched:
                touched.append((tag, s.query_id, s.doc_id))

    return _drive(student, split, part, cfg, epoch, touched)


def neggrad_unlearn(m_train: ScoreModel, split: CorpusSplit, part: Partition,
                    cfg: UnlearnConfig) -> UnlearnRun:
    """Ascend the pairwise training loss on the forget samples."""
    _require(cfg, Method.NEGGRAD)
    if not part.forget:
        raise ConfigError("forget set is empty")
    margin = _param(cfg, "margin", 1.0)
    npp = int(_param(cfg, "negatives_per_positive", 4))

    train_positives: dict[str, set[str]] = {}
    for s in split.train.samples:
        if s.label is Label.POSITIVE:
            train_positives.setdefault(s.query_id, set()).add(s.doc_id)
    forget_pos = [s for s in part.forget if s.label is Label.POSITIVE]
    negatives = {s.query_id: pool_negatives(split.train, s.query_id,
                                            train_positives.get(s.query_id, set()))
                 for s in forget_pos}

    student = clone_model(m_train)
    buf = new_buffer(student)
    touched: list[tuple[str, str, str]] = []

    def epoch(model: ScoreModel, rng: np.random.Generator) -> None:
        for i in rng.permutation(len(forget_pos)):
            s = forget_pos[int(i)]
            negs = negatives[s.query_id]
            if not negs:
                continue
            for _ in range(npp):
                neg = negs[int(rng.integers(len(negs)))]
                buf.zero()
                hinge_loss_and_grad(model, split.train, s.query_id, s.doc_id, neg,
                                    margin, buf)
                apply_gradients(model, buf, -cfg.learning_rate)
            if cfg.log_touched:
                touched.append(("ascent", s.query_id, s.doc_id))

    return _drive(student, split, part, cfg, epoch, touched)


def ssd_unlearn(m_train: ScoreModel, split: CorpusSplit, part: Partition,
                cfg: UnlearnConfig) -> UnlearnRun:
    """One-shot dampening of parameters whose forget-set importance dominates.

    Importance is the mean squared training-loss gradient per parameter.
    Where the forget importance exceeds alpha times the full-set
    importance, the parameter is scaled by min(lambda * ratio, 1).
    """
    _require(cfg, Method.SSD)
    if not part.forget:
        raise ConfigError("forget set is empty")
    alpha = _param(cfg, "alpha", 10.0)
    lam = _param(cfg, "lambda", 1.0)
    if alpha <= 1.0 or lam <= 0.0:
        raise ConfigError("ssd needs alpha > 1 and lambda > 0")
    margin = _param(cfg, "margin", 1.0)
    npp = int(_param(cfg, "negatives_per_positive", 4))

    rng = np.random.default_rng(cfg.seed)
    imp_f = _importance(m_train, split, part.forget, margin, npp, rng)
    imp_s = _importance(m_train, split, split.train.samples, margin, npp, rng)

    student = clone_model(m_train)
    edited = 0
    t0 = time.perf_counter()
    for table, f_table, s_table in (
            (student.embed_q, imp_f[0], imp_s[0]),
            (student.embed_d, imp_f[1], imp_s[1])):
        # Zero full-set importance gives no evidence for a ratio; leave
        # those parameters alone so a huge lambda is exactly the identity.
        mask = (f_table > alpha * s_table) & (s_table > 0.0)
        factors = np.ones_like(table)
        factors[mask] = np.minimum(lam * s_table[mask] / f_table[mask], 1.0)
        table *= factors
        edited += int(mask.sum())
    wall = time.perf_counter() - t0

    record = _evaluate(student, split, part, 0, wall)
    return UnlearnRun(final_model=student, epochs_run=0,
                      stopped_early=record.mrr_forget <= cfg.delta_target,
                      trajectory=[record], method=cfg.method, epoch_times=[wall],
                      edited_params=edited)


def _importance(model: ScoreModel, split: CorpusSplit, samples: list[Sample],
                margin: float, npp: int, rng: np.random.Generator):
    """Mean squared per-sample gradient of the pairwise loss, per parameter."""
    train_positives: dict[str, set[str]] = {}
    for s in split.train.samples:
        if s.label is Label.POSITIVE:
            train_positives.setdefault(s.query_id, set()).add(s.doc_id)

    sq_q = np.zeros_like(model.embed_q)
    sq_d = np.zeros_like(model.embed_d)
    buf = new_buffer(model)
    count = 0
    for s in samples:
        if s.label is not Label.POSITIVE:
            continue
        negs = pool_negatives(split.train, s.query_id,
                              train_positives.get(s.query_id, set()))
        if not negs:
            continue
        buf.zero()
        for _ in range(npp):
            neg = negs[int(rng.integers(len(negs)))]
            hinge_loss_and_grad(model, split.train, s.query_id, s.doc_id, neg,
                                margin, buf)
        rows_q, rows_d = list(buf.rows_q), list(buf.rows_d)
        if rows_q:
            sq_q[rows_q] += (buf.grad_q[rows_q] / npp) ** 2
        if rows_d:
            sq_d[rows_d] += (buf.grad_d[rows_d] / npp) ** 2
        count += 1
    if count:
        sq_q /= count
        sq_d /= count
    return sq_q, sq_d


def badt_unlearn(m_train: ScoreModel, split: CorpusSplit, part: Partition,
                 cfg: UnlearnConfig) -> UnlearnRun:
    """Distill the forget set toward a random teacher, the rest toward the trained one."""
    _require(cfg, Method.BADT)
    if not part.forget:
        raise ConfigError("forget set is empty")
    bad_teacher = snapshot(init_model(m_train.vocab_size, m_train.dim, cfg.seed))
    good_teacher = snapshot(m_train)
    retained = [s for s in split.train.samples if not part.is_forgotten(s)]

    student = clone_model(m_train)
    buf = new_buffer(student)
    touched: list[tuple[str, str, str]] = []

    def epoch(model: ScoreModel, rng: np.random.Generator) -> None:
        for i in rng.permutation(len(part.forget)):
            x = part.forget[int(i)]
            buf.zero()
            abs_delta_loss(bad_teacher, model, split.train, x, buf)
            apply_gradients(model, buf, cfg.learning_rate)
            if cfg.log_touched:
                touched.append(("bad", x.query_id, x.doc_id))
        for i in rng.permutation(len(retained)):
            x = retained[int(i)]
            buf.zero()
            abs_delta_loss(good_teacher, model, split.train, x, buf)
            apply_gradients(model, buf, cfg.learning_rate)
            if cfg.log_touched:
                touched.append(("good", x.query_id, x.doc_id))

    return _drive(student, split, part, cfg, epoch, touched)


_DISPATCH = {
    Method.COCOL: cocol_unlearn,
    Method.CF: cf_unlearn,
    Method.AMNESIAC: amnesiac_unlearn,
    Method.NEGGRAD: neggrad_unlearn,
    Method.SSD: ssd_unlearn,
    Method.BADT: badt_unlearn,
}


def unlearn(m_train: ScoreModel, split: CorpusSplit, part: Partition,
            cfg: UnlearnConfig) -> UnlearnRun:
    """Run the strategy named by cfg.method."""
    return _DISPATCH[cfg.method](m_train, split, part, cfg)


def compute_destinations(m_retrain: ScoreModel, split: CorpusSplit,
                         part: Partition) -> Destinations:
    """Stopping targets derived from the retrained model."""
    d1 = mrr_forget(m_retrain, split.train, part, part.spec).value
    d2 = mrr_set(m_retrain, split.test, split.test.samples).value
    return Destinations(d1=d1, d2=d2, d3=d2 / 2.0)
