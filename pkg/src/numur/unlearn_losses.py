"""Ratio-form teacher-student losses driving the unlearning updates.

All losses compare a frozen teacher's relevance scores with the mutable
student's through the bounded discrepancy

    delta = (teacher - student) / (teacher + student)   in (-1, 1)

which is well defined because the scorer is strictly positive. The
contrastive loss pushes a forget pair's score down toward the teacher's
per-query minimum while pinning one entangled partner to the teacher;
the consistent loss pins a (positive, negative) pair of untouched
samples. Gradients are exact, with subgradient 0 at the ReLU and
absolute-value kinks so the zero-loss state is a fixed point.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import Dataset, Label, Sample
from .errors import ConfigError
from .ranker import GradientBuffer, ScoreModel, TeacherSnapshot, backward_score, forward


@dataclass(frozen=True)
class DeltaValue:
    value: float
    teacher_score: float
    student_score: float


@dataclass(frozen=True)
class TeacherMinCache:
    """Per-query minimum of the teacher's scores over that query's samples."""

    min_scores: dict[str, float]

    def score_floor(self, query_id: str) -> float:
        try:
            return self.min_scores[query_id]
        except KeyError:
            raise ConfigError(f"no cached teacher minimum for query {query_id!r}") from None


def delta(teacher: TeacherSnapshot, student: ScoreModel, dataset: Dataset,
          pair: Sample) -> DeltaValue:
    """Bounded discrepancy between teacher and student on one pair."""
    f_m = forward(teacher, dataset, pair.query_id, pair.doc_id)
    f_w = forward(student, dataset, pair.query_id, pair.doc_id)
    return DeltaValue(value=(f_m - f_w) / (f_m + f_w), teacher_score=f_m,
                      student_score=f_w)


def build_min_cache(teacher: TeacherSnapshot, dataset: Dataset) -> TeacherMinCache:
    """Minimum teacher score per query over all of the query's samples."""
    mins: dict[str, float] = {}
    for s in dataset.samples:
        score = forward(teacher, dataset, s.query_id, s.doc_id)
        if s.query_id not in mins or score < mins[s.query_id]:
            mins[s.query_id] = score
    return TeacherMinCache(min_scores=mins)


def delta_min(cache: TeacherMinCache, student: ScoreModel, dataset: Dataset,
              forget_pair: Sample) -> float:
    """(student - floor) / (student + floor): positive while the score sits above it."""
    floor = cache.score_floor(forget_pair.query_id)
    f_w = forward(student, dataset, forget_pair.query_id, forget_pair.doc_id)
    return (f_w - floor) / (f_w + floor)


def _abs_delta_with_grad(teacher: TeacherSnapshot, student: ScoreModel, dataset: Dataset,
                         pair: Sample, buf: GradientBuffer | None) -> float:
    """|delta(pair)| and its gradient wrt the student."""
    d = delta(teacher, student, dataset, pair)
    if buf is not None and d.value != 0.0:
        total = d.teacher_score + d.student_score
        d_delta_d_fw = -2.0 * d.teacher_score / (total * total)
        sign = 1.0 if d.value > 0.0 else -1.0
        backward_score(student, dataset, pair.query_id, pair.doc_id,
                       sign * d_delta_d_fw, buf)
    return abs(d.value)


def contrastive_loss(cache: TeacherMinCache, teacher: TeacherSnapshot,
                     student: ScoreModel, dataset: Dataset, forget_pair: Sample,
                     partner: Sample | None, buf: GradientBuffer | None = None) -> float:
    """relu(delta_min(forget_pair)) + |delta(partner)|, partner term 0 when absent.

    Suppresses the forget pair toward the teacher's per-query floor
    while keeping the sampled entangled partner at its teacher score.
    """
    if partner is not None and not (partner.query_id == forget_pair.query_id
                                    or partner.doc_id == forget_pair.doc_id):
        raise ConfigError(
            f"partner ({partner.query_id!r}, {partner.doc_id!r}) shares no id with "
            f"the forget pair ({forget_pair.query_id!r}, {forget_pair.doc_id!r})")

    adjusted = delta_min(cache, student, dataset, forget_pair)
    value = max(0.0, adjusted)
    if buf is not None and adjusted > 0.0:
        floor = cache.score_floor(forget_pair.query_id)
        f_w = forward(student, dataset, forget_pair.query_id, forget_pair.doc_id)
        denom = f_w + floor
        backward_score(student, dataset, forget_pair.query_id, forget_pair.doc_id,
                       2.0 * floor / (denom * denom), buf)
    if partner is not None:
        value += _abs_delta_with_grad(teacher, student, dataset, partner, buf)
    return value


def consistent_loss(teacher: TeacherSnapshot, student: ScoreModel, dataset: Dataset,
                    pos_pair: Sample, neg_pair: Sample,
                    buf: GradientBuffer | None = None) -> float:
    """|delta(pos_pair)| + |delta(neg_pair)|: pins both pairs to the teacher."""
    if pos_pair.label is not Label.POSITIVE:
        raise ConfigError(
            f"pos_pair ({pos_pair.query_id!r}, {pos_pair.doc_id!r}) is not positive")
    if neg_pair.label is not Label.NEGATIVE:
        raise ConfigError(
            f"neg_pair ({neg_pair.query_id!r}, {neg_pair.doc_id!r}) is not negative")
    return (_abs_delta_with_grad(teacher, student, dataset, pos_pair, buf)
            + _abs_delta_with_grad(teacher, student, dataset, neg_pair, buf))


def abs_delta_loss(teacher: TeacherSnapshot, student: ScoreModel, dataset: Dataset,
                   pair: Sample, buf: GradientBuffer | None = None) -> float:
    """|delta(pair)| with gradients; the single-pair distillation building block."""
    return _abs_delta_with_grad(teacher, student, dataset, pair, buf)
