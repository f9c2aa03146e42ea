"""Edit-level precision/recall/F-beta scoring.

Hypothesis edits are matched against reference edits by exact
(start, end, replacement) equality.  With multiple annotators the scorer
greedily picks, per sentence, the annotator that maximizes the running
corpus F-beta, ties broken toward the lowest annotator id.  Corpus-level
scores are always computed from summed counts, never averaged per sentence.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable

from .align import Edit, OpType, TokenSeq, extract_edits


class DomainError(ValueError):
    """An F-beta input fell outside its domain."""


class EmptyCorpusError(ValueError):
    """score_corpus received zero records."""


@dataclass
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @property
    def precision(self) -> float:
        # Zero convention: no proposals at all counts as perfect precision.
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 1.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 1.0


def fbeta(p: float, r: float, beta: float = 0.5) -> float:
    """(1 + b^2) p r / (b^2 p + r), with 0 when both p and r are 0."""
    if not (0.0 <= p <= 1.0 and 0.0 <= r <= 1.0):
        raise DomainError(f"precision/recall outside [0, 1]: {p}, {r}")
    if beta <= 0:
        raise DomainError(f"beta must be positive, got {beta}")
    if p == 0.0 and r == 0.0:
        return 0.0
    b2 = beta * beta
    return (1.0 + b2) * p * r / (b2 * p + r)


def match_edits(hyp: list[Edit], ref: list[Edit]) -> Counts:
    """Exact-match set arithmetic: tp = |hyp & ref|, fp = |hyp \\ ref|, fn = |ref \\ hyp|."""
    hyp_keys = {e.key for e in hyp}
    ref_keys = {e.key for e in ref}
    tp = len(hyp_keys & ref_keys)
    return Counts(tp=tp, fp=len(hyp_keys - ref_keys), fn=len(ref_keys - hyp_keys))


def match_edits_by_type(hyp: list[Edit], ref: list[Edit]) -> dict[OpType, Counts]:
    """Per-op-type counts; values sum to match_edits(hyp, ref)."""
    hyp_keys = {e.key: e for e in hyp}
    ref_keys = {e.key: e for e in ref}
    out = {t: Counts() for t in OpType}
    for key, edit in hyp_keys.items():
        if key in ref_keys:
            out[edit.op_type].tp += 1
        else:
            out[edit.op_type].fp += 1
    for key, edit in ref_keys.items():
        if key not in hyp_keys:
            out[edit.op_type].fn += 1
    return out


@dataclass
class ScoreRecord:
    source: TokenSeq
    hypothesis: TokenSeq
    annotations: list[list[Edit]]


@dataclass
class ScoreReport:
    overall: Counts
    per_type: dict[OpType, Counts]
    beta: float = 0.5
    annotator_choices: list[int] = field(default_factory=list)

    @property
    def precision(self) -> float:
        return self.overall.precision

    @property
    def recall(self) -> float:
        return self.overall.recall

    @property
    def f_beta(self) -> float:
        return fbeta(self.precision, self.recall, self.beta)

    def to_dict(self) -> dict:
        def block(c: Counts) -> dict:
            return {
                "tp": c.tp,
                "fp": c.fp,
                "fn": c.fn,
                "precision": round(c.precision, 4),
                "recall": round(c.recall, 4),
                "f_beta": round(fbeta(c.precision, c.recall, self.beta), 4),
            }

        return {
            "beta": self.beta,
            "overall": block(self.overall),
            "per_type": {t.name.lower(): block(c) for t, c in self.per_type.items()},
        }

    def to_text(self) -> str:
        lines = [
            f"TP        : {self.overall.tp}",
            f"FP        : {self.overall.fp}",
            f"FN        : {self.overall.fn}",
            f"Precision : {self.precision:.4f} ({percent(self.precision)})",
            f"Recall    : {self.recall:.4f} ({percent(self.recall)})",
            f"F{self.beta:g}      : {self.f_beta:.4f} ({percent(self.f_beta)})",
            "",
            "Type         TP    FP    FN      P      R      F",
        ]
        for t in OpType:
            c = self.per_type[t]
            f = fbeta(c.precision, c.recall, self.beta)
            lines.append(
                f"{t.name.title():<11}{c.tp:>5} {c.fp:>5} {c.fn:>5} "
                f"{c.precision:>6.4f} {c.recall:>6.4f} {f:>6.4f}"
            )
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def percent(value: float) -> str:
    """Render a unit-interval value as a percentage with half-up rounding."""
    return str(Decimal(value * 100).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def score_corpus(records: Iterable[ScoreRecord], beta: float = 0.5) -> ScoreReport:
    """Accumulate counts over a corpus with greedy per-sentence annotator choice."""
    total = Counts()
    per_type = {t: Counts() for t in OpType}
    choices: list[int] = []
    seen = False
    for record in records:
        seen = True
        if not record.annotations:
            raise ValueError("record without annotations")
        hyp_edits = extract_edits(record.source, record.hypothesis)
        best_id = -1
        best_f = -1.0
        best_typed: dict[OpType, Counts] = {}
        for annotator_id, ref_edits in enumerate(record.annotations):
            typed = match_edits_by_type(hyp_edits, list(ref_edits))
            candidate = total
            for c in typed.values():
                candidate = candidate + c
            f = fbeta(candidate.precision, candidate.recall, beta)
            if f > best_f:
                best_f, best_id, best_typed = f, annotator_id, typed
        choices.append(best_id)
        for t, c in best_typed.items():
            per_type[t] = per_type[t] + c
            total = total + c
    if not seen:
        raise EmptyCorpusError("no records to score")
    return ScoreReport(overall=total, per_type=per_type, beta=beta, annotator_choices=choices)
