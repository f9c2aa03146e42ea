"""Edit-level system combination.

Edits pooled from k systems are featurized as type-conditioned vote bits
(3*k features), scored with a logistic regression trained by deterministic
full-batch gradient descent, filtered by an F-beta-tuned acceptance
threshold, and assembled into a conflict-free output edit set.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .align import Edit, OpType, TokenSeq, apply_edits, extract_edits
from .score import Counts, fbeta

FEATURE_LAYOUT = "type_x_votes_v1"
_OP_INDEX = {OpType.MISSING: 0, OpType.REPLACE: 1, OpType.UNNECESSARY: 2}


class DegenerateDataWarning(UserWarning):
    """All training labels were identical; threshold left at 0.5."""


@dataclass(frozen=True)
class EditCandidate:
    edit: Edit
    votes: tuple[int, ...]  # one bit per system

    def __post_init__(self) -> None:
        if not any(self.votes):
            raise ValueError("candidate without any vote")


@dataclass
class EnsembleRecord:
    source: TokenSeq
    hypotheses: list[TokenSeq]
    gold_edits: list[Edit]


@dataclass
class EnsembleModel:
    k: int
    beta: float
    weights: list[float]
    bias: float
    threshold: float
    degenerate: bool = False

    def to_json(self) -> str:
        return json.dumps(
            {
                "k": self.k,
                "beta": self.beta,
                "weights": self.weights,
                "bias": self.bias,
                "threshold": self.threshold,
                "degenerate": self.degenerate,
                "feature_layout": FEATURE_LAYOUT,
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "EnsembleModel":
        data = json.loads(text)
        if data.get("feature_layout") != FEATURE_LAYOUT:
            raise ValueError(f"unsupported feature layout {data.get('feature_layout')!r}")
        return cls(
            k=data["k"],
            beta=data["beta"],
            weights=list(data["weights"]),
            bias=data["bias"],
            threshold=data["threshold"],
            degenerate=data.get("degenerate", False),
        )


def pool_edits(source: TokenSeq, hypotheses: Sequence[TokenSeq]) -> list[EditCandidate]:
    """Union of per-system edit sets with votes OR-ed, sorted by span."""
    if not hypotheses:
        raise ValueError("need at least one hypothesis")
    k = len(hypotheses)
    votes: dict[Edit, list[int]] = {}
    for system, hyp in enumerate(hypotheses):
        for edit in extract_edits(source, hyp):
            votes.setdefault(edit, [0] * k)[system] = 1
    return [
        EditCandidate(edit, tuple(bits))
        for edit, bits in sorted(votes.items(), key=lambda item: item[0])
    ]


def featurize(candidate: EditCandidate, k: int) -> np.ndarray:
    """3*k vector: the op-type block holds the vote bits, other blocks zero."""
    if len(candidate.votes) != k:
        raise ValueError(f"vote vector length {len(candidate.votes)} != k={k}")
    out = np.zeros(3 * k)
    block = _OP_INDEX[candidate.edit.op_type]
    out[block * k : (block + 1) * k] = candidate.votes
    return out


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def _select_edits(scored: list[tuple[float, Edit]]) -> list[Edit]:
    """Greedy conflict resolution: descending probability, ties toward the
    smaller start then the shorter span.  Same-start insertions conflict."""
    order = sorted(scored, key=lambda item: (-item[0], item[1].start, item[1].end - item[1].start))
    accepted: list[Edit] = []
    for _prob, edit in order:
        if not any(_conflict(edit, kept) for kept in accepted):
            accepted.append(edit)
    return sorted(accepted)


def _conflict(a: Edit, b: Edit) -> bool:
    first, second = sorted((a, b), key=lambda e: (e.start, e.end))
    if first.end > second.start:
        return True
    # Insertions at the same position are order-ambiguous to apply together.
    return first.start == second.start and first.start == first.end == second.end


def _candidate_probs(
    records: Sequence[EnsembleRecord], model_weights: np.ndarray, bias: float, k: int
) -> list[list[tuple[float, Edit]]]:
    per_record = []
    for record in records:
        candidates = pool_edits(record.source, record.hypotheses)
        scored = []
        for cand in candidates:
            z = float(np.dot(featurize(cand, k), model_weights) + bias)
            scored.append((float(_sigmoid(np.array(z))), cand.edit))
        per_record.append(scored)
    return per_record


def _corpus_f_at_threshold(
    per_record: list[list[tuple[float, Edit]]],
    golds: list[list[Edit]],
    threshold: float,
    beta: float,
) -> float:
    total = Counts()
    for scored, gold in zip(per_record, golds):
        surviving = [(p, e) for p, e in scored if p >= threshold]
        applied = _select_edits(surviving)
        applied_keys = {e.key for e in applied}
        gold_keys = {e.key for e in gold}
        tp = len(applied_keys & gold_keys)
        total = total + Counts(tp, len(applied_keys - gold_keys), len(gold_keys - applied_keys))
    return fbeta(total.precision, total.recall, beta)


def train(
    dev: Iterable[EnsembleRecord],
    k: int,
    beta: float = 0.5,
    l2: float = 0.0,
    epochs: int = 300,
    lr: float = 0.5,
) -> EnsembleModel:
    """Fit edit-acceptance weights and tune the decision threshold on dev.

    Deterministic: full-batch gradient descent on binary cross-entropy +
    l2 * ||w||^2 from zero initialization, fixed epoch count; then the
    threshold maximizing corpus F-beta over the sorted set of predicted
    probabilities (ties toward the larger threshold).
    """
    records = list(dev)
    if not records:
        raise ValueError("dev stream is empty")

    rows: list[np.ndarray] = []
    labels: list[float] = []
    for record in records:
        gold_keys = {e.key for e in record.gold_edits}
        for cand in pool_edits(record.source, record.hypotheses):
            rows.append(featurize(cand, k))
            labels.append(1.0 if cand.edit.key in gold_keys else 0.0)

    w = np.zeros(3 * k)
    b = 0.0
    degenerate = not rows or len(set(labels)) < 2
    if rows:
        X = np.stack(rows)
        y = np.array(labels)
        n = len(y)
        for _ in range(epochs):
            p = _sigmoid(X @ w + b)
            residual = p - y
            w -= lr * (X.T @ residual / n + 2.0 * l2 * w)
            b -= lr * float(residual.mean())

    if degenerate:
        warnings.warn(
            "all candidate labels identical; threshold defaulted to 0.5",
            DegenerateDataWarning,
        )
        return EnsembleModel(k, beta, w.tolist(), b, 0.5, degenerate=True)

    per_record = _candidate_probs(records, w, b, k)
    golds = [r.gold_edits for r in records]
    candidate_thresholds = sorted({p for scored in per_record for p, _ in scored})
    best_t, best_f = 0.5, -1.0
    for t in candidate_thresholds:
        f = _corpus_f_at_threshold(per_record, golds, t, beta)
        if f >= best_f:
            best_t, best_f = t, f
    return EnsembleModel(k, beta, w.tolist(), b, best_t)


def combine(source: TokenSeq, hypotheses: Sequence[TokenSeq], model: EnsembleModel) -> TokenSeq:
    """Score pooled candidates and apply the surviving conflict-free edit set."""
    if len(hypotheses) != model.k:
        raise ValueError(f"expected {model.k} hypotheses, got {len(hypotheses)}")
    w = np.asarray(model.weights)
    scored = []
    for cand in pool_edits(source, hypotheses):
        prob = float(_sigmoid(np.array(featurize(cand, model.k) @ w + model.bias)))
        if prob >= model.threshold:
            scored.append((prob, cand.edit))
    return apply_edits(source, _select_edits(scored))


class EditCombiner:
    """Estimator-style wrapper: fit on dev records, predict combined sentences."""

    def __init__(self, k: int = 3, beta: float = 0.5, l2: float = 0.0, epochs: int = 300, lr: float = 0.5):
        self.k = k
        self.beta = beta
        self.l2 = l2
        self.epochs = epochs
        self.lr = lr

    def get_params(self, deep: bool = True) -> dict:
        return {"k": self.k, "beta": self.beta, "l2": self.l2, "epochs": self.epochs, "lr": self.lr}

    def set_params(self, **params) -> "EditCombiner":
        for name, value in params.items():
            if name not in self.get_params():
                raise ValueError(f"unknown parameter {name!r}")
            setattr(self, name, value)
        return self

    def fit(self, records: Iterable[EnsembleRecord]) -> "EditCombiner":
        self.model_ = train(records, self.k, self.beta, self.l2, self.epochs, self.lr)
        return self

    def predict(self, pairs: Iterable[tuple[TokenSeq, Sequence[TokenSeq]]]) -> list[TokenSeq]:
        if not hasattr(self, "model_"):
            raise RuntimeError("EditCombiner is not fitted")
        return [combine(source, hypotheses, self.model_) for source, hypotheses in pairs]
