"""Recovered-target construction.

The recovered sentence keeps only the gold edits that the LLM also produced
(exact span + replacement match) and restores everything else to the source.
By construction it never introduces an edit absent from the gold annotation,
so scoring it against gold yields zero false positives.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

from .align import Edit, TokenSeq, apply_edits, extract_edits


class RecordError(ValueError):
    """A per-record failure, tagged with the stream index."""

    def __init__(self, index: int, message: str):
        super().__init__(f"record {index}: {message}")
        self.index = index


@dataclass(frozen=True)
class RecoveryTriple:
    source: TokenSeq
    gold: TokenSeq
    overcorrected: TokenSeq


@dataclass(frozen=True)
class RecoveryResult:
    recovered: TokenSeq
    kept_edits: tuple[Edit, ...]
    dropped_gold_edits: tuple[Edit, ...]
    spurious_llm_edits: tuple[Edit, ...]


def build_recovered(triple: RecoveryTriple) -> RecoveryResult:
    """Intersect gold and LLM edit sets and apply the intersection."""
    gold_edits = extract_edits(triple.source, triple.gold)
    llm_edits = extract_edits(triple.source, triple.overcorrected)
    llm_keys = {e.key for e in llm_edits}
    gold_keys = {e.key for e in gold_edits}
    kept = tuple(e for e in gold_edits if e.key in llm_keys)
    dropped = tuple(e for e in gold_edits if e.key not in llm_keys)
    spurious = tuple(e for e in llm_edits if e.key not in gold_keys)
    recovered = apply_edits(triple.source, list(kept))
    return RecoveryResult(recovered, kept, dropped, spurious)


def recover_corpus(triples: Iterable[RecoveryTriple]) -> Iterator[RecoveryResult]:
    """Element-wise build_recovered, order-preserving."""
    for index, triple in enumerate(triples):
        try:
            yield build_recovered(triple)
        except Exception as exc:
            raise RecordError(index, str(exc)) from exc
