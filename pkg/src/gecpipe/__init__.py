"""GEC pipeline toolkit: alignment, recovered targets, scoring, combination."""

from .align import (
    BoundsError,
    Edit,
    OpType,
    OverlapError,
    TokenSeq,
    apply_edits,
    detokenize,
    extract_edits,
    tag_diff,
    tokenize,
)
from .corpus import AnnotatedSentence, FormatError, TrainingPair, emit_pairs, parse_m2, write_m2
from .ensemble import EditCombiner, EnsembleModel, EnsembleRecord, combine, pool_edits
from .llm import CompletionClient, CompletionRequest, MockProvider, parse_output, render_prompt
from .recover import RecoveryResult, RecoveryTriple, build_recovered, recover_corpus
from .score import Counts, ScoreRecord, ScoreReport, fbeta, match_edits, score_corpus

__version__ = "0.1.0"

__all__ = [
    "AnnotatedSentence",
    "BoundsError",
    "CompletionClient",
    "CompletionRequest",
    "Counts",
    "Edit",
    "EditCombiner",
    "EnsembleModel",
    "EnsembleRecord",
    "FormatError",
    "MockProvider",
    "OpType",
    "OverlapError",
    "RecoveryResult",
    "RecoveryTriple",
    "ScoreRecord",
    "ScoreReport",
    "TokenSeq",
    "TrainingPair",
    "apply_edits",
    "build_recovered",
    "combine",
    "detokenize",
    "emit_pairs",
    "extract_edits",
    "fbeta",
    "match_edits",
    "parse_m2",
    "parse_output",
    "pool_edits",
    "recover_corpus",
    "render_prompt",
    "score_corpus",
    "tag_diff",
    "tokenize",
    "write_m2",
]
