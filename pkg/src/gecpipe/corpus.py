"""M2 corpus parsing/serialization and training-pair emission.

An M2 block is an ``S`` source line followed by ``A`` annotation lines:

    S I has a apple
    A 1 2|||R:VERB|||have|||REQUIRED|||-NONE-|||0

``A -1 -1|||noop|||...`` registers an annotator with an empty edit set.
Serialization renders coarse operation types (``M``/``R``/``U``) only, so
parse(write(x)) is the identity and write(parse(text)) is a canonical form.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Iterable, Iterator

from .align import Edit, TokenSeq, apply_edits, detokenize, tokenize
from .recover import RecoveryTriple, build_recovered

NONE_FIELD = "-NONE-"


class FormatError(ValueError):
    """Malformed M2 input; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class UnsortedEditError(FormatError):
    """An annotator's edits overlap within one sentence."""


@dataclass(frozen=True)
class AnnotatedSentence:
    source: TokenSeq
    annotations: dict[int, tuple[Edit, ...]]

    def gold_edits(self) -> tuple[Edit, ...]:
        """Edits of the lowest-id annotator (training data is singly annotated)."""
        if not self.annotations:
            return ()
        return self.annotations[min(self.annotations)]

    def gold_target(self) -> TokenSeq:
        return apply_edits(self.source, list(self.gold_edits()))


def _parse_a_line(line: str, line_no: int, source_len: int) -> tuple[int, Edit | None]:
    fields = line[2:].split("|||")
    if len(fields) != 6:
        raise FormatError(line_no, f"expected 6 '|||' fields, got {len(fields)}")
    span, op_type, correction, _required, _none, annotator = fields
    parts = span.split()
    if len(parts) != 2:
        raise FormatError(line_no, f"bad span field {span!r}")
    try:
        start, end = int(parts[0]), int(parts[1])
        annotator_id = int(annotator)
    except ValueError as exc:
        raise FormatError(line_no, str(exc)) from None
    if op_type == "noop":
        if (start, end) != (-1, -1):
            raise FormatError(line_no, "noop requires span -1 -1")
        return annotator_id, None
    if not (0 <= start <= end <= source_len):
        raise FormatError(line_no, f"span ({start}, {end}) outside source of length {source_len}")
    replacement = () if correction == NONE_FIELD else tokenize(correction)
    if start == end and not replacement:
        raise FormatError(line_no, "empty edit (zero-width span with empty correction)")
    return annotator_id, Edit(start, end, replacement)


def parse_m2(lines: Iterable[str]) -> Iterator[AnnotatedSentence]:
    """Parse an M2 line stream into annotated sentences."""
    source: TokenSeq | None = None
    pending: dict[int, list[Edit]] = {}
    start_line = 0

    def finish(line_no: int) -> AnnotatedSentence:
        annotations: dict[int, tuple[Edit, ...]] = {}
        for annotator_id, edits in pending.items():
            ordered = sorted(edits)
            for a, b in zip(ordered, ordered[1:]):
                if a.end > b.start or a.key == b.key or (
                    a.start == b.start == a.end == b.end
                ):
                    raise UnsortedEditError(
                        line_no, f"annotator {annotator_id} has overlapping edits"
                    )
            annotations[annotator_id] = tuple(ordered)
        return AnnotatedSentence(source, annotations)  # type: ignore[arg-type]

    line_no = 0
    for line_no, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            if source is not None:
                yield finish(line_no)
                source, pending = None, {}
            continue
        if line.startswith("S ") or line == "S":
            if source is not None:
                yield finish(line_no)
                pending = {}
            source = tokenize(line[2:])
            start_line = line_no
            if not source:
                raise FormatError(line_no, "empty source sentence")
        elif line.startswith("A "):
            if source is None:
                raise FormatError(line_no, "annotation before any S line")
            annotator_id, edit = _parse_a_line(line, line_no, len(source))
            bucket = pending.setdefault(annotator_id, [])
            if edit is not None:
                bucket.append(edit)
        else:
            raise FormatError(line_no, f"unrecognized line {line!r}")
    if source is not None:
        yield finish(line_no or start_line)


def write_m2(sentences: Iterable[AnnotatedSentence]) -> Iterator[str]:
    """Serialize sentences to canonical M2 lines (coarse M/R/U types)."""
    for sentence in sentences:
        yield f"S {detokenize(sentence.source)}"
        for annotator_id in sorted(sentence.annotations):
            edits = sentence.annotations[annotator_id]
            if not edits:
                yield f"A -1 -1|||noop|||{NONE_FIELD}|||REQUIRED|||{NONE_FIELD}|||{annotator_id}"
                continue
            for e in sorted(edits):
                correction = detokenize(e.replacement) if e.replacement else NONE_FIELD
                yield (
                    f"A {e.start} {e.end}|||{e.op_type.value}|||{correction}"
                    f"|||REQUIRED|||{NONE_FIELD}|||{annotator_id}"
                )
        yield ""


def format_model_input(source: str, overcorrect: str) -> str:
    """Two-line encoder input pairing the source with the LLM overcorrection."""
    return f"source : {source}\novercorrect : {overcorrect}"


def parse_model_input(text: str) -> tuple[str, str]:
    """Inverse of format_model_input."""
    lines = text.split("\n")
    if len(lines) != 2 or not lines[0].startswith("source : ") or not lines[1].startswith(
        "overcorrect : "
    ):
        raise ValueError(f"not a model-input block: {text!r}")
    return lines[0][len("source : "):], lines[1][len("overcorrect : "):]


@dataclass(frozen=True)
class TrainingPair:
    record_id: int
    source: str
    overcorrect: str
    target: str
    target_kind: str  # "gold" | "recovered"

    def to_json_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "input": format_model_input(self.source, self.overcorrect),
            "target": self.target,
            "target_kind": self.target_kind,
        }


# Odd multiplier makes x -> (x * A) mod 2**64 a bijection, so distinct pair
# indices always receive distinct shuffle keys.
_SHUFFLE_MULT = 6364136223846793005
_MASK64 = (1 << 64) - 1


def _shuffle_key(seed: int, index: int) -> int:
    return ((seed + index + 1) * _SHUFFLE_MULT) & _MASK64


def emit_pairs(
    triples: Iterable[RecoveryTriple],
    strategy: str = "mix",
    seed: int = 0,
) -> tuple[list[TrainingPair], ...]:
    """Produce gold and recovered training pairs.

    ``seq`` returns two streams (all gold pairs, then all recovered pairs,
    each in corpus order); ``mix`` returns one stream with both pairs per
    triple, deterministically shuffled by seed.
    """
    if strategy not in ("seq", "mix"):
        raise ValueError(f"unknown strategy {strategy!r}")
    gold_pairs: list[TrainingPair] = []
    recovered_pairs: list[TrainingPair] = []
    for record_id, triple in enumerate(triples):
        result = build_recovered(triple)
        source = detokenize(triple.source)
        overcorrect = detokenize(triple.overcorrected)
        gold_pairs.append(
            TrainingPair(record_id, source, overcorrect, detokenize(triple.gold), "gold")
        )
        recovered_pairs.append(
            TrainingPair(record_id, source, overcorrect, detokenize(result.recovered), "recovered")
        )
    if strategy == "seq":
        return gold_pairs, recovered_pairs
    combined: list[TrainingPair] = []
    for g, r in zip(gold_pairs, recovered_pairs):
        combined.extend((g, r))
    order = sorted(range(len(combined)), key=lambda i: _shuffle_key(seed, i))
    return ([combined[i] for i in order],)


def write_pairs_jsonl(pairs: Iterable[TrainingPair]) -> str:
    return "".join(json.dumps(p.to_json_dict(), sort_keys=True) + "\n" for p in pairs)


def file_digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()
