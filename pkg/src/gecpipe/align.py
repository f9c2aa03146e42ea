"""Token alignment, edit extraction/application, and tagged-diff rendering.

Sentences are whitespace-tokenized tuples of tokens.  An ``Edit`` replaces the
source span ``[start, end)`` with its replacement tokens; its operation type
(Missing / Replace / Unnecessary) is fully determined by the span shape, never
stored independently.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

TokenSeq = tuple[str, ...]

# Backtrace preference when several moves are cost-optimal:
# match > substitution > deletion > insertion.  This yields leftmost
# deletions for runs of duplicated tokens.
MATCH = "match"
SUB = "sub"
DEL = "del"
INS = "ins"


class OpType(str, Enum):
    MISSING = "M"
    REPLACE = "R"
    UNNECESSARY = "U"


class OverlapError(ValueError):
    """Two edits in one set touch overlapping source spans."""


class BoundsError(ValueError):
    """An edit span falls outside the source sentence."""


def tokenize(text: str) -> TokenSeq:
    """Split on Unicode whitespace; empty input yields an empty sequence."""
    return tuple(text.split())


def detokenize(tokens: TokenSeq) -> str:
    return " ".join(tokens)


@dataclass(frozen=True, order=True)
class Edit:
    start: int
    end: int
    replacement: TokenSeq

    def __post_init__(self) -> None:
        object.__setattr__(self, "replacement", tuple(self.replacement))
        if self.start < 0 or self.end < self.start:
            raise ValueError(f"invalid span ({self.start}, {self.end})")
        if self.start == self.end and not self.replacement:
            raise ValueError("the empty edit is never materialized")

    @property
    def op_type(self) -> OpType:
        if self.start == self.end:
            return OpType.MISSING
        if not self.replacement:
            return OpType.UNNECESSARY
        return OpType.REPLACE

    @property
    def key(self) -> tuple[int, int, TokenSeq]:
        return (self.start, self.end, self.replacement)


def _sub_cost(a: str, b: str) -> float:
    # Case-aware cost: exact match 0, case-insensitive match 0.5, else 1.
    if a == b:
        return 0.0
    if a.lower() == b.lower():
        return 0.5
    return 1.0


def align(source: TokenSeq, target: TokenSeq) -> tuple[list[tuple[str, int, int]], float]:
    """Minimal-cost alignment between two token sequences.

    Returns ``(ops, cost)`` where ops are ``(kind, i, j)`` in forward order:
    match/sub consume source[i] and target[j], del consumes source[i] at
    target position j, ins emits target[j] at source position i.
    """
    n, m = len(source), len(target)
    cost = [[0.0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        cost[i][0] = float(i)
    for j in range(1, m + 1):
        cost[0][j] = float(j)
    for i in range(1, n + 1):
        row, prev = cost[i], cost[i - 1]
        for j in range(1, m + 1):
            row[j] = min(
                prev[j - 1] + _sub_cost(source[i - 1], target[j - 1]),
                prev[j] + 1.0,
                row[j - 1] + 1.0,
            )

    ops: list[tuple[str, int, int]] = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            c = _sub_cost(source[i - 1], target[j - 1])
            if cost[i][j] == cost[i - 1][j - 1] + c:
                ops.append((MATCH if c == 0.0 else SUB, i - 1, j - 1))
                i -= 1
                j -= 1
                continue
        if i > 0 and cost[i][j] == cost[i - 1][j] + 1.0:
            ops.append((DEL, i - 1, j))
            i -= 1
            continue
        ops.append((INS, i, j - 1))
        j -= 1
    ops.reverse()
    return ops, cost[n][m]


def extract_edits(source: TokenSeq, target: TokenSeq) -> list[Edit]:
    """Extract edits from the minimal-cost alignment.

    Contiguous runs of non-match operations collapse into a single edit,
    except that a run of pure substitutions yields one edit per token so
    adjacent independent corrections stay separately creditable.  Runs
    separated by at least one match stay separate.  Deterministic for fixed
    inputs.
    """
    ops, _ = align(source, target)
    edits: list[Edit] = []
    run: list[tuple[str, int, int]] = []

    def flush() -> None:
        if not run:
            return
        if all(kind == SUB for kind, _, _ in run):
            for _, i, j in run:
                edits.append(Edit(i, i + 1, (target[j],)))
        else:
            first_kind, first_i, first_j = run[0]
            last_kind, last_i, last_j = run[-1]
            src_lo = first_i
            src_hi = last_i if last_kind == INS else last_i + 1
            tgt_lo = first_j
            tgt_hi = last_j if last_kind == DEL else last_j + 1
            edits.append(Edit(src_lo, src_hi, target[tgt_lo:tgt_hi]))
        run.clear()

    for op in ops:
        if op[0] == MATCH:
            flush()
        else:
            run.append(op)
    flush()
    return edits


def _check_edit_set(source_len: int, edits: list[Edit]) -> list[Edit]:
    ordered = sorted(edits)
    for e in ordered:
        if e.end > source_len:
            raise BoundsError(f"edit span ({e.start}, {e.end}) exceeds source length {source_len}")
    for a, b in zip(ordered, ordered[1:]):
        if a.end > b.start:
            raise OverlapError(f"edits ({a.start}, {a.end}) and ({b.start}, {b.end}) overlap")
        if a.start == b.start == a.end == b.end:
            raise OverlapError(f"two insertions share start {a.start}")
    return ordered


def apply_edits(source: TokenSeq, edits: list[Edit]) -> TokenSeq:
    """Apply a valid edit set to a source sentence, right-to-left."""
    ordered = _check_edit_set(len(source), edits)
    out = list(source)
    for e in reversed(ordered):
        out[e.start:e.end] = e.replacement
    return tuple(out)


_TAG_RE = re.compile(r"</?[RMU]>")
_U_SPAN_RE = re.compile(r"<U>.*?</U>")


def tag_diff(source: TokenSeq, hypothesis: TokenSeq) -> str:
    """Render the hypothesis with change markup against the source.

    Replaced segments are wrapped in ``<R>...</R>``, inserted segments in
    ``<M>...</M>``, and deleted source segments are re-inserted in place
    wrapped in ``<U>...</U>``.
    """
    pieces: list[str] = []
    src_pos = 0
    for e in extract_edits(source, hypothesis):
        pieces.extend(source[src_pos:e.start])
        if e.op_type is OpType.MISSING:
            pieces.append(f"<M>{detokenize(e.replacement)}</M>")
        elif e.op_type is OpType.UNNECESSARY:
            pieces.append(f"<U>{detokenize(source[e.start:e.end])}</U>")
        else:
            pieces.append(f"<R>{detokenize(e.replacement)}</R>")
        src_pos = e.end
    pieces.extend(source[src_pos:])
    return " ".join(pieces)


def strip_tags(tagged: str) -> str:
    """Undo tag_diff markup: drop deleted-source spans and all tag markers."""
    return " ".join(_TAG_RE.sub(" ", _U_SPAN_RE.sub(" ", tagged)).split())
