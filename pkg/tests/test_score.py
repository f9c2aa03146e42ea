import math

import pytest

from gecpipe.align import Edit, OpType, tokenize
from gecpipe.score import (
    Counts,
    DomainError,
    EmptyCorpusError,
    ScoreRecord,
    fbeta,
    match_edits,
    match_edits_by_type,
    percent,
    score_corpus,
)


def test_fbeta_paper_values():
    assert fbeta(0.780, 0.678, 0.5) == pytest.approx(0.7572, abs=1e-4)
    assert fbeta(0.786, 0.643, 0.5) == pytest.approx(0.7525, abs=1e-4)
    assert percent(fbeta(0.780, 0.678, 0.5)) == "75.7"
    assert percent(fbeta(0.786, 0.643, 0.5)) == "75.3"


def test_fbeta_symmetry_at_equal_inputs():
    for x in (0.0, 0.3, 1.0):
        for beta in (0.5, 1.0, 2.0):
            assert fbeta(x, x, beta) == pytest.approx(x)


def test_fbeta_zero_when_both_zero():
    assert fbeta(0.0, 0.0, 0.5) == 0.0


def test_fbeta_domain_errors():
    with pytest.raises(DomainError):
        fbeta(1.2, 0.5, 0.5)
    with pytest.raises(DomainError):
        fbeta(0.5, -0.1, 0.5)
    with pytest.raises(DomainError):
        fbeta(0.5, 0.5, 0.0)


def test_fbeta_beta_one_is_harmonic_mean():
    p, r = 0.6, 0.4
    assert fbeta(p, r, 1.0) == pytest.approx(2 * p * r / (p + r))


def test_fbeta_small_beta_approaches_precision():
    p, r = 0.73, 0.41
    assert math.isclose(fbeta(p, r, 0.01), p, abs_tol=1e-2)


def test_match_edits_example():
    hyp = [Edit(1, 2, ("have",))]
    ref = [Edit(1, 2, ("have",)), Edit(2, 3, ("an",))]
    counts = match_edits(hyp, ref)
    assert (counts.tp, counts.fp, counts.fn) == (1, 0, 1)


def test_match_edits_empty():
    counts = match_edits([], [])
    assert (counts.tp, counts.fp, counts.fn) == (0, 0, 0)


def test_match_edits_case_sensitive():
    counts = match_edits([Edit(0, 1, ("A",))], [Edit(0, 1, ("a",))])
    assert (counts.tp, counts.fp, counts.fn) == (0, 1, 1)


def test_match_edits_by_type_sums_to_overall():
    hyp = [Edit(0, 1, ("x",)), Edit(2, 2, ("y",)), Edit(3, 4, ())]
    ref = [Edit(0, 1, ("x",)), Edit(5, 6, ())]
    typed = match_edits_by_type(hyp, ref)
    total = Counts()
    for c in typed.values():
        total = total + c
    overall = match_edits(hyp, ref)
    assert (total.tp, total.fp, total.fn) == (overall.tp, overall.fp, overall.fn)
    assert typed[OpType.REPLACE].tp == 1
    assert typed[OpType.MISSING].fp == 1
    assert typed[OpType.UNNECESSARY].fp == 1
    assert typed[OpType.UNNECESSARY].fn == 1


def record(src, hyp, annotations):
    return ScoreRecord(tokenize(src), tokenize(hyp), annotations)


def test_perfect_match_single_annotator():
    report = score_corpus(
        [record("I has a apple", "I have a apple", [[Edit(1, 2, ("have",))]])]
    )
    assert report.precision == 1.0
    assert report.recall == 1.0
    assert report.f_beta == 1.0


def test_annotator_selection_prefers_matching_annotator():
    rec = record(
        "I has a apple",
        "I have a apple",
        [[Edit(2, 3, ("an",))], [Edit(1, 2, ("have",))]],
    )
    report = score_corpus([rec])
    assert report.annotator_choices == [1]
    assert report.f_beta == 1.0


def test_zero_convention_no_edits_anywhere():
    report = score_corpus([record("a b", "a b", [[]])])
    assert report.precision == 1.0
    assert report.recall == 1.0
    assert report.f_beta == 1.0


def test_empty_corpus_error():
    with pytest.raises(EmptyCorpusError):
        score_corpus([])


def test_corpus_f_from_summed_counts():
    records = [
        record("a b", "x b", [[Edit(0, 1, ("x",))]]),
        record("c d", "c d", [[Edit(1, 2, ("y",))]]),
    ]
    report = score_corpus(records)
    assert (report.overall.tp, report.overall.fp, report.overall.fn) == (1, 0, 1)


def test_greedy_selection_dominates_annotator_zero():
    records = [
        record(
            "a b c",
            "x b c",
            [[Edit(2, 3, ("z",))], [Edit(0, 1, ("x",))]],
        ),
        record(
            "d e",
            "d f",
            [[Edit(1, 2, ("f",))], [Edit(0, 1, ("q",))]],
        ),
    ]
    greedy = score_corpus(records)
    fixed = score_corpus(
        [ScoreRecord(r.source, r.hypothesis, [r.annotations[0]]) for r in records]
    )
    assert greedy.f_beta >= fixed.f_beta


def test_per_type_counts_sum_to_overall():
    records = [
        record("a b c", "x b", [[Edit(0, 1, ("x",)), Edit(2, 3, ())]]),
        record("d e", "d the e", [[Edit(1, 1, ("the",))]]),
    ]
    report = score_corpus(records)
    total = Counts()
    for c in report.per_type.values():
        total = total + c
    assert (total.tp, total.fp, total.fn) == (
        report.overall.tp,
        report.overall.fp,
        report.overall.fn,
    )


def test_report_serialization():
    report = score_corpus([record("a b", "x b", [[Edit(0, 1, ("x",))]])])
    text = report.to_text()
    assert "TP        : 1" in text
    assert "Precision : 1.0000" in text
    data = report.to_dict()
    assert data["overall"]["tp"] == 1
    assert set(data["per_type"]) == {"missing", "replace", "unnecessary"}
    assert "f_beta" in data["overall"]
