import numpy as np
import pytest

from gecpipe.align import Edit, tokenize
from gecpipe.ensemble import (
    DegenerateDataWarning,
    EditCandidate,
    EditCombiner,
    EnsembleModel,
    EnsembleRecord,
    combine,
    featurize,
    pool_edits,
    train,
)


def test_pool_dedup_votes():
    src = tokenize("I has a apple")
    hyp = tokenize("I have a apple")
    candidates = pool_edits(src, [hyp, hyp])
    assert len(candidates) == 1
    assert candidates[0].edit == Edit(1, 2, ("have",))
    assert candidates[0].votes == (1, 1)


def test_pool_distinct_replacements():
    src = tokenize("I has a apple")
    candidates = pool_edits(src, [tokenize("I have a apple"), tokenize("I had a apple")])
    assert len(candidates) == 2
    assert all(sum(c.votes) == 1 for c in candidates)


def test_pool_identity_hypotheses():
    src = tokenize("a b c")
    assert pool_edits(src, [src, src]) == []


def test_pool_sorted_by_span():
    src = tokenize("a b c d")
    candidates = pool_edits(src, [tokenize("x b c y")])
    spans = [(c.edit.start, c.edit.end) for c in candidates]
    assert spans == sorted(spans)


def test_featurize_replace_block():
    cand = EditCandidate(Edit(1, 2, ("x",)), (1, 0, 1))
    assert featurize(cand, 3).tolist() == [0, 0, 0, 1, 0, 1, 0, 0, 0]


def test_featurize_missing_k1():
    cand = EditCandidate(Edit(1, 1, ("x",)), (1,))
    assert featurize(cand, 1).tolist() == [1, 0, 0]


def test_featurize_unnecessary_k2():
    cand = EditCandidate(Edit(0, 1, ()), (0, 1))
    assert featurize(cand, 2).tolist() == [0, 0, 0, 0, 0, 1]


def test_candidate_requires_a_vote():
    with pytest.raises(ValueError):
        EditCandidate(Edit(0, 1, ("x",)), (0, 0))


def _separable_records():
    # Gold edits are exactly the candidates voted by >=2 of 3 systems.
    records = []
    for i in range(6):
        src = tokenize(f"s{i} a b c d")
        gold_edit = Edit(1, 2, (f"g{i}",))
        noise = [Edit(3, 4, (f"n{i}{s}",)) for s in range(3)]
        hyps = [
            tokenize(f"s{i} g{i} b n{i}0 d"),
            tokenize(f"s{i} g{i} b n{i}1 d"),
            tokenize(f"s{i} a b n{i}2 d"),
        ]
        records.append(EnsembleRecord(src, hyps, [gold_edit]))
        del noise
    return records


def test_train_separable_accepts_majority_edits():
    records = _separable_records()
    model = train(records, k=3, epochs=500, lr=1.0)
    for record in records:
        out = combine(record.source, record.hypotheses, model)
        assert out == tokenize(f"{record.source[0]} {record.gold_edits[0].replacement[0]} b c d")


def test_train_degenerate_all_positive():
    src = tokenize("a b")
    records = [EnsembleRecord(src, [tokenize("x b")], [Edit(0, 1, ("x",))])]
    with pytest.warns(DegenerateDataWarning):
        model = train(records, k=1)
    assert model.threshold == 0.5
    assert model.degenerate


def test_large_l2_shrinks_weights():
    records = _separable_records()
    model = train(records, k=3, l2=10.0, epochs=500, lr=0.01)
    assert max(abs(w) for w in model.weights) < 0.05


def test_train_deterministic():
    a = train(_separable_records(), k=3, epochs=300, lr=0.5)
    b = train(_separable_records(), k=3, epochs=300, lr=0.5)
    assert a.weights == b.weights
    assert a.bias == b.bias
    assert a.threshold == b.threshold


def test_combine_passthrough_single_system():
    src = tokenize("I has a apple")
    hyp = tokenize("I have an apple")
    model = EnsembleModel(k=1, beta=0.5, weights=[1.0] * 3, bias=0.0, threshold=0.0)
    assert combine(src, [hyp], model) == hyp


def test_combine_nothing_above_threshold():
    src = tokenize("I has a apple")
    model = EnsembleModel(k=1, beta=0.5, weights=[0.0] * 3, bias=-10.0, threshold=0.9)
    assert combine(src, [tokenize("I have an apple")], model) == src


def test_combine_overlap_resolved_by_probability():
    # Two systems propose overlapping replacements; the heavier-voted one has
    # the higher probability and must win alone.
    src = tokenize("a b c")
    hyps = [tokenize("a X c"), tokenize("a X c"), tokenize("a Y Y c")]
    weights = [0.0, 0.0, 0.0, 2.0, 2.0, 1.0, 0.0, 0.0, 0.0]
    model = EnsembleModel(k=3, beta=0.5, weights=weights, bias=0.0, threshold=0.0)
    out = combine(src, hyps, model)
    assert out == tokenize("a X c")


def test_combine_wrong_k():
    model = EnsembleModel(k=2, beta=0.5, weights=[0.0] * 6, bias=0.0, threshold=0.5)
    with pytest.raises(ValueError):
        combine(tokenize("a"), [tokenize("a")], model)


def test_monotone_threshold():
    src = tokenize("a b c d e")
    hyps = [tokenize("x b y d e"), tokenize("x b c d z"), tokenize("a b y d z")]
    base = EnsembleModel(k=3, beta=0.5, weights=[0.5] * 9, bias=0.0, threshold=0.0)
    counts = []
    for t in (0.0, 0.5, 0.6, 0.7, 1.0):
        model = EnsembleModel(k=3, beta=0.5, weights=base.weights, bias=0.0, threshold=t)
        out = combine(src, hyps, model)
        from gecpipe.align import extract_edits

        counts.append(len(extract_edits(src, out)))
    assert counts == sorted(counts, reverse=True)


def test_model_json_round_trip():
    model = train(_separable_records(), k=3)
    restored = EnsembleModel.from_json(model.to_json())
    assert restored == model
    with pytest.raises(ValueError):
        EnsembleModel.from_json('{"feature_layout": "other"}')


def test_edit_combiner_estimator_api():
    combiner = EditCombiner(k=3, epochs=400, lr=1.0)
    params = combiner.get_params()
    assert params["k"] == 3
    combiner.set_params(lr=0.5)
    assert combiner.lr == 0.5
    with pytest.raises(ValueError):
        combiner.set_params(bogus=1)

    records = _separable_records()
    with pytest.raises(RuntimeError):
        combiner.predict([(records[0].source, records[0].hypotheses)])
    combiner.fit(records)
    outputs = combiner.predict([(r.source, r.hypotheses) for r in records])
    assert len(outputs) == len(records)
    assert isinstance(combiner.model_, EnsembleModel)


def test_train_empty_dev():
    with pytest.raises(ValueError):
        train([], k=1)


def test_featurize_vote_length_mismatch():
    cand = EditCandidate(Edit(0, 1, ("x",)), (1,))
    with pytest.raises(ValueError):
        featurize(cand, 2)
