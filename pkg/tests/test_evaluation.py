import io
import math

import pytest
from hypothesis import given, settings, strategies as st

from csqe.errors import DataFormatError
from csqe.evaluation import (
    Qrels,
    RunFile,
    average_precision,
    evaluate_run,
    ndcg_at_k,
    parse_metric_spec,
    parse_qrels,
    parse_trec_run,
    recall_at_k,
    write_trec_run,
)

from oracles import ap_oracle, ndcg_oracle, recall_oracle


def _stream(text):
    return io.BytesIO(text.encode("utf-8"))


# -- qrels parsing ------------------------------------------------------------


def test_parse_qrels_basic():
    qrels = parse_qrels(_stream("q1 0 d1 2\n"))
    assert qrels.judgments == {"q1": {"d1": 2}}
    assert qrels.grade("q1", "d1") == 2
    assert qrels.grade("q1", "missing") == 0


def test_parse_qrels_duplicates_overwrite():
    qrels = parse_qrels(_stream("q1 0 d1 0\nq1 0 d1 1\n"))
    assert qrels.grade("q1", "d1") == 1


def test_parse_qrels_bad_grade_reports_line():
    with pytest.raises(DataFormatError, match="line 1"):
        parse_qrels(_stream("q1 0 d1 x\n"))


def test_parse_qrels_wrong_field_count():
    with pytest.raises(DataFormatError, match="4 fields"):
        parse_qrels(_stream("q1 d1 1\n"))


# -- metric parity fixtures ------------------------------------------------------
#
# Expected values are frozen from hand derivations of the trec_eval
# definitions (linear-gain ndcg_cut, map, recall; ideal ranking over all
# judged documents; queries without relevant documents excluded).

INV_LOG2_3 = 0.6309297535714575

PARITY_FIXTURES = [
    # (name, qrels-for-query, ranking, rel_threshold, {metric: expected})
    (
        "perfect_order",
        {"d1": 2, "d2": 1},
        ["d1", "d2"],
        1,
        {"map": 1.0, "ndcg@1": 1.0, "ndcg@5": 1.0, "ndcg@10": 1.0, "recall@1": 0.5, "recall@1000": 1.0},
    ),
    (
        "swapped_grades",
        {"d1": 2, "d2": 1},
        ["d2", "d1"],
        1,
        {"map": 1.0, "ndcg@1": 0.5, "ndcg@10": 0.8597186998521972, "recall@1000": 1.0},
    ),
    (
        "single_relevant_at_rank_two",
        {"d1": 1},
        ["d2", "d1"],
        1,
        {"map": 0.5, "ndcg@1": 0.0, "ndcg@10": INV_LOG2_3, "recall@10": 1.0},
    ),
    (
        "relevant_at_ranks_one_and_three",
        {"a": 1, "b": 1},
        ["a", "x", "b"],
        1,
        {"map": 5 / 6, "ndcg@1": 1.0, "ndcg@10": 0.9197207891481876, "recall@10": 1.0},
    ),
    (
        "one_of_two_retrieved",
        {"a": 1, "b": 1},
        ["a"],
        1,
        {"map": 0.5, "ndcg@10": 0.6131471927654584, "recall@10": 0.5, "recall@1": 0.5},
    ),
    (
        "graded_reverse_order",
        {"a": 3, "b": 2, "c": 1},
        ["c", "b", "a"],
        1,
        {"map": 1.0, "ndcg@1": 1 / 3, "ndcg@10": 0.7899980042460358, "recall@10": 1.0},
    ),
    (
        "threshold_two_binarization",
        {"a": 1, "b": 2},
        ["a", "b"],
        2,
        {"map": 0.5, "ndcg@10": 0.8597186998521972, "recall@1": 0.0, "recall@10": 1.0},
    ),
    (
        "relevant_at_rank_five",
        {"a": 1},
        ["x", "y", "z", "w", "a"],
        1,
        {"map": 0.2, "ndcg@1": 0.0, "ndcg@5": 0.38685280723454163, "ndcg@10": 0.38685280723454163, "recall@1": 0.0, "recall@1000": 1.0},
    ),
    (
        "all_relevant_on_top",
        {"a": 1, "b": 1, "c": 1},
        ["a", "b", "c", "x", "y"],
        1,
        {"map": 1.0, "ndcg@10": 1.0, "recall@3": 1.0, "recall@1": 1 / 3},
    ),
    (
        "empty_ranking",
        {"a": 1},
        [],
        1,
        {"map": 0.0, "ndcg@10": 0.0, "recall@10": 0.0},
    ),
    (
        "deep_qrels_truncated_ideal",
        {"a": 3, "b": 3, "c": 2, "d": 1},
        ["a", "c"],
        1,
        # DCG@2 = 3 + 2/log2(3); IDCG@2 = 3 + 3/log2(3) over all judged docs
        {"ndcg@2": (3 + 2 * INV_LOG2_3) / (3 + 3 * INV_LOG2_3), "recall@2": 0.5},
    ),
]


def _compute(metric, ranking, judged, rel_threshold):
    if metric == "map":
        return average_precision(ranking, judged, rel_threshold)
    kind, _, k = metric.partition("@")
    if kind == "ndcg":
        return ndcg_at_k(ranking, judged, int(k))
    return recall_at_k(ranking, judged, int(k), rel_threshold)


def _compute_oracle(metric, ranking, judged, rel_threshold):
    if metric == "map":
        return ap_oracle(ranking, judged, rel_threshold)
    kind, _, k = metric.partition("@")
    if kind == "ndcg":
        return ndcg_oracle(ranking, judged, int(k))
    return recall_oracle(ranking, judged, int(k), rel_threshold)


@pytest.mark.parametrize("name,judged,ranking,rel_threshold,expected", PARITY_FIXTURES)
def test_metric_parity_fixture(name, judged, ranking, rel_threshold, expected):
    for metric, value in expected.items():
        got = _compute(metric, ranking, judged, rel_threshold)
        assert got == pytest.approx(value, abs=1e-4), f"{name}:{metric}"
        oracle = _compute_oracle(metric, ranking, judged, rel_threshold)
        assert got == pytest.approx(oracle, abs=1e-9), f"{name}:{metric} vs oracle"


def test_metrics_exclude_queries_without_relevant():
    assert ndcg_at_k(["d1"], {"d1": 0}, 10) is None
    assert average_precision(["d1"], {"d1": 0}) is None
    assert recall_at_k(["d1"], {"d1": 0}, 10) is None
    assert average_precision(["d1"], {"d1": 1}, rel_threshold=2) is None


def test_ndcg_exponential_gain_flag():
    judged = {"a": 2, "b": 1}
    linear = ndcg_at_k(["b", "a"], judged, 10)
    exponential = ndcg_at_k(["b", "a"], judged, 10, exponential=True)
    # gains 3 and 1 instead of 2 and 1 penalize the swap harder
    assert exponential < linear


# -- metric properties -------------------------------------------------------------


_grades = st.dictionaries(
    st.sampled_from([f"d{i}" for i in range(8)]),
    st.integers(min_value=0, max_value=3),
    min_size=1,
    max_size=8,
)


@settings(max_examples=60, deadline=None)
@given(judged=_grades, seed=st.randoms(use_true_random=False), k=st.integers(1, 8))
def test_metrics_bounded(judged, seed, k):
    docs = sorted(judged) + ["extra1", "extra2"]
    seed.shuffle(docs)
    for value in (
        ndcg_at_k(docs, judged, k),
        average_precision(docs, judged),
        recall_at_k(docs, judged, k),
    ):
        assert value is None or 0.0 <= value <= 1.0 + 1e-12


@settings(max_examples=60, deadline=None)
@given(judged=_grades, seed=st.randoms(use_true_random=False), k=st.integers(1, 5))
def test_tail_permutation_below_k_does_not_change_cutoff_metrics(judged, seed, k):
    docs = sorted(judged) + [f"pad{i}" for i in range(5)]
    seed.shuffle(docs)
    head, tail = docs[:k], docs[k:]
    shuffled_tail = tail[:]
    seed.shuffle(shuffled_tail)
    a, b = head + tail, head + shuffled_tail
    assert ndcg_at_k(a, judged, k) == ndcg_at_k(b, judged, k)
    assert recall_at_k(a, judged, k) == recall_at_k(b, judged, k)


def test_ndcg_depends_only_on_order_not_scores():
    # identical rankings expressed with different score scales
    rankings = {"q1": [("a", 100.0), ("b", 10.0)]}
    transformed = {"q1": [("a", 0.9), ("b", 0.8)]}
    qrels = Qrels({"q1": {"a": 1, "b": 1}})
    r1 = evaluate_run(RunFile(rankings), qrels, ["ndcg_cut.10"])
    r2 = evaluate_run(RunFile(transformed), qrels, ["ndcg_cut.10"])
    assert r1.macro == r2.macro


# -- run files -----------------------------------------------------------------------


def test_write_trec_run_format():
    text = write_trec_run({"q1": [("d1", 2.5)]}, tag="csqe")
    assert text == "q1 Q0 d1 1 2.500000 csqe\n"


def test_write_trec_run_ranks_sequentially():
    text = write_trec_run({"q1": [("d1", 2.0), ("d9", 1.0), ("d2", 1.0)]})
    lines = text.splitlines()
    assert lines[0].split()[3] == "1"
    assert lines[1].split()[3] == "2"
    assert lines[2].split()[3] == "3"


def test_run_round_trip_preserves_order():
    rankings = {"q1": [("d1", 3.0), ("a", 2.0), ("b", 2.0), ("z", 1.0)]}
    parsed = parse_trec_run(_stream(write_trec_run(rankings)))
    assert parsed.rankings == rankings


def test_parse_run_rejects_duplicate_docs():
    text = "q1 Q0 d1 1 2.0 x\nq1 Q0 d1 2 1.0 x\n"
    with pytest.raises(DataFormatError, match="duplicate"):
        parse_trec_run(_stream(text))


def test_parse_run_resorts_by_score():
    text = "q1 Q0 low 1 1.0 x\nq1 Q0 high 2 9.0 x\n"
    parsed = parse_trec_run(_stream(text))
    assert [d for d, _ in parsed.rankings["q1"]] == ["high", "low"]


# -- evaluate_run ----------------------------------------------------------------------


def test_evaluate_ideal_run_is_all_ones():
    qrels = Qrels({"q1": {"a": 2, "b": 1}, "q2": {"c": 1}})
    run = RunFile({"q1": [("a", 2.0), ("b", 1.0)], "q2": [("c", 1.0)]})
    report = evaluate_run(run, qrels, ["map", "ndcg_cut.10", "recall.1000"])
    assert all(value == pytest.approx(1.0) for value in report.macro.values())


def test_evaluate_two_line_fixture():
    qrels = Qrels({"q1": {"d1": 1}})
    run = RunFile({"q1": [("d2", 2.0), ("d1", 1.0)]})
    report = evaluate_run(run, qrels, ["ndcg_cut.10", "map"])
    assert report.macro["ndcg_cut.10"] == pytest.approx(INV_LOG2_3, abs=1e-4)
    assert report.macro["map"] == pytest.approx(0.5)


def test_evaluate_macro_is_arithmetic_mean():
    qrels = Qrels({"q1": {"a": 1}, "q2": {"b": 1}})
    run = RunFile({"q1": [("a", 1.0)], "q2": [("x", 2.0), ("b", 1.0)]})
    report = evaluate_run(run, qrels, ["map"])
    assert report.per_query["map"] == {"q1": 1.0, "q2": 0.5}
    assert report.macro["map"] == pytest.approx(0.75)


def test_evaluate_skips_unjudged_queries_with_warning(caplog):
    qrels = Qrels({"q1": {"a": 1}})
    run = RunFile({"q1": [("a", 1.0)], "q9": [("a", 1.0)]})
    with caplog.at_level("WARNING"):
        report = evaluate_run(run, qrels, ["map"])
    assert report.skipped_queries == ["q9"]
    assert "q9" in caplog.text
    assert report.evaluated_count("map") == 1


def test_evaluate_empty_run_warns(caplog):
    with caplog.at_level("WARNING"):
        report = evaluate_run(RunFile({}), Qrels({"q1": {"a": 1}}), ["map"])
    assert report.evaluated_count("map") == 0
    assert report.macro["map"] is None
    assert "no queries" in caplog.text


def test_evaluate_excludes_all_zero_query_from_averages():
    qrels = Qrels({"q1": {"a": 1}, "q2": {"b": 0}})
    run = RunFile({"q1": [("a", 1.0)], "q2": [("b", 1.0)]})
    report = evaluate_run(run, qrels, ["map", "ndcg_cut.10"])
    assert report.evaluated_count("map") == 1
    assert report.macro["map"] == pytest.approx(1.0)


def test_metric_spec_parsing():
    assert parse_metric_spec("map").kind == "map"
    assert parse_metric_spec("ndcg_cut.10").k == 10
    assert parse_metric_spec("recall.1000").k == 1000
    with pytest.raises(ValueError):
        parse_metric_spec("bleu")
    with pytest.raises(ValueError):
        parse_metric_spec("ndcg_cut.zero")


def test_report_rendering():
    qrels = Qrels({"q1": {"a": 1}})
    run = RunFile({"q1": [("a", 1.0)]})
    report = evaluate_run(run, qrels, ["map", "ndcg_cut.10"])
    table = report.format_table()
    assert "map" in table and "ndcg_cut.10" in table and "1.0000" in table
    assert '"macro"' in report.to_json()
