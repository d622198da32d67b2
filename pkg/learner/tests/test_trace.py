import json

from src.protocol import TraceRecord
from src.trace import ChainTrace


def record(it, kind, accepted, score):
    return TraceRecord(iter=it, kind=kind, accepted=accepted, log_score=score, n_edges=1, log_alpha=0.0)


def test_counts_and_frequencies():
    trace = ChainTrace("rwges")
    trace.record(record(1, "insert", True, -3.0), "a")
    trace.record(record(2, "delete", False, -3.0), "a")
    trace.record(record(3, "insert", True, -1.0), "b")
    results = trace.get_results()
    assert results["iterations"] == 3
    assert results["accepted"] == 2
    assert results["accepted_by_kind"] == {"insert": 2}
    assert results["best_log_score"] == -1.0
    assert trace.frequencies() == {"a": 2 / 3, "b": 1 / 3}
    assert "Chain Summary (rwges)" in trace.get_summary()


def test_reset():
    trace = ChainTrace()
    trace.record(record(1, "swap", True, 0.0), "a")
    trace.reset()
    assert len(trace) == 0
    assert trace.frequencies() == {}
    assert trace.get_results()["final_log_score"] is None


def test_export(tmp_path):
    trace = ChainTrace("ads")
    trace.record(record(1, "add", False, -2.0))
    path = tmp_path / "trace.jsonl"
    trace.export_jsonl(path)
    [line] = path.read_text().splitlines()
    assert json.loads(line)["kind"] == "add"


def test_records_can_be_dropped():
    trace = ChainTrace(keep_records=False)
    trace.record(record(1, "add", True, 0.0), "a")
    assert trace.records == []
    assert trace.visits["a"] == 1
