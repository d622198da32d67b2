"""Trace collection and reporting for Markov chain runs."""

from collections import Counter
from pathlib import Path
from typing import Hashable, Optional

from .protocol import TraceRecord


class ChainTrace:
    """Collects per-iteration records and visit counts of one chain."""

    def __init__(self, kind: str = "", keep_records: bool = True):
        self._kind = kind
        self._keep_records = keep_records
        self._records: list[TraceRecord] = []
        self._visits: Counter = Counter()
        self._steps = 0
        self._accepted = 0
        self._proposed: Counter = Counter()
        self._accepted_by_kind: Counter = Counter()
        self._last: Optional[TraceRecord] = None
        self._best_score = float("-inf")

    def reset(self):
        """Reset all statistics."""
        self._records = []
        self._visits.clear()
        self._steps = self._accepted = 0
        self._proposed.clear()
        self._accepted_by_kind.clear()
        self._last = None
        self._best_score = float("-inf")

    def record(self, record: TraceRecord, state: Optional[Hashable] = None):
        """Record one iteration and the state the chain is in after it."""
        if self._keep_records:
            self._records.append(record)
        if state is not None:
            self._visits[state] += 1
        self._steps += 1
        self._proposed[record.kind] += 1
        if record.accepted:
            self._accepted += 1
            self._accepted_by_kind[record.kind] += 1
        self._best_score = max(self._best_score, record.log_score)
        self._last = record

    @property
    def records(self) -> list[TraceRecord]:
        return self._records

    @property
    def visits(self) -> Counter:
        return self._visits

    def frequencies(self) -> dict:
        """Empirical state frequencies."""
        total = sum(self._visits.values())
        return {state: count / total for state, count in self._visits.items()} if total else {}

    def get_results(self) -> dict:
        """Get aggregated results."""
        return {
            "kind": self._kind,
            "iterations": self._steps,
            "accepted": self._accepted,
            "acceptance_rate": self._accepted / self._steps if self._steps else 0.0,
            "final_log_score": self._last.log_score if self._last else None,
            "final_edges": self._last.n_edges if self._last else None,
            "best_log_score": self._best_score if self._last else None,
            "proposed_by_kind": dict(self._proposed),
            "accepted_by_kind": dict(self._accepted_by_kind),
            "distinct_states": len(self._visits),
        }

    def get_summary(self) -> str:
        """Get a human-readable summary."""
        results = self.get_results()
        lines = [
            "=" * 50,
            f"Chain Summary ({results['kind'] or 'unknown'})",
            "=" * 50,
            f"Iterations: {results['iterations']}",
            f"Accepted: {results['accepted']}",
            f"Acceptance Rate: {results['acceptance_rate']:.1%}",
        ]
        if results["final_log_score"] is not None:
            lines += [
                f"Final Log Score: {results['final_log_score']:.4f}",
                f"Best Log Score: {results['best_log_score']:.4f}",
                f"Final Edges: {results['final_edges']}",
            ]
        for kind, count in sorted(results["proposed_by_kind"].items()):
            lines.append(f"  {kind}: {results['accepted_by_kind'].get(kind, 0)}/{count} accepted")
        lines.append("=" * 50)
        return "\n".join(lines)

    def export_jsonl(self, path: str | Path) -> None:
        """Write one TraceRecord per line."""
        with open(path, "w") as fh:
            for record in self._records:
                fh.write(record.model_dump_json() + "\n")

    def __len__(self) -> int:
        return self._steps
