from collections import OrderedDict
from typing import List, Optional

from models import RunSummary


class RunStore:
    """Keeps the most recent scenario run summaries in memory"""

    def __init__(self, max_runs: int = 20):
        self.max_runs = max_runs
        self.runs: "OrderedDict[str, RunSummary]" = OrderedDict()
        self.run_counter = 0

    def next_run_id(self, scenario: str) -> str:
        """Reserve a new run id"""
        self.run_counter += 1
        return f"{scenario}_{self.run_counter}"

    def add(self, summary: RunSummary) -> None:
        """Store a summary, evicting the oldest beyond the limit"""
        self.runs[summary.run_id] = summary
        self.runs.move_to_end(summary.run_id)
        while len(self.runs) > self.max_runs:
            self.runs.popitem(last=False)

    def get(self, run_id: str) -> Optional[RunSummary]:
        return self.runs.get(run_id)

    def list_ids(self) -> List[str]:
        return list(self.runs)

    def clear(self) -> None:
        self.runs.clear()
