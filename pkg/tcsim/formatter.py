"""
Result rendering for the command-line front end.
"""

import json
from typing import Any, Iterable, Mapping, Tuple

from tcsim.chanbench import BenchConfig, ChannelMatrix
from tcsim.overhead import OverheadReport
from tcsim.utils import format_percent, format_units


class ReportFormatter:
    """
    Renders bench summaries, JSON reports and labelled key/value blocks.

    JSON output keeps the key order of the report mapping and ends with a
    newline so files and stdout compare byte for byte.
    """

    def channel_summary(self, matrix: ChannelMatrix, bench: BenchConfig) -> str:
        """
        One line describing a finished bench.

        Example:
            "bht fence.t.s: 129 secrets x 10 samples, constant spy time 2048 cycles"
        """
        head = (
            f"{bench.component.value} {bench.mitigation.variant.value}: "
            f"{bench.secret_count} secrets x {bench.samples_per_secret} samples"
        )
        observed = matrix.counts.sum(axis=0) > 0
        times = matrix.time_bins[observed]
        if len(times) == 1:
            return f"{head}, constant spy time {format_units(int(times[0]), 'cycle')}"
        return (
            f"{head}, {len(times)} distinct spy times "
            f"from {int(times[0])} to {format_units(int(times[-1]), 'cycle')}"
        )

    def overhead_summary(self, report: OverheadReport, workload: str) -> str:
        """
        One line describing an overhead run.

        Example:
            "mixed: 10 fences, slowdown 1.670%, direct cost 0.150% of each slice"
        """
        fences = format_units(report.switches, "fence")
        return (
            f"{workload}: {fences}, slowdown {format_percent(report.slowdown_percent)}, "
            f"direct cost {format_percent(report.direct_cost_percent)} of each slice"
        )

    def json_report(self, report: Mapping[str, Any]) -> str:
        return json.dumps(report, indent=2) + "\n"

    def aligned(self, pairs: Iterable[Tuple[str, Any]]) -> str:
        """Labels padded to a common width, one pair per line."""
        rows = [(f"{label}:", value) for label, value in pairs]
        if not rows:
            return ""
        width = max(len(label) for label, _ in rows)
        return "\n".join(f"{label:<{width + 2}}{value}" for label, value in rows)
