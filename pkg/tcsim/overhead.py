"""
Time-slicing overhead of temporal fences.

A foreground workload alternates with an idle domain on one core. Every
switch may run a fence; the foreground pays for the fence at the end of its
own slice (direct cost) and for the cold core at the start of the next one
(indirect cost). The baseline replays exactly the same chunks with no fence.
"""

import csv
import io
import logging
from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Any, Dict, Iterable, List, Optional

import numpy as np

from tcsim.errors import ConfigError
from tcsim.fence import FenceConfig, FenceVariant, apply_mitigation
from tcsim.kernel import (
    PC_STEP,
    AllocReg,
    Branch,
    Component,
    Fetch,
    Kernel,
    KernelOp,
    Load,
    Nop,
    Store,
    execute,
    region_base,
)
from tcsim.uarch.state import ArchState, MicroarchState, UarchConfig, default_register_values, reset_state

logger = logging.getLogger(__name__)

DEFAULT_SLICE = 10_000_000
DEFAULT_SCALE = 100
DEFAULT_SLICES = 10
FOREGROUND_STACK_TOP = 0x8000_0000
IDLE_STACK_TOP = 0xA000_0000
WORKLOAD_PC_BASE = 0x6000_0000
DATA_REGION = 8
CODE_REGION = 9
PATTERN_PERIOD = 8  # every site's branch flips once per this many chunks
MIXED_RENAMES = 4


class WorkloadKind(Enum):
    POINTER_CHASE = "pointer_chase"
    STREAMING = "streaming"
    BRANCH_HEAVY = "branch_heavy"
    MIXED = "mixed"


@dataclass(frozen=True)
class Workload:
    """
    A synthetic foreground program, generated as an endless run of loop
    iterations ("chunks").

    Attributes:
        name: Label used in reports and logs
        kind: Access pattern of each chunk
        working_set: Data lines touched per chunk, or branch sites for branch_heavy
        code_lines: Instruction lines fetched per chunk
        branch_sites: Branch sites per chunk for the mixed workload
        seed: Seed of the pointer-chase visiting order
    """

    name: str
    kind: WorkloadKind
    working_set: int
    code_lines: int = 16
    branch_sites: int = 16
    seed: int = 0

    def __post_init__(self) -> None:
        if self.working_set < 1:
            raise ConfigError(f"working_set must be >= 1, got {self.working_set}")
        if self.code_lines < 0 or self.branch_sites < 0:
            raise ConfigError("code_lines and branch_sites must be non-negative")

    def chunk(self, index: int, config: UarchConfig) -> Kernel:
        """Loop iteration `index`; chunks repeat with a short period."""
        return _chunk_kernel(self, index % PATTERN_PERIOD, config)

    def kernel(self, chunks: int, config: UarchConfig) -> Kernel:
        """The first `chunks` iterations as one kernel."""
        ops: List[KernelOp] = []
        for index in range(chunks):
            ops.extend(self.chunk(index, config).ops)
        return Kernel(self.name, ops)


def default_working_set(kind: WorkloadKind, config: UarchConfig) -> int:
    """Half the L1D for data workloads, half the BHT for branch_heavy."""
    if kind is WorkloadKind.BRANCH_HEAVY:
        return max(1, config.bht.entries // 2)
    return max(1, config.l1d.capacity // 2)


def make_workload(
    kind: WorkloadKind, config: UarchConfig, working_set: Optional[int] = None, seed: int = 0
) -> Workload:
    size = working_set if working_set is not None else default_working_set(kind, config)
    return Workload(name=kind.value, kind=kind, working_set=size, seed=seed)


def parse_workload_kind(value: str) -> WorkloadKind:
    try:
        return WorkloadKind(value)
    except ValueError:
        choices = ", ".join(kind.value for kind in WorkloadKind)
        raise ConfigError(f"unknown workload {value!r}; choose from {choices}") from None


def _fetches(workload: Workload, config: UarchConfig) -> List[KernelOp]:
    base = region_base(CODE_REGION, config, Component.L1I)
    return [Fetch(base + line * config.l1i.line_bytes) for line in range(workload.code_lines)]


def _data_lines(count: int, config: UarchConfig) -> List[int]:
    base = region_base(DATA_REGION, config, Component.L1D)
    return [base + line * config.l1d.line_bytes for line in range(count)]


def _branches(sites: int, phase: int) -> List[KernelOp]:
    return [
        Branch(WORKLOAD_PC_BASE + site * PC_STEP, (phase + site) % PATTERN_PERIOD != 0)
        for site in range(sites)
    ]


@lru_cache(maxsize=256)
def _chunk_kernel(workload: Workload, phase: int, config: UarchConfig) -> Kernel:
    ops = _fetches(workload, config)
    lines = _data_lines(workload.working_set, config)

    if workload.kind is WorkloadKind.POINTER_CHASE:
        order = np.random.default_rng(workload.seed).permutation(len(lines))
        ops.extend(Load(lines[position]) for position in order)
    elif workload.kind is WorkloadKind.STREAMING:
        for address in lines:
            ops.extend((Load(address), Store(address)))
    elif workload.kind is WorkloadKind.BRANCH_HEAVY:
        ops.extend(_branches(workload.working_set, phase))
    else:
        order = np.random.default_rng(workload.seed).permutation(len(lines))
        ops.extend(Load(lines[position]) for position in order)
        ops.extend(_branches(workload.branch_sites, phase))
        ops.extend(AllocReg(1 + register) for register in range(MIXED_RENAMES))
        ops.append(Nop(1))
    return Kernel(f"{workload.name}-{phase}", ops)


@dataclass(frozen=True)
class OverheadReport:
    """
    Cost of fencing a time-sliced workload, in simulated cycles.

    mitigated_cycles = baseline_cycles + direct_cost_cycles + indirect_cost_cycles
    """

    baseline_cycles: int
    mitigated_cycles: int
    direct_cost_cycles: int
    indirect_cost_cycles: int
    slowdown_percent: float
    direct_cost_percent: float
    switches: int
    slice_cycles: int
    scale: int

    def to_dict(self) -> Dict[str, Any]:
        return OrderedDict(
            [
                ("baseline_cycles", self.baseline_cycles),
                ("mitigated_cycles", self.mitigated_cycles),
                ("direct_cost_cycles", self.direct_cost_cycles),
                ("indirect_cost_cycles", self.indirect_cost_cycles),
                ("slowdown_percent", self.slowdown_percent),
                ("direct_cost_percent", self.direct_cost_percent),
                ("switches", self.switches),
                ("slice_cycles", self.slice_cycles),
                ("scale", self.scale),
            ]
        )


class _Core:
    """One core shared by the foreground and the idle domain."""

    def __init__(self, config: UarchConfig):
        self.uarch: MicroarchState = reset_state(config)
        self.foreground = ArchState(regs=default_register_values(FOREGROUND_STACK_TOP))
        self.idle = ArchState(regs=default_register_values(IDLE_STACK_TOP))

    def run_chunks(self, workload: Workload, start: int, count: int) -> int:
        config = self.uarch.config
        return sum(
            execute(workload.chunk(index, config), self.foreground, self.uarch).cycles
            for index in range(start, start + count)
        )

    def idle_slice(self, cycles: int) -> None:
        execute(Kernel("idle", (Nop(cycles),)), self.idle, self.uarch)


def _scaled(cycles: int, scale: int) -> int:
    return -(-cycles // scale)


def run_overhead(
    workload: Workload,
    slice_cycles: int = DEFAULT_SLICE,
    cfg: Optional[FenceConfig] = None,
    total_slices: int = DEFAULT_SLICES,
    scale: int = DEFAULT_SCALE,
    fence_every: int = 1,
    uarch: Optional[UarchConfig] = None,
) -> OverheadReport:
    """
    Simulate alternating foreground and idle slices with a fence per switch.

    Args:
        workload: Foreground program
        slice_cycles: Time slice length before scaling
        cfg: Fence run at each switch; defaults to fence.t.s
        total_slices: Foreground slices to simulate
        scale: Slice and pad are divided by this factor
        fence_every: Fence only every n-th switch
        uarch: Core geometry; defaults to UarchConfig()

    Returns:
        OverheadReport with all cycle fields in simulated (scaled) units

    Raises:
        ConfigError: On a slice shorter than ten pads or bad counts
        PadOverrunError: When a fence overruns its unscaled pad target
    """
    cfg = cfg if cfg is not None else FenceConfig()
    uarch = uarch if uarch is not None else UarchConfig()
    pad = cfg.pad_target if cfg.pad_enabled else 0

    if total_slices < 1 or scale < 1 or fence_every < 1:
        raise ConfigError("total_slices, scale and fence_every must be >= 1")
    if slice_cycles < 10 * pad:
        raise ConfigError(f"slice of {slice_cycles} cycles is shorter than ten pads of {pad}")
    if slice_cycles < 1:
        raise ConfigError(f"slice_cycles must be positive, got {slice_cycles}")

    fenced = cfg.variant is not FenceVariant.NONE
    sim_slice = _scaled(slice_cycles, scale)
    sim_pad = _scaled(pad, scale)

    core = _Core(uarch)
    plan: List[int] = []
    next_chunk = 0
    foreground_cycles = 0
    direct = 0
    switches = 0

    for slice_index in range(total_slices):
        fence_now = fenced and slice_index % fence_every == 0
        budget = sim_slice - (sim_pad if fence_now else 0)
        spent, count = 0, 0
        while spent < budget:
            spent += core.run_chunks(workload, next_chunk + count, 1)
            count += 1
        plan.append(count)
        next_chunk += count
        foreground_cycles += spent

        if fence_now:
            result = apply_mitigation(core.foreground, core.uarch, cfg)
            direct += _scaled(result.padded_cycles, scale)
            switches += 1
        core.idle_slice(sim_slice)
        if fence_now:
            apply_mitigation(core.idle, core.uarch, cfg)

    baseline = _baseline_cycles(workload, plan, sim_slice, uarch)
    mitigated = foreground_cycles + direct
    indirect = mitigated - baseline - direct
    report = OverheadReport(
        baseline_cycles=baseline,
        mitigated_cycles=mitigated,
        direct_cost_cycles=direct,
        indirect_cost_cycles=indirect,
        slowdown_percent=100.0 * (mitigated - baseline) / baseline,
        direct_cost_percent=100.0 * pad / slice_cycles if fenced else 0.0,
        switches=switches,
        slice_cycles=slice_cycles,
        scale=scale,
    )
    logger.info(
        "%s: %d fences, slowdown %.3f%% (direct %d, indirect %d cycles)",
        workload.name,
        switches,
        report.slowdown_percent,
        direct,
        indirect,
    )
    return report


def _baseline_cycles(workload: Workload, plan: Iterable[int], sim_slice: int, uarch: UarchConfig) -> int:
    core = _Core(uarch)
    total = 0
    start = 0
    for count in plan:
        total += core.run_chunks(workload, start, count)
        start += count
        core.idle_slice(sim_slice)
    return total


SWEEP_HEADER = (
    "slice_cycles",
    "switches",
    "baseline_cycles",
    "mitigated_cycles",
    "direct_cost_cycles",
    "indirect_cost_cycles",
    "slowdown_percent",
    "direct_cost_percent",
)


def sweep(
    workload: Workload,
    slices: Iterable[int],
    cfg: Optional[FenceConfig] = None,
    total_slices: int = DEFAULT_SLICES,
    scale: int = DEFAULT_SCALE,
    fence_every: int = 1,
    uarch: Optional[UarchConfig] = None,
) -> List[OverheadReport]:
    """Run one overhead report per slice length, in the given order."""
    return [
        run_overhead(workload, slice_cycles, cfg, total_slices, scale, fence_every, uarch)
        for slice_cycles in slices
    ]


def sweep_csv(reports: Iterable[OverheadReport]) -> str:
    """Render sweep results as CSV with LF line endings."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    for report in reports:
        row = report.to_dict()
        writer.writerow(
            [
                row[name] if not isinstance(row[name], float) else f"{row[name]:.6f}"
                for name in SWEEP_HEADER
            ]
        )
    return buffer.getvalue()
