"""
Abstract instruction sequences and the in-order engine that runs them
against (ArchState, MicroarchState) with cycle accounting.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Type, Union

from tcsim.errors import AllocationStall, ConfigError, ContractViolation
from tcsim.uarch.cache import ADDRESS_LIMIT, AccessKind
from tcsim.uarch.rat import LOGICAL_REGISTERS
from tcsim.uarch.residual import PREFETCH_STRIDE, STORE_BUFFER
from tcsim.uarch.state import ArchState, Csr, MicroarchState, UarchConfig

logger = logging.getLogger(__name__)

SPY_PC_BASE = 0x4000_0000
TROJAN_PC_BASE = 0x5000_0000
PC_STEP = 4
REGION_SPAN = 1024  # way strides between attacker address regions


def _check_address(address: int) -> None:
    if not 0 <= address < ADDRESS_LIMIT:
        raise ConfigError(f"address {address:#x} is not a 64-bit address")


def _check_logical(logical: int) -> None:
    if not 0 <= logical < LOGICAL_REGISTERS:
        raise ConfigError(f"logical register index out of range: {logical}")


@dataclass(frozen=True)
class Load:
    address: int

    def __post_init__(self) -> None:
        _check_address(self.address)


@dataclass(frozen=True)
class Store:
    address: int

    def __post_init__(self) -> None:
        _check_address(self.address)


@dataclass(frozen=True)
class Fetch:
    address: int

    def __post_init__(self) -> None:
        _check_address(self.address)


@dataclass(frozen=True)
class Branch:
    pc: int
    taken: bool

    def __post_init__(self) -> None:
        _check_address(self.pc)


@dataclass(frozen=True)
class AllocReg:
    """Rename a destination register; the architectural value is unchanged."""

    logical: int

    def __post_init__(self) -> None:
        _check_logical(self.logical)


@dataclass(frozen=True)
class Spill:
    """Store a register to its save-area slot below sp."""

    logical: int

    def __post_init__(self) -> None:
        _check_logical(self.logical)


@dataclass(frozen=True)
class Restore:
    """Load a register back from its save-area slot."""

    logical: int

    def __post_init__(self) -> None:
        _check_logical(self.logical)


@dataclass(frozen=True)
class WriteCsr:
    which: Csr
    value: int


@dataclass(frozen=True)
class ReadCsr:
    which: Csr
    logical: int

    def __post_init__(self) -> None:
        _check_logical(self.logical)


@dataclass(frozen=True)
class Nop:
    """Idle cycles. The pipeline drains, so pending renames retire."""

    cycles: int

    def __post_init__(self) -> None:
        if self.cycles < 1:
            raise ConfigError(f"Nop needs at least one cycle, got {self.cycles}")


KernelOp = Union[Load, Store, Fetch, Branch, AllocReg, Spill, Restore, WriteCsr, ReadCsr, Nop]


@dataclass(frozen=True)
class Kernel:
    """A named, finite, non-empty op sequence."""

    name: str
    ops: Tuple[KernelOp, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "ops", tuple(self.ops))
        if not self.ops:
            raise ConfigError(f"kernel {self.name!r} has no ops")

    def __len__(self) -> int:
        return len(self.ops)


@dataclass
class RunResult:
    """
    Outcome of one kernel execution.

    Attributes:
        cycles: Total cycles, including the residual influence at kernel start
        mispredicts: Branches whose prediction was wrong
        misses: Cache misses on either L1
        corrupted: Whether any op read a destroyed register value
        stalls: Rename stalls on an empty free list
        writebacks: Dirty lines evicted by this kernel's accesses
    """

    cycles: int = 0
    mispredicts: int = 0
    misses: int = 0
    corrupted: bool = False
    stalls: int = 0
    writebacks: int = 0


class _Run:
    """Mutable bookkeeping for a single execute() call."""

    def __init__(self, arch: ArchState, uarch: MicroarchState):
        self.arch = arch
        self.uarch = uarch
        self.result = RunResult()
        self.last_load_line: Optional[int] = None

    def data_access(self, address: int, kind: AccessKind) -> int:
        outcome = self.uarch.l1d.access(address, kind)
        if not outcome.hit:
            self.result.misses += 1
        if outcome.evicted_dirty:
            self.result.writebacks += 1
        return outcome.latency

    def slot(self, logical: int) -> int:
        if self.arch.sp_index in self.arch.poisoned:
            self.result.corrupted = True
        return self.arch.spill_slot(logical, self.uarch.l1d.geometry.line_bytes)


def _load(op: Load, run: _Run) -> int:
    latency = run.data_access(op.address, AccessKind.READ)
    line = op.address // run.uarch.l1d.geometry.line_bytes
    if run.last_load_line is not None:
        run.uarch.residual.set(PREFETCH_STRIDE, line - run.last_load_line)
    run.last_load_line = line
    return latency


def _store(op: Store, run: _Run) -> int:
    latency = run.data_access(op.address, AccessKind.WRITE)
    run.uarch.residual.saturating_add(STORE_BUFFER)
    return latency


def _fetch(op: Fetch, run: _Run) -> int:
    outcome = run.uarch.l1i.access(op.address, AccessKind.FETCH)
    if not outcome.hit:
        run.result.misses += 1
    return outcome.latency


def _branch(op: Branch, run: _Run) -> int:
    timings = run.uarch.config.core
    prediction = run.uarch.bht.predict_and_update(op.pc, op.taken)
    if prediction.mispredict:
        run.result.mispredicts += 1
        return timings.branch_latency + timings.mispredict_penalty
    return timings.branch_latency


def _alloc_reg(op: AllocReg, run: _Run) -> int:
    rat = run.uarch.rat
    try:
        return rat.allocate(op.logical).latency
    except AllocationStall:
        run.result.stalls += 1
        rat.retire()
        return rat.geometry.stall_penalty + rat.allocate(op.logical).latency


def _spill(op: Spill, run: _Run) -> int:
    value, corrupted = run.arch.read_reg(op.logical)
    run.result.corrupted |= corrupted
    address = run.slot(op.logical)
    latency = run.data_access(address, AccessKind.WRITE)
    run.uarch.residual.saturating_add(STORE_BUFFER)
    run.arch.memory[address] = value
    run.arch.saved.add(op.logical)
    return latency


def _restore(op: Restore, run: _Run) -> int:
    address = run.slot(op.logical)
    latency = run.data_access(address, AccessKind.READ)
    if op.logical in run.arch.saved and address in run.arch.memory:
        run.arch.write_reg(op.logical, run.arch.memory[address])
    else:
        # Nothing was parked for this register in the current scope.
        run.result.corrupted = True
        run.arch.destroy({op.logical})
    return latency


def _write_csr(op: WriteCsr, run: _Run) -> int:
    run.arch.write_csr(op.which, op.value)
    return run.uarch.config.core.csr_latency


def _read_csr(op: ReadCsr, run: _Run) -> int:
    run.arch.write_reg(op.logical, run.arch.read_csr(op.which))
    return run.uarch.config.core.csr_latency


def _nop(op: Nop, run: _Run) -> int:
    run.uarch.rat.retire()
    return op.cycles


OP_HANDLERS: Dict[Type, Callable] = {
    Load: _load,
    Store: _store,
    Fetch: _fetch,
    Branch: _branch,
    AllocReg: _alloc_reg,
    Spill: _spill,
    Restore: _restore,
    WriteCsr: _write_csr,
    ReadCsr: _read_csr,
    Nop: _nop,
}


def execute(kernel: Kernel, arch: ArchState, uarch: MicroarchState) -> RunResult:
    """
    Run every op of a kernel in order and account its cycles.

    The residual flip-flops contribute their timing influence once at kernel
    start; the store buffer then drains to zero and refills with this kernel's
    stores.

    Args:
        kernel: Ops to run
        arch: Architectural state, mutated in place
        uarch: Microarchitectural state, mutated in place

    Returns:
        RunResult with cycle and event counts
    """
    run = _Run(arch, uarch)
    run.result.cycles = uarch.residual.timing_influence()
    uarch.residual.set(STORE_BUFFER, 0)

    for op in kernel.ops:
        handler = OP_HANDLERS.get(type(op))
        if handler is None:
            raise ContractViolation(f"unknown kernel op {op!r}")
        run.result.cycles += handler(op, run)

    if run.result.stalls:
        logger.debug("kernel %s stalled %d times on rename", kernel.name, run.result.stalls)
    return run.result


class Component(Enum):
    """Structures a trojan can modulate and a spy can probe."""

    L1D = "l1d"
    L1I = "l1i"
    BHT = "bht"
    RAT = "rat"


def capacity(component: Component, config: UarchConfig) -> int:
    """Largest meaningful trojan intensity: lines, counters, or free registers."""
    if component is Component.L1D:
        return config.l1d.capacity
    if component is Component.L1I:
        return config.l1i.capacity
    if component is Component.BHT:
        return config.bht.entries
    return config.rat.free_capacity


def region_base(region: int, config: UarchConfig, component: Component) -> int:
    """Base address of an attacker region; every region starts at set 0."""
    geometry = config.l1i if component is Component.L1I else config.l1d
    return region * REGION_SPAN * geometry.way_stride


def _spy_base(component: Component, config: UarchConfig) -> int:
    return region_base(1 if component is Component.L1D else 3, config, component)


def _trojan_base(component: Component, config: UarchConfig) -> int:
    return region_base(2 if component is Component.L1D else 4, config, component)


def _rename_target(index: int) -> int:
    return 1 + index % (LOGICAL_REGISTERS - 1)


def make_prime_kernel(component: Component, intensity: int, config: UarchConfig) -> Kernel:
    """
    Build the trojan's encoding kernel for a secret.

    Args:
        component: Structure to modulate
        intensity: Number of lines, counters or renames to touch (the secret)
        config: Core geometry the addresses are laid out for

    Returns:
        A Kernel; intensity 0 yields a single Nop

    Example:
        make_prime_kernel(Component.BHT, 3, config) -> three taken branches at
        distinct pcs
    """
    limit = capacity(component, config)
    if not 0 <= intensity <= limit:
        raise ConfigError(
            f"{component.value} intensity must be in 0..{limit}, got {intensity}"
        )
    name = f"trojan-{component.value}-{intensity}"
    if intensity == 0:
        return Kernel(name, (Nop(1),))

    ops: List[KernelOp]
    if component is Component.L1D:
        base, step = _trojan_base(component, config), config.l1d.line_bytes
        ops = [Store(base + index * step) for index in range(intensity)]
    elif component is Component.L1I:
        base, step = _trojan_base(component, config), config.l1i.line_bytes
        ops = [Fetch(base + index * step) for index in range(intensity)]
    elif component is Component.BHT:
        ops = [Branch(TROJAN_PC_BASE + index * PC_STEP, True) for index in range(intensity)]
    else:
        ops = [AllocReg(_rename_target(index)) for index in range(intensity)]
    return Kernel(name, ops)


def make_probe_kernel(component: Component, config: UarchConfig) -> Kernel:
    """
    Build the spy's probe kernel; its execution time is the observation.

    Caches are swept line by line. Each BHT entry sees three not-taken
    branches and one taken branch, which drains any counter and leaves it at
    1, so the probe also re-primes. The rename probe renames half the free
    list and then idles one cycle so everything retires.
    """
    name = f"spy-{component.value}"
    ops: List[KernelOp]
    if component is Component.L1D:
        base, step = _spy_base(component, config), config.l1d.line_bytes
        ops = [Load(base + index * step) for index in range(config.l1d.capacity)]
    elif component is Component.L1I:
        base, step = _spy_base(component, config), config.l1i.line_bytes
        ops = [Fetch(base + index * step) for index in range(config.l1i.capacity)]
    elif component is Component.BHT:
        ops = []
        for index in range(config.bht.entries):
            pc = SPY_PC_BASE + index * PC_STEP
            ops.extend([Branch(pc, False), Branch(pc, False), Branch(pc, False), Branch(pc, True)])
    else:
        sweep = max(1, config.rat.free_capacity // 2)
        ops = [AllocReg(_rename_target(index)) for index in range(sweep)]
        ops.append(Nop(1))
    return Kernel(name, ops)


def parse_component(value: Union[str, Component]) -> Component:
    if isinstance(value, Component):
        return value
    try:
        return Component(value)
    except ValueError:
        choices = ", ".join(component.value for component in Component)
        raise ConfigError(f"unknown component {value!r}; choose from {choices}") from None


def run_sequence(kernels: Sequence[Kernel], arch: ArchState, uarch: MicroarchState) -> List[RunResult]:
    """Execute kernels back to back on shared state."""
    return [execute(kernel, arch, uarch) for kernel in kernels]
