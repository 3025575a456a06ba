"""
Whole-core state: the clearable microarchitecture and the architectural
state that every fence must preserve.
"""

import copy
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Set, Tuple

from tcsim.errors import ConfigError, ContractViolation
from tcsim.uarch.bht import BhtGeometry, BhtState
from tcsim.uarch.cache import CacheGeometry, CacheKind, CacheState
from tcsim.uarch.rat import LOGICAL_REGISTERS, RatState, RenameGeometry
from tcsim.uarch.residual import ResidualState

MASK64 = (1 << 64) - 1
DEFAULT_STACK_TOP = 0x8000_0000
CORRUPTED_VALUE = 0xBAD0_BAD0_BAD0_BAD0


class Csr(Enum):
    """CSRs the fence sequence relies on. Neither is touched by ff.clr."""

    SCRATCH = "scratch"
    RESUME = "resume"


@dataclass(frozen=True)
class CoreTimings:
    """Per-op costs that do not belong to a single state element."""

    branch_latency: int = 1
    mispredict_penalty: int = 12
    csr_latency: int = 1

    def __post_init__(self) -> None:
        if self.mispredict_penalty <= 0 or self.branch_latency < 1 or self.csr_latency < 1:
            raise ConfigError("core timings must be positive")


@dataclass(frozen=True)
class UarchConfig:
    """Everything needed to build a reset core."""

    l1d: CacheGeometry = field(default_factory=CacheGeometry)
    l1i: CacheGeometry = field(default_factory=CacheGeometry)
    bht: BhtGeometry = field(default_factory=BhtGeometry)
    rat: RenameGeometry = field(default_factory=RenameGeometry)
    ff_clear_latency: int = 2
    core: CoreTimings = field(default_factory=CoreTimings)

    def __post_init__(self) -> None:
        if self.ff_clear_latency < 0:
            raise ConfigError("ff_clear_latency must be non-negative")


@dataclass
class MicroarchState:
    """All on-core state the fence has to clear."""

    config: UarchConfig
    l1d: CacheState
    l1i: CacheState
    bht: BhtState
    rat: RatState
    residual: ResidualState

    def elements(self) -> Tuple[CacheState, CacheState, BhtState, RatState, ResidualState]:
        return (self.l1d, self.l1i, self.bht, self.rat, self.residual)

    def clear_everything(self) -> int:
        """Reset every element regardless of what it holds. Dirty data is lost."""
        return sum(element.clear() for element in self.elements())

    def is_reset(self) -> bool:
        return all(element.is_reset() for element in self.elements())

    def copy(self) -> "MicroarchState":
        return copy.deepcopy(self)


def reset_state(config: UarchConfig) -> MicroarchState:
    """
    Build a core in its power-on state.

    Caches are invalid, the BHT holds its reset value, the RAT is the identity
    map and every residual register is zero.
    """
    if not isinstance(config, UarchConfig):
        raise ConfigError(f"expected UarchConfig, got {type(config).__name__}")
    return MicroarchState(
        config=config,
        l1d=CacheState(config.l1d, CacheKind.DATA),
        l1i=CacheState(config.l1i, CacheKind.INSTRUCTION),
        bht=BhtState(config.bht),
        rat=RatState(config.rat),
        residual=ResidualState(clear_latency=config.ff_clear_latency),
    )


def default_register_values(stack_top: int = DEFAULT_STACK_TOP, sp_index: int = 2) -> List[int]:
    values = [0] + [(index * 0x9E37_79B9_7F4A_7C15) & MASK64 for index in range(1, LOGICAL_REGISTERS)]
    values[sp_index] = stack_top
    return values


@dataclass
class ArchState:
    """
    Software-visible state: logical registers, two CSRs and sparse memory.

    `saved` lists registers whose value is currently parked outside the
    register file (spilled to memory, or sp in the scratch CSR) within the
    running fence scope. `poisoned` lists registers whose value was destroyed.
    """

    regs: List[int] = field(default_factory=default_register_values)
    sp_index: int = 2
    scratch_csr: int = 0
    resume_csr: int = 0
    memory: Dict[int, int] = field(default_factory=dict)
    saved: Set[int] = field(default_factory=set)
    poisoned: Set[int] = field(default_factory=set)

    def __post_init__(self) -> None:
        if len(self.regs) != LOGICAL_REGISTERS:
            raise ConfigError(f"expected {LOGICAL_REGISTERS} registers, got {len(self.regs)}")
        if not 0 < self.sp_index < LOGICAL_REGISTERS:
            raise ConfigError(f"sp_index out of range: {self.sp_index}")
        self.regs = [value & MASK64 for value in self.regs]

    @property
    def sp(self) -> int:
        return self.regs[self.sp_index]

    def read_reg(self, logical: int) -> Tuple[int, bool]:
        """Return (value, corrupted). A destroyed register reads as the sentinel."""
        if logical in self.poisoned:
            return CORRUPTED_VALUE, True
        return self.regs[logical], False

    def write_reg(self, logical: int, value: int) -> None:
        self.regs[logical] = value & MASK64
        self.poisoned.discard(logical)

    def read_csr(self, which: Csr) -> int:
        return self.scratch_csr if which is Csr.SCRATCH else self.resume_csr

    def write_csr(self, which: Csr, value: int) -> None:
        if which is Csr.SCRATCH:
            self.scratch_csr = value & MASK64
        else:
            self.resume_csr = value & MASK64

    def spill_slot(self, logical: int, line_bytes: int) -> int:
        """Save-area address of a register: one cache line per slot below sp."""
        address = self.sp - (logical + 1) * line_bytes
        if address < 0:
            raise ContractViolation(f"stack pointer {self.sp:#x} too low to spill x{logical}")
        return address

    def destroy(self, registers: Set[int]) -> None:
        """Mark register values as lost; reads now return the sentinel."""
        for logical in registers:
            self.regs[logical] = CORRUPTED_VALUE
        self.poisoned |= registers

    def end_scope(self) -> None:
        self.saved.clear()

    def checksum(self) -> Tuple[int, ...]:
        return tuple(self.regs)

    def copy(self) -> "ArchState":
        return copy.deepcopy(self)
