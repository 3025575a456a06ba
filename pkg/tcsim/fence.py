"""
Temporal fences: the software-supported fence.t.s, the monolithic hardware
clear that corrupts mixed state, and worst-case time padding.

Every step is exposed as its own primitive so a scheduler can compose the
mitigation it needs.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Tuple

from tcsim.errors import ConfigError, ContractViolation, PadOverrunError
from tcsim.kernel import Kernel, ReadCsr, Restore, Spill, execute
from tcsim.uarch.cache import AccessKind
from tcsim.uarch.rat import LOGICAL_REGISTERS
from tcsim.uarch.residual import ResidualState
from tcsim.uarch.state import ArchState, Csr, MicroarchState, UarchConfig, reset_state

logger = logging.getLogger(__name__)

DEFAULT_PAD_TARGET = 15_000
# Address of the instruction after ff.clr; the core resumes here out of reset.
RESUME_ADDRESS = 0x7FFF_F000
ADVERSARY_BASE = 0x1_0000_0000


class FenceVariant(Enum):
    FENCE_T_S = "fence.t.s"
    NAIVE_HW = "naive"
    NONE = "none"
    CUSTOM = "custom"


class FenceStep(Enum):
    SPILL_REGS = "spill_regs"
    CLEAN_L1D = "clean_l1d"
    INVALIDATE_SRAMS = "invalidate_srams"
    CLEAR_FFS = "clear_ffs"
    CLEAR_RAT = "clear_rat"
    RESTORE_REGS = "restore_regs"
    PAD = "pad"


ALGORITHM_ORDER: Tuple[FenceStep, ...] = (
    FenceStep.SPILL_REGS,
    FenceStep.CLEAN_L1D,
    FenceStep.INVALIDATE_SRAMS,
    FenceStep.CLEAR_FFS,
    FenceStep.CLEAR_RAT,
    FenceStep.RESTORE_REGS,
    FenceStep.PAD,
)

NAIVE_ORDER: Tuple[FenceStep, ...] = (
    FenceStep.CLEAN_L1D,
    FenceStep.INVALIDATE_SRAMS,
    FenceStep.CLEAR_FFS,
    FenceStep.CLEAR_RAT,
    FenceStep.PAD,
)

FIXED_ORDERS = {
    FenceVariant.FENCE_T_S: ALGORITHM_ORDER,
    FenceVariant.NAIVE_HW: NAIVE_ORDER,
    FenceVariant.NONE: (),
}


@dataclass(frozen=True)
class FenceConfig:
    """Which mitigation runs on a context switch and how long it is padded to."""

    variant: FenceVariant = FenceVariant.FENCE_T_S
    pad_target: int = DEFAULT_PAD_TARGET
    steps: Tuple[FenceStep, ...] = ()

    def __post_init__(self) -> None:
        steps = tuple(self.steps)
        if self.variant is FenceVariant.CUSTOM:
            if len(set(steps)) != len(steps):
                raise ConfigError("custom fence lists a step more than once")
            if FenceStep.PAD in steps and steps[-1] is not FenceStep.PAD:
                raise ConfigError("the pad step must come last")
        else:
            expected = FIXED_ORDERS[self.variant]
            if steps and steps != expected:
                raise ConfigError(
                    f"{self.variant.value} runs a fixed step order; use the custom variant to change it"
                )
            steps = expected
        object.__setattr__(self, "steps", steps)
        if FenceStep.PAD in steps and self.pad_target <= 0:
            raise ConfigError(f"pad_target must be positive, got {self.pad_target}")

    @property
    def pad_enabled(self) -> bool:
        return FenceStep.PAD in self.steps

    @classmethod
    def custom(cls, steps, pad_target: int = DEFAULT_PAD_TARGET) -> "FenceConfig":
        return cls(FenceVariant.CUSTOM, pad_target, tuple(steps))


@dataclass
class FenceResult:
    """
    Cost and outcome of one fence.

    Attributes:
        raw_cycles: Sum of the step costs
        padded_cycles: Cycles observed by the scheduler
        corrupted: Whether architectural register values were destroyed
        step_costs: Cycles per step, keyed by step name
    """

    raw_cycles: int = 0
    padded_cycles: int = 0
    corrupted: bool = False
    step_costs: Dict[str, int] = field(default_factory=dict)


def spill_registers(arch: ArchState, uarch: MicroarchState) -> int:
    """Store every logical register except sp to its save-area slot."""
    ops = [Spill(logical) for logical in range(LOGICAL_REGISTERS) if logical != arch.sp_index]
    return execute(Kernel("fence-spill", ops), arch, uarch).cycles


def save_stack_pointer(arch: ArchState, uarch: MicroarchState) -> int:
    """Park sp in the scratch CSR, which survives the flip-flop clear."""
    arch.write_csr(Csr.SCRATCH, arch.sp)
    arch.saved.add(arch.sp_index)
    return uarch.config.core.csr_latency


def set_resume_vector(arch: ArchState, uarch: MicroarchState) -> int:
    arch.write_csr(Csr.RESUME, RESUME_ADDRESS)
    return uarch.config.core.csr_latency


def clean_l1d(arch: ArchState, uarch: MicroarchState) -> int:
    return uarch.l1d.clean_all()


def invalidate_srams(arch: ArchState, uarch: MicroarchState) -> int:
    """Invalidate both L1 caches and the branch predictor."""
    return uarch.l1d.invalidate_all() + uarch.l1i.invalidate_all() + uarch.bht.invalidate()


def clear_flip_flops(arch: ArchState, uarch: MicroarchState) -> int:
    return uarch.residual.ff_clear()


def clear_rat(arch: ArchState, uarch: MicroarchState) -> int:
    """
    Reset the rename map to identity.

    Any renamed register whose value is not parked in memory or a CSR loses
    its value: the identity mapping points at a stale physical register.
    """
    lost = set(uarch.rat.renamed()) - arch.saved
    if lost:
        logger.debug("rename clear destroys %s", sorted(lost))
        arch.destroy(lost)
    return uarch.rat.clear()


def restore_stack_pointer(arch: ArchState, uarch: MicroarchState) -> int:
    """Reload sp from the scratch CSR, or lose it if it was never parked."""
    if arch.sp_index not in arch.saved:
        arch.destroy({arch.sp_index})
        return uarch.config.core.csr_latency
    reload = Kernel("fence-restore-sp", (ReadCsr(Csr.SCRATCH, arch.sp_index),))
    return execute(reload, arch, uarch).cycles


def restore_registers(arch: ArchState, uarch: MicroarchState) -> int:
    ops = [Restore(logical) for logical in range(LOGICAL_REGISTERS) if logical != arch.sp_index]
    return execute(Kernel("fence-restore", ops), arch, uarch).cycles


def pad_time(raw: int, target: int) -> int:
    """
    Stretch a fence to its worst-case duration.

    Raises:
        PadOverrunError: When raw already exceeds the target
    """
    if target <= 0:
        raise ConfigError(f"pad target must be positive, got {target}")
    if raw > target:
        raise PadOverrunError(raw, target)
    return target


StepAction = Callable[[ArchState, MicroarchState], int]

STEP_ACTIONS: Dict[FenceStep, Tuple[StepAction, ...]] = {
    FenceStep.SPILL_REGS: (spill_registers, save_stack_pointer, set_resume_vector),
    FenceStep.CLEAN_L1D: (clean_l1d,),
    FenceStep.INVALIDATE_SRAMS: (invalidate_srams,),
    FenceStep.CLEAR_FFS: (clear_flip_flops,),
    FenceStep.CLEAR_RAT: (clear_rat,),
    FenceStep.RESTORE_REGS: (restore_stack_pointer, restore_registers),
}


def run_fence(arch: ArchState, uarch: MicroarchState, cfg: FenceConfig) -> FenceResult:
    """
    Run the configured steps in order and pad if asked.

    Args:
        arch: Architectural state of the domain being switched out
        uarch: Core state shared by all domains
        cfg: Fence variant, step order and pad target

    Returns:
        FenceResult with raw and padded cycles and the corruption verdict

    Raises:
        PadOverrunError: When padding is enabled and the steps overran it
    """
    result = FenceResult()
    already_lost = set(arch.poisoned)
    for step in cfg.steps:
        if step is FenceStep.PAD:
            continue
        cost = sum(action(arch, uarch) for action in STEP_ACTIONS[step])
        result.step_costs[step.value] = cost
        result.raw_cycles += cost
        # A later restore can overwrite a destroyed value, so check after every step.
        result.corrupted |= bool(arch.poisoned - already_lost)

    arch.end_scope()

    if cfg.pad_enabled:
        result.padded_cycles = pad_time(result.raw_cycles, cfg.pad_target)
        result.step_costs[FenceStep.PAD.value] = result.padded_cycles - result.raw_cycles
        if cfg.pad_target - result.raw_cycles < cfg.pad_target // 10:
            logger.warning(
                "fence used %d of %d padded cycles", result.raw_cycles, cfg.pad_target
            )
    else:
        result.padded_cycles = result.raw_cycles

    logger.debug("fence %s steps %s", cfg.variant.value, result.step_costs)
    return result


def fence_t_s(arch: ArchState, uarch: MicroarchState, cfg: FenceConfig) -> FenceResult:
    """Software-supported temporal fence: spill, clear everything, restore, pad."""
    if cfg.variant is not FenceVariant.FENCE_T_S:
        raise ContractViolation(f"fence_t_s called with variant {cfg.variant.value}")
    return run_fence(arch, uarch, cfg)


def naive_hw_fence(arch: ArchState, uarch: MicroarchState, cfg: FenceConfig) -> FenceResult:
    """Monolithic clear with no register spill; renamed registers are lost."""
    if cfg.variant is not FenceVariant.NAIVE_HW:
        raise ContractViolation(f"naive_hw_fence called with variant {cfg.variant.value}")
    return run_fence(arch, uarch, cfg)


def apply_mitigation(arch: ArchState, uarch: MicroarchState, cfg: FenceConfig) -> FenceResult:
    """Context-switch hook used by the bench and the overhead model."""
    if cfg.variant is FenceVariant.NONE:
        return FenceResult()
    return run_fence(arch, uarch, cfg)


def worst_case_raw_cycles(cfg: FenceConfig, config: UarchConfig, check: bool = True) -> int:
    """
    Analytic upper bound on fence.t.s raw cycles.

    The bound is reached when the store buffer is full, every spill store
    misses and evicts a dirty line, the L1D is fully dirty at clean time, and
    every restore load misses.

    Raises:
        ConfigError: When check is set, padding is enabled and the bound
            exceeds the pad target
    """
    l1d = config.l1d
    core = config.core
    saved = LOGICAL_REGISTERS - 1
    residual = ResidualState(clear_latency=config.ff_clear_latency)

    spill = residual.max_influence() + saved * (l1d.miss_latency + l1d.writeback_latency)
    csr_saves = 2 * core.csr_latency
    clean = l1d.clean_base + l1d.capacity * l1d.writeback_latency
    invalidate = l1d.invalidate_latency + config.l1i.invalidate_latency + config.bht.invalidate_latency
    clears = config.ff_clear_latency + config.rat.clear_latency
    restore = core.csr_latency + saved * l1d.miss_latency
    bound = spill + csr_saves + clean + invalidate + clears + restore

    if check and cfg.pad_enabled and bound > cfg.pad_target:
        raise ConfigError(
            f"worst-case fence time {bound} cycles exceeds pad target {cfg.pad_target}"
        )
    return bound


def adversarial_state(config: UarchConfig, arch: ArchState) -> MicroarchState:
    """
    Build the core state that drives fence.t.s to its worst case.

    Every L1D line holds dirty data from outside arch's save area and every
    residual register is saturated.
    """
    uarch = reset_state(config)
    geometry = config.l1d
    first = ADVERSARY_BASE // geometry.line_bytes
    lines = range(first, first + geometry.capacity)
    save_area = {
        arch.spill_slot(logical, geometry.line_bytes) // geometry.line_bytes
        for logical in range(LOGICAL_REGISTERS)
        if logical != arch.sp_index
    }
    if save_area.intersection(lines):
        raise ContractViolation("stack save area overlaps the adversarial fill region")
    for line in lines:
        uarch.l1d.access(line * geometry.line_bytes, AccessKind.WRITE)
    for register in uarch.residual.registers:
        register.value = register.max_value
    return uarch


def parse_variant(value: str) -> FenceVariant:
    try:
        return FenceVariant(value)
    except ValueError:
        choices = ", ".join(variant.value for variant in FenceVariant)
        raise ConfigError(f"unknown mitigation {value!r}; choose from {choices}") from None
