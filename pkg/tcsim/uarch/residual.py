"""
Residual flip-flop state: small named registers that carry timing influence
from one kernel into the next.
"""

from dataclasses import dataclass, field
from typing import Dict, List

from tcsim.errors import ConfigError
from tcsim.uarch.base import StateElement

STORE_BUFFER = "store_buffer"
PREFETCH_STRIDE = "prefetch_stride"


@dataclass
class ResidualRegister:
    """An unsigned register with a declared width and additive timing influence."""

    name: str
    width: int
    cycles_per_unit: int
    value: int = 0

    @property
    def max_value(self) -> int:
        return (1 << self.width) - 1


def default_registers() -> List[ResidualRegister]:
    return [
        ResidualRegister(STORE_BUFFER, width=4, cycles_per_unit=1),
        ResidualRegister(PREFETCH_STRIDE, width=8, cycles_per_unit=0),
    ]


@dataclass
class ResidualState(StateElement):
    """Flip-flops cleared by ff.clr. CSRs are not part of this pool."""

    registers: List[ResidualRegister] = field(default_factory=default_registers)
    clear_latency: int = 2

    def __post_init__(self) -> None:
        names = [register.name for register in self.registers]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate residual register names: {names}")
        if self.clear_latency < 0:
            raise ConfigError("clear_latency must be non-negative")

    def _find(self, name: str) -> ResidualRegister:
        for register in self.registers:
            if register.name == name:
                return register
        raise KeyError(name)

    def get(self, name: str) -> int:
        return self._find(name).value

    def set(self, name: str, value: int) -> None:
        """Store a value, truncated to the register width."""
        register = self._find(name)
        register.value = value & register.max_value

    def saturating_add(self, name: str, amount: int = 1) -> None:
        register = self._find(name)
        register.value = min(register.max_value, register.value + amount)

    def values(self) -> Dict[str, int]:
        return {register.name: register.value for register in self.registers}

    def timing_influence(self) -> int:
        """Cycles the current values add to the next kernel."""
        return sum(register.value * register.cycles_per_unit for register in self.registers)

    def max_influence(self) -> int:
        return sum(register.max_value * register.cycles_per_unit for register in self.registers)

    def ff_clear(self) -> int:
        for register in self.registers:
            register.value = 0
        return self.clear_latency

    def clear(self) -> int:
        return self.ff_clear()

    def is_reset(self) -> bool:
        return all(register.value == 0 for register in self.registers)
