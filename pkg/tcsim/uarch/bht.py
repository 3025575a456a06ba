"""
Branch history table of 2-bit saturating counters.
"""

from dataclasses import dataclass, field
from typing import List, NamedTuple

from tcsim.errors import ConfigError
from tcsim.uarch.base import StateElement

COUNTER_MAX = 3
TAKEN_THRESHOLD = 2
PC_SHIFT = 2


class Prediction(NamedTuple):
    """Outcome of one predicted branch."""

    predicted_taken: bool
    mispredict: bool


@dataclass(frozen=True)
class BhtGeometry:
    """Size and reset behaviour of the table."""

    index_bits: int = 7
    reset_value: int = 1  # weakly not-taken
    invalidate_latency: int = 4

    def __post_init__(self) -> None:
        if not 1 <= self.index_bits <= 20:
            raise ConfigError(f"index_bits must be in 1..20, got {self.index_bits}")
        if not 0 <= self.reset_value <= COUNTER_MAX:
            raise ConfigError(f"reset_value must be a 2-bit counter value, got {self.reset_value}")
        if self.invalidate_latency < 0:
            raise ConfigError("invalidate_latency must be non-negative")

    @property
    def entries(self) -> int:
        return 1 << self.index_bits


@dataclass
class BhtState(StateElement):
    """Counter table indexed by low PC bits above the instruction alignment."""

    geometry: BhtGeometry
    counters: List[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.counters:
            self.counters = [self.geometry.reset_value] * self.geometry.entries

    def index(self, pc: int) -> int:
        return (pc >> PC_SHIFT) & (self.geometry.entries - 1)

    def predict_and_update(self, pc: int, actual_taken: bool) -> Prediction:
        """
        Predict the branch at pc, then train the counter with the real outcome.

        Example:
            From reset (counter 1) a taken branch is predicted not-taken,
            mispredicts, and moves the counter to 2.
        """
        slot = self.index(pc)
        counter = self.counters[slot]
        predicted_taken = counter >= TAKEN_THRESHOLD
        if actual_taken:
            self.counters[slot] = min(COUNTER_MAX, counter + 1)
        else:
            self.counters[slot] = max(0, counter - 1)
        return Prediction(predicted_taken, predicted_taken != actual_taken)

    def invalidate(self) -> int:
        reset_value = self.geometry.reset_value
        for slot in range(len(self.counters)):
            self.counters[slot] = reset_value
        return self.geometry.invalidate_latency

    def clear(self) -> int:
        return self.invalidate()

    def is_reset(self) -> bool:
        return all(counter == self.geometry.reset_value for counter in self.counters)
