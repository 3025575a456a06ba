"""
Register alias table: logical-to-physical mapping with a free list.

A physical register superseded by a rename is not free straight away; it sits
in the in-flight list until the pipeline retires it. The three collections
together always hold every physical register exactly once.
"""

from dataclasses import dataclass, field
from typing import List, NamedTuple

from tcsim.errors import AllocationStall, ConfigError
from tcsim.uarch.base import StateElement

LOGICAL_REGISTERS = 32


class Allocation(NamedTuple):
    """A completed rename."""

    physical: int
    latency: int


@dataclass(frozen=True)
class RenameGeometry:
    """Physical register file size and rename timing."""

    phys_count: int = 48
    rename_base: int = 1
    stall_penalty: int = 10
    # Charged inside the ff.clr sweep.
    clear_latency: int = 0

    def __post_init__(self) -> None:
        if self.phys_count <= LOGICAL_REGISTERS:
            raise ConfigError(
                f"phys_count must exceed {LOGICAL_REGISTERS} logical registers, got {self.phys_count}"
            )
        if self.rename_base < 0 or self.stall_penalty < 0 or self.clear_latency < 0:
            raise ConfigError("rename latencies must be non-negative")

    @property
    def free_capacity(self) -> int:
        """Free-list length right after reset."""
        return self.phys_count - LOGICAL_REGISTERS

    @property
    def penalty_threshold(self) -> int:
        return self.phys_count // 4


@dataclass
class RatState(StateElement):
    """Rename map, free list, and renames waiting to retire."""

    geometry: RenameGeometry
    map: List[int] = field(default_factory=list)
    free_list: List[int] = field(default_factory=list)
    in_flight: List[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.map:
            self.clear()

    def occupancy_penalty(self, free_length: int) -> int:
        """Zero while the free list is above a quarter of the file, then +1 per missing entry."""
        return max(0, self.geometry.penalty_threshold - free_length)

    def allocate(self, logical: int) -> Allocation:
        """
        Rename a logical register to the head of the free list.

        Args:
            logical: Destination register index (0..31)

        Returns:
            Allocation with the new physical register and the rename latency

        Raises:
            AllocationStall: When the free list is empty
        """
        if not 0 <= logical < LOGICAL_REGISTERS:
            raise ConfigError(f"logical register index out of range: {logical}")
        if not self.free_list:
            raise AllocationStall(f"no free physical register for x{logical}")

        latency = self.geometry.rename_base + self.occupancy_penalty(len(self.free_list))
        physical = self.free_list.pop(0)
        self.in_flight.append(self.map[logical])
        self.map[logical] = physical
        return Allocation(physical, latency)

    def retire(self) -> int:
        """Return every in-flight register to the free-list tail, oldest first."""
        retired = len(self.in_flight)
        self.free_list.extend(self.in_flight)
        self.in_flight.clear()
        return retired

    def clear(self) -> int:
        """
        Reset to the identity mapping.

        Values held only in previously mapped physical registers become
        unreachable; callers that care must have saved them first.
        """
        self.map = list(range(LOGICAL_REGISTERS))
        self.free_list = list(range(LOGICAL_REGISTERS, self.geometry.phys_count))
        self.in_flight = []
        return self.geometry.clear_latency

    def is_reset(self) -> bool:
        return (
            self.map == list(range(LOGICAL_REGISTERS))
            and self.free_list == list(range(LOGICAL_REGISTERS, self.geometry.phys_count))
            and not self.in_flight
        )

    def renamed(self) -> List[int]:
        """Logical registers whose value lives outside their reset physical register."""
        return [logical for logical, physical in enumerate(self.map) if physical != logical]

    def is_consistent(self) -> bool:
        """Check that map, free list and in-flight list partition the register file."""
        held = self.map + self.free_list + self.in_flight
        return sorted(held) == list(range(self.geometry.phys_count))
