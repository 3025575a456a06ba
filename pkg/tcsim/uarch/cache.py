"""
Set-associative L1 cache model with true-LRU replacement and write-back lines.

Addresses index a set by (address // line_bytes) % sets; the remaining high
bits of the line number form the tag.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, NamedTuple, Set, Tuple

from tcsim.errors import ConfigError, ContractViolation
from tcsim.uarch.base import StateElement

ADDRESS_LIMIT = 1 << 64


class CacheKind(Enum):
    """Which side of the split L1 a cache sits on."""

    DATA = "data"
    INSTRUCTION = "instruction"


class AccessKind(Enum):
    """Kind of request presented to a cache."""

    READ = "read"
    WRITE = "write"
    FETCH = "fetch"


ALLOWED_ACCESSES = {
    CacheKind.DATA: (AccessKind.READ, AccessKind.WRITE),
    CacheKind.INSTRUCTION: (AccessKind.FETCH,),
}


class AccessResult(NamedTuple):
    """
    Outcome of a single cache access.

    Attributes:
        hit: Whether the line was already present
        latency: Cycles charged for the access, including any writeback
        evicted_dirty: Whether a dirty victim had to be written back
    """

    hit: bool
    latency: int
    evicted_dirty: bool


@dataclass(frozen=True)
class CacheGeometry:
    """Shape and latency table of one cache."""

    sets: int = 64
    ways: int = 2
    line_bytes: int = 64
    hit_latency: int = 2
    miss_latency: int = 20
    writeback_latency: int = 8
    clean_base: int = 10
    invalidate_latency: int = 4

    def __post_init__(self) -> None:
        if self.sets < 1 or self.ways < 1:
            raise ConfigError(f"cache needs at least one set and one way, got {self.sets}x{self.ways}")
        if self.line_bytes < 4 or self.line_bytes & (self.line_bytes - 1):
            raise ConfigError(f"line_bytes must be a power of two >= 4, got {self.line_bytes}")
        if self.hit_latency < 1:
            raise ConfigError(f"hit_latency must be >= 1, got {self.hit_latency}")
        if self.miss_latency <= self.hit_latency:
            raise ConfigError(
                f"miss_latency ({self.miss_latency}) must exceed hit_latency ({self.hit_latency})"
            )
        if self.writeback_latency < 1:
            raise ConfigError(f"writeback_latency must be >= 1, got {self.writeback_latency}")
        if self.clean_base < 0 or self.invalidate_latency < 0:
            raise ConfigError("clean_base and invalidate_latency must be non-negative")

    @property
    def capacity(self) -> int:
        """Number of lines the cache holds."""
        return self.sets * self.ways

    @property
    def way_stride(self) -> int:
        """Byte distance between two addresses that map to the same set."""
        return self.sets * self.line_bytes


@dataclass
class CacheLine:
    """One (set, way) slot. lru_rank 0 is the most recently used valid line."""

    tag: int = 0
    valid: bool = False
    dirty: bool = False
    lru_rank: int = 0


@dataclass
class CacheState(StateElement):
    """Contents of one L1 cache."""

    geometry: CacheGeometry
    kind: CacheKind
    lines: List[List[CacheLine]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.lines:
            self.lines = [
                [CacheLine() for _ in range(self.geometry.ways)]
                for _ in range(self.geometry.sets)
            ]

    def locate(self, address: int) -> Tuple[int, int]:
        """Split an address into (set index, tag)."""
        if not 0 <= address < ADDRESS_LIMIT:
            raise ContractViolation(f"address {address:#x} is not a 64-bit address")
        line_number = address // self.geometry.line_bytes
        return line_number % self.geometry.sets, line_number // self.geometry.sets

    def access(self, address: int, kind: AccessKind) -> AccessResult:
        """
        Look up an address, filling the line on a miss.

        Args:
            address: Any byte address
            kind: read or write for data caches, fetch for instruction caches

        Returns:
            AccessResult with hit flag, latency and whether a dirty line was evicted

        Example:
            On a 2-set direct-mapped cache, write(0x00) then read(0x80) misses and
            evicts the dirty line: latency = miss_latency + writeback_latency.
        """
        if kind not in ALLOWED_ACCESSES[self.kind]:
            raise ContractViolation(f"{kind.value} access on {self.kind.value} cache")

        geometry = self.geometry
        set_index, tag = self.locate(address)
        ways = self.lines[set_index]

        for line in ways:
            if line.valid and line.tag == tag:
                self._touch(ways, line)
                if kind is AccessKind.WRITE:
                    line.dirty = True
                return AccessResult(hit=True, latency=geometry.hit_latency, evicted_dirty=False)

        victim = self._victim(ways)
        evicted_dirty = victim.valid and victim.dirty
        latency = geometry.miss_latency
        if evicted_dirty:
            latency += geometry.writeback_latency

        self._touch(ways, victim)
        victim.tag = tag
        victim.valid = True
        victim.dirty = kind is AccessKind.WRITE
        return AccessResult(hit=False, latency=latency, evicted_dirty=evicted_dirty)

    def clean_all(self) -> int:
        """
        Write back every dirty line without invalidating anything.

        Returns:
            clean_base + dirty lines x writeback_latency
        """
        if self.kind is not CacheKind.DATA:
            raise ContractViolation("clean_all is only defined for data caches")
        dirty = 0
        for ways in self.lines:
            for line in ways:
                if line.dirty:
                    line.dirty = False
                    dirty += 1
        return self.geometry.clean_base + dirty * self.geometry.writeback_latency

    def invalidate_all(self) -> int:
        """Drop every line. Dirty data is discarded; clean first to keep it."""
        for ways in self.lines:
            for line in ways:
                line.tag = 0
                line.valid = False
                line.dirty = False
                line.lru_rank = 0
        return self.geometry.invalidate_latency

    def clear(self) -> int:
        return self.invalidate_all()

    def is_reset(self) -> bool:
        return all(line == CacheLine() for ways in self.lines for line in ways)

    def contains(self, address: int) -> bool:
        """Check presence without disturbing replacement state."""
        set_index, tag = self.locate(address)
        return any(line.valid and line.tag == tag for line in self.lines[set_index])

    def dirty_count(self) -> int:
        return sum(line.dirty for ways in self.lines for line in ways)

    def valid_line_addresses(self) -> Set[int]:
        """Base addresses of every valid line."""
        geometry = self.geometry
        addresses = set()
        for set_index, ways in enumerate(self.lines):
            for line in ways:
                if line.valid:
                    line_number = line.tag * geometry.sets + set_index
                    addresses.add(line_number * geometry.line_bytes)
        return addresses

    def _victim(self, ways: List[CacheLine]) -> CacheLine:
        for line in ways:
            if not line.valid:
                return line
        return max(ways, key=lambda line: line.lru_rank)

    def _touch(self, ways: List[CacheLine], line: CacheLine) -> None:
        # Promote to MRU; only lines more recent than this one age by one.
        old_rank = line.lru_rank if line.valid else len(ways)
        for other in ways:
            if other is not line and other.valid and other.lru_rank < old_rank:
                other.lru_rank += 1
        line.lru_rank = 0
