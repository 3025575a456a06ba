"""
Tests for the residual flip-flops.
"""

import pytest

from tcsim.errors import ConfigError
from tcsim.uarch.residual import PREFETCH_STRIDE, STORE_BUFFER, ResidualRegister, ResidualState


class TestResidualState:
    """Width truncation, influence and ff.clr."""

    def setup_method(self):
        """Default pool: a 4-bit store buffer and an 8-bit prefetch stride."""
        self.residual = ResidualState()

    def test_starts_at_zero(self):
        """Every register is zero after reset."""
        assert self.residual.values() == {STORE_BUFFER: 0, PREFETCH_STRIDE: 0}
        assert self.residual.timing_influence() == 0

    def test_set_truncates_to_width(self):
        """Values wrap to the declared width."""
        self.residual.set(STORE_BUFFER, 0x13)
        assert self.residual.get(STORE_BUFFER) == 0x3
        self.residual.set(PREFETCH_STRIDE, -1)
        assert self.residual.get(PREFETCH_STRIDE) == 0xFF

    def test_saturating_add(self):
        """The store buffer counts up to its maximum and stays there."""
        for _ in range(40):
            self.residual.saturating_add(STORE_BUFFER)
        assert self.residual.get(STORE_BUFFER) == 15

    def test_influence(self):
        """Only registers with a per-unit cost add cycles."""
        self.residual.set(STORE_BUFFER, 5)
        self.residual.set(PREFETCH_STRIDE, 200)
        assert self.residual.timing_influence() == 5
        assert self.residual.max_influence() == 15

    def test_ff_clear(self):
        """ff.clr zeroes every register and costs its latency."""
        self.residual.set(STORE_BUFFER, 7)
        self.residual.set(PREFETCH_STRIDE, 3)
        assert self.residual.ff_clear() == 2
        assert self.residual.is_reset()

    def test_unknown_register(self):
        """Looking up a register that does not exist raises KeyError."""
        with pytest.raises(KeyError):
            self.residual.get("load_queue")

    def test_duplicate_names_rejected(self):
        """Register names must be unique."""
        registers = [ResidualRegister("a", 2, 1), ResidualRegister("a", 3, 1)]
        with pytest.raises(ConfigError):
            ResidualState(registers=registers)
