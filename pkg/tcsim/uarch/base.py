"""
Base class that every on-core state element inherits from.
"""

import copy
from abc import ABC, abstractmethod
from typing import TypeVar

T = TypeVar("T", bound="StateElement")


class StateElement(ABC):
    """
    Base class for all modelled microarchitectural state.

    Each element is responsible for:
    1. Holding timing-relevant state that software cannot see directly
    2. Returning itself to its reset contents on request
    3. Reporting how many cycles that reset costs
    """

    @abstractmethod
    def clear(self) -> int:
        """
        Return the element to its reset contents.

        Returns:
            Cycles spent by the clear operation.

        Example:
            A data cache invalidates every line and returns its invalidate latency.
        """
        pass

    @abstractmethod
    def is_reset(self) -> bool:
        """Check whether the element is bit-identical to its reset contents."""
        pass

    def copy(self: T) -> T:
        """Deep snapshot, used to replay a run from identical state."""
        return copy.deepcopy(self)
