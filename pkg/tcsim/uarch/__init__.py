"""
Models of the exploitable and mixed on-core state elements.
"""

from tcsim.uarch.bht import BhtGeometry, BhtState, Prediction
from tcsim.uarch.cache import (
    AccessKind,
    AccessResult,
    CacheGeometry,
    CacheKind,
    CacheLine,
    CacheState,
)
from tcsim.uarch.rat import Allocation, RatState, RenameGeometry
from tcsim.uarch.residual import ResidualRegister, ResidualState
from tcsim.uarch.state import (
    ArchState,
    CoreTimings,
    Csr,
    MicroarchState,
    UarchConfig,
    reset_state,
)

__all__ = [
    "AccessKind",
    "AccessResult",
    "Allocation",
    "ArchState",
    "BhtGeometry",
    "BhtState",
    "CacheGeometry",
    "CacheKind",
    "CacheLine",
    "CacheState",
    "CoreTimings",
    "Csr",
    "MicroarchState",
    "Prediction",
    "RatState",
    "RenameGeometry",
    "ResidualRegister",
    "ResidualState",
    "UarchConfig",
    "reset_state",
]
