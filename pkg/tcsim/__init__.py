"""
tcsim - a desk-scale lab for microarchitectural timing channels and the
temporal fences that close them.

Models the clearable on-core state, runs trojan/spy benches across a context
switch, and measures leakage and the fence's time-slicing overhead.
"""

__version__ = "1.0.0"
__author__ = "sigh"
__description__ = "Temporal-fence timing-channel lab"
