"""
Trojan/spy channel bench.

For every secret the trojan modulates one structure, the OS switches domains
through the mitigation under test, and the spy times its own probe. Trials are
collected into a channel matrix of (secret, observed time) counts.
"""

import logging
import multiprocessing as mp
from dataclasses import dataclass, field
from itertools import repeat
from typing import Dict, Iterable, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from tcsim.errors import ConfigError
from tcsim.fence import FenceConfig, FenceResult, FenceVariant, apply_mitigation
from tcsim.kernel import (
    Component,
    capacity,
    execute,
    make_prime_kernel,
    make_probe_kernel,
)
from tcsim.uarch.state import ArchState, MicroarchState, UarchConfig, default_register_values, reset_state

logger = logging.getLogger(__name__)

SPY_STACK_TOP = 0x8000_0000
TROJAN_STACK_TOP = 0x9000_0000
BHT_SECRET_CAP = 129


def default_secret_count(component: Component, config: UarchConfig) -> int:
    """One secret per intensity 0..capacity; the BHT range is capped at 129."""
    count = capacity(component, config) + 1
    if component is Component.BHT:
        return min(count, BHT_SECRET_CAP)
    return count


@dataclass(frozen=True)
class BenchConfig:
    """
    One channel-bench experiment.

    Attributes:
        component: Structure the trojan modulates
        secret_count: Distinct secrets S; 0 picks the component default
        samples_per_secret: Trials per secret
        mitigation: Fence applied when switching from trojan to spy
        seed: Root seed for secret order and jitter; None draws from entropy
        noise_cycles: Uniform jitter amplitude added to each observation
        observe_switch: Spy also times the context switch itself
        workers: Process count for trial fan-out
        bucket_width: Time bucket width in cycles; 0 keeps exact times
        uarch: Core geometry and latencies
    """

    component: Component = Component.L1D
    secret_count: int = 0
    samples_per_secret: int = 1000
    mitigation: FenceConfig = field(default_factory=lambda: FenceConfig(FenceVariant.NONE))
    seed: Optional[int] = None
    noise_cycles: int = 0
    observe_switch: bool = False
    workers: int = 1
    bucket_width: int = 0
    uarch: UarchConfig = field(default_factory=UarchConfig)

    def __post_init__(self) -> None:
        if self.secret_count == 0:
            object.__setattr__(self, "secret_count", default_secret_count(self.component, self.uarch))
        limit = capacity(self.component, self.uarch) + 1
        if not 2 <= self.secret_count <= limit:
            raise ConfigError(
                f"secret_count for {self.component.value} must be in 2..{limit}, got {self.secret_count}"
            )
        if self.samples_per_secret < 1:
            raise ConfigError(f"samples_per_secret must be >= 1, got {self.samples_per_secret}")
        if self.noise_cycles < 0:
            raise ConfigError(f"noise_cycles must be non-negative, got {self.noise_cycles}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.bucket_width < 0:
            raise ConfigError(f"bucket_width must be non-negative, got {self.bucket_width}")

    @property
    def total_trials(self) -> int:
        return self.secret_count * self.samples_per_secret


class Sample(NamedTuple):
    """One spy observation."""

    secret: int
    time: int


@dataclass(eq=False)
class ChannelMatrix:
    """
    Joint histogram of secrets against observed spy times.

    counts[s, j] is how often secret s was observed at time_bins[j].
    """

    secret_count: int
    time_bins: np.ndarray
    counts: np.ndarray

    def __post_init__(self) -> None:
        self.time_bins = np.asarray(self.time_bins, dtype=np.int64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (self.secret_count, len(self.time_bins)):
            raise ConfigError(
                f"counts shape {self.counts.shape} does not match "
                f"{self.secret_count} secrets x {len(self.time_bins)} bins"
            )
        if np.any(np.diff(self.time_bins) <= 0):
            raise ConfigError("time bins must be strictly increasing")
        if np.any(self.counts < 0):
            raise ConfigError("counts must be non-negative")

    @classmethod
    def from_samples(
        cls, samples: Iterable[Sample], secret_count: int, bucket_width: int = 0
    ) -> "ChannelMatrix":
        """Tally samples, optionally folding times into fixed-width buckets."""
        return cls.from_counts(((secret, time, 1) for secret, time in samples), secret_count, bucket_width)

    @classmethod
    def from_counts(
        cls,
        rows: Iterable[Tuple[int, int, int]],
        secret_count: Optional[int] = None,
        bucket_width: int = 0,
    ) -> "ChannelMatrix":
        """
        Build a matrix from (secret, time, count) rows.

        Args:
            rows: Triples; repeated (secret, time) pairs accumulate
            secret_count: Number of secrets; defaults to the largest secret + 1
            bucket_width: Fold times down to multiples of this width when > 0

        Returns:
            ChannelMatrix with one column per distinct (bucketed) time
        """
        table = np.array(list(rows), dtype=np.int64).reshape(-1, 3)
        secrets, times, weights = table[:, 0], table[:, 1], table[:, 2]
        if secret_count is None:
            secret_count = int(secrets.max()) + 1 if len(secrets) else 0
        if len(secrets) and (secrets.min() < 0 or secrets.max() >= secret_count):
            raise ConfigError(f"secret outside 0..{secret_count - 1}")
        if bucket_width > 0:
            times = (times // bucket_width) * bucket_width

        bins, columns = np.unique(times, return_inverse=True)
        counts = np.zeros((secret_count, len(bins)), dtype=np.int64)
        np.add.at(counts, (secrets, columns.reshape(-1)), weights)
        return cls(secret_count, bins, counts)

    @property
    def total_samples(self) -> int:
        return int(self.counts.sum())

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def nonzero_columns(self) -> int:
        return int(np.count_nonzero(self.counts.sum(axis=0)))

    def rows(self) -> Iterator[Tuple[int, int, int]]:
        """Yield non-zero (secret, time, count) cells sorted by secret then time."""
        for secret, column in zip(*np.nonzero(self.counts)):
            yield int(secret), int(self.time_bins[column]), int(self.counts[secret, column])

    def merge(self, other: "ChannelMatrix") -> "ChannelMatrix":
        """Sum two matrices over the union of their time bins."""
        if other.secret_count != self.secret_count:
            raise ConfigError(
                f"cannot merge matrices with {self.secret_count} and {other.secret_count} secrets"
            )
        bins = np.union1d(self.time_bins, other.time_bins)
        counts = np.zeros((self.secret_count, len(bins)), dtype=np.int64)
        counts[:, np.searchsorted(bins, self.time_bins)] += self.counts
        counts[:, np.searchsorted(bins, other.time_bins)] += other.counts
        return ChannelMatrix(self.secret_count, bins, counts)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ChannelMatrix):
            return NotImplemented
        return (
            self.secret_count == other.secret_count
            and np.array_equal(self.time_bins, other.time_bins)
            and np.array_equal(self.counts, other.counts)
        )


@dataclass
class BenchState:
    """Shared core plus the two domains' entry states."""

    uarch: MicroarchState
    spy_entry: ArchState
    trojan_entry: ArchState

    @classmethod
    def fresh(cls, cfg: BenchConfig) -> "BenchState":
        return cls(
            uarch=reset_state(cfg.uarch),
            spy_entry=ArchState(regs=default_register_values(SPY_STACK_TOP)),
            trojan_entry=ArchState(regs=default_register_values(TROJAN_STACK_TOP)),
        )


def switch_domains(secret: int, cfg: BenchConfig, state: BenchState) -> FenceResult:
    """
    Run the first three phases of a trial: spy primes, trojan encodes, and the
    OS switches back to the spy through the configured mitigation.
    """
    if not 0 <= secret < cfg.secret_count:
        raise ConfigError(f"secret must be in 0..{cfg.secret_count - 1}, got {secret}")
    spy = state.spy_entry.copy()
    trojan = state.trojan_entry.copy()

    execute(make_probe_kernel(cfg.component, cfg.uarch), spy, state.uarch)
    execute(make_prime_kernel(cfg.component, secret, cfg.uarch), trojan, state.uarch)
    return apply_mitigation(trojan, state.uarch, cfg.mitigation)


@dataclass
class TrialOutcome:
    """What one trial did to the core, before jitter is added."""

    entry: MicroarchState
    exit: MicroarchState
    probe_cycles: int
    switch_cycles: int
    corrupted: bool


class TrialCache:
    """
    Per-secret record of the last trial outcome and the core state it started from.

    Within one BenchState a trial depends only on the secret and the core it
    starts from, so a repeat from an equal core replays the recorded outcome.
    States held here are never mutated again: a trial that misses works on a
    copy of its starting core.
    """

    def __init__(self) -> None:
        self.outcomes: Dict[int, TrialOutcome] = {}
        self.hits = 0
        self.misses = 0

    def lookup(self, secret: int, uarch: MicroarchState) -> Optional[TrialOutcome]:
        outcome = self.outcomes.get(secret)
        if outcome is not None and (outcome.entry is uarch or outcome.entry == uarch):
            self.hits += 1
            return outcome
        self.misses += 1
        return None

    def record(self, secret: int, outcome: TrialOutcome) -> None:
        self.outcomes[secret] = outcome


def run_trial(
    secret: int,
    cfg: BenchConfig,
    rng: np.random.Generator,
    state: Optional[BenchState] = None,
    cache: Optional[TrialCache] = None,
) -> Sample:
    """
    Run one prime/encode/switch/probe trial.

    Args:
        secret: Trojan intensity in 0..secret_count-1
        cfg: Bench configuration
        rng: Source of timing jitter
        state: Shared core carried between trials; a fresh core when omitted
        cache: Outcomes of earlier trials on the same state; when given,
            state.uarch is replaced rather than mutated

    Returns:
        Sample holding the secret and the spy's observed cycles

    Raises:
        PadOverrunError: When the mitigation overruns its pad target
    """
    if state is None:
        state = BenchState.fresh(cfg)
    return _trial(secret, cfg, rng, state, cache)[0]


def _simulate(secret: int, cfg: BenchConfig, state: BenchState) -> TrialOutcome:
    start = state.uarch
    switch = switch_domains(secret, cfg, state)
    spy = state.spy_entry.copy()
    probe = execute(make_probe_kernel(cfg.component, cfg.uarch), spy, state.uarch).cycles
    return TrialOutcome(start, state.uarch, probe, switch.padded_cycles, switch.corrupted)


def _trial(
    secret: int,
    cfg: BenchConfig,
    rng: np.random.Generator,
    state: BenchState,
    cache: Optional[TrialCache] = None,
) -> Tuple[Sample, bool]:
    if cache is None:
        outcome = _simulate(secret, cfg, state)
    else:
        outcome = cache.lookup(secret, state.uarch)
        if outcome is None:
            start = state.uarch
            state.uarch = start.copy()
            outcome = _simulate(secret, cfg, state)
            outcome.entry = start
            cache.record(secret, outcome)
        state.uarch = outcome.exit

    time = outcome.probe_cycles
    if cfg.observe_switch:
        time += outcome.switch_cycles
    if cfg.noise_cycles:
        time += int(rng.integers(0, cfg.noise_cycles + 1))
    return Sample(secret, time), outcome.corrupted


def _run_chunk(cfg: BenchConfig, secrets: Sequence[int], seed: np.random.SeedSequence) -> ChannelMatrix:
    rng = np.random.default_rng(seed)
    state = BenchState.fresh(cfg)
    cache = TrialCache()
    samples: List[Sample] = []
    corrupted = 0
    for secret in secrets:
        sample, lost = _trial(int(secret), cfg, rng, state, cache)
        logger.debug("secret %d observed %d cycles", sample.secret, sample.time)
        samples.append(sample)
        corrupted += lost
    logger.debug("trial cache: %d hits, %d misses", cache.hits, cache.misses)
    if corrupted:
        logger.warning(
            "%s fence corrupted architectural state in %d of %d trials",
            cfg.mitigation.variant.value,
            corrupted,
            len(samples),
        )
    return ChannelMatrix.from_samples(samples, cfg.secret_count, cfg.bucket_width)


def resolve_seed(seed: Optional[int]) -> int:
    """Return seed, or draw a fresh one from OS entropy."""
    if seed is not None:
        return seed
    return int(np.random.SeedSequence().entropy)


def run_bench(cfg: BenchConfig) -> ChannelMatrix:
    """
    Sweep every secret samples_per_secret times in a seeded random order.

    With workers > 1 the shuffled trial list is cut into contiguous chunks;
    each chunk runs on its own fresh core with its own RNG substream, so the
    result depends on (seed, workers) only.
    """
    seed = resolve_seed(cfg.seed)
    root = np.random.SeedSequence(seed)
    order_rng = np.random.default_rng(root)
    streams = root.spawn(cfg.workers)

    trials = np.repeat(np.arange(cfg.secret_count), cfg.samples_per_secret)
    order = order_rng.permutation(trials)
    chunks = np.array_split(order, cfg.workers)

    logger.info(
        "bench %s mitigation=%s secrets=%d samples=%d seed=%d workers=%d",
        cfg.component.value,
        cfg.mitigation.variant.value,
        cfg.secret_count,
        cfg.samples_per_secret,
        seed,
        cfg.workers,
    )
    if cfg.workers == 1:
        parts = [_run_chunk(cfg, chunks[0], streams[0])]
    else:
        with mp.Pool(cfg.workers) as pool:
            parts = pool.starmap(_run_chunk, zip(repeat(cfg), chunks, streams))

    matrix = parts[0]
    for part in parts[1:]:
        matrix = matrix.merge(part)
    logger.info(
        "bench finished: %d samples over %d time bins",
        matrix.total_samples,
        len(matrix.time_bins),
    )
    return matrix
