"""
Tests for the trojan/spy channel bench and the channel matrix.
"""

import logging

import numpy as np
import pytest

from tcsim.chanbench import (
    BenchConfig,
    BenchState,
    ChannelMatrix,
    Sample,
    TrialCache,
    default_secret_count,
    run_bench,
    run_trial,
    switch_domains,
)
from tcsim.errors import ConfigError
from tcsim.fence import FenceConfig, FenceVariant
from tcsim.kernel import Component
from tcsim.uarch.bht import BhtGeometry
from tcsim.uarch.cache import CacheGeometry
from tcsim.uarch.state import UarchConfig, reset_state

SMALL = UarchConfig(
    l1d=CacheGeometry(sets=8, ways=2),
    l1i=CacheGeometry(sets=8, ways=2),
    bht=BhtGeometry(index_bits=4),
)


def small_bench(**overrides):
    settings = dict(component=Component.L1D, samples_per_secret=5, seed=1, uarch=SMALL)
    settings.update(overrides)
    return BenchConfig(**settings)


class TestChannelMatrix:
    """Construction, tallying and merging."""

    def test_from_samples(self):
        """Samples accumulate into (secret, time) cells."""
        samples = [Sample(0, 10), Sample(0, 10), Sample(1, 12), Sample(2, 10)]
        matrix = ChannelMatrix.from_samples(samples, 3)
        assert matrix.time_bins.tolist() == [10, 12]
        assert matrix.counts.tolist() == [[2, 0], [0, 1], [1, 0]]
        assert matrix.total_samples == 4
        assert matrix.row_sums().tolist() == [2, 1, 1]

    def test_from_counts_accumulates(self):
        """Repeated rows add up; the secret count defaults to max + 1."""
        matrix = ChannelMatrix.from_counts([(0, 5, 2), (1, 7, 1), (0, 5, 3)])
        assert matrix.secret_count == 2
        assert matrix.counts.tolist() == [[5, 0], [0, 1]]

    def test_bucketing(self):
        """Times fold down to multiples of the bucket width."""
        matrix = ChannelMatrix.from_samples([Sample(0, 101), Sample(0, 109), Sample(1, 115)], 2, 10)
        assert matrix.time_bins.tolist() == [100, 110]
        assert matrix.counts.tolist() == [[2, 0], [0, 1]]

    def test_rows_sorted(self):
        """rows() yields non-empty cells by secret then time."""
        matrix = ChannelMatrix.from_counts([(1, 3, 1), (0, 9, 2), (0, 3, 4)])
        assert list(matrix.rows()) == [(0, 3, 4), (0, 9, 2), (1, 3, 1)]

    def test_merge(self):
        """Merging sums counts over the union of time bins."""
        left = ChannelMatrix.from_counts([(0, 10, 1), (1, 20, 2)], 2)
        right = ChannelMatrix.from_counts([(0, 15, 3), (1, 20, 1)], 2)
        merged = left.merge(right)
        assert merged.time_bins.tolist() == [10, 15, 20]
        assert merged.counts.tolist() == [[1, 3, 0], [0, 0, 3]]

    def test_merge_needs_same_secrets(self):
        """Matrices over different secret ranges do not merge."""
        with pytest.raises(ConfigError):
            ChannelMatrix.from_counts([(0, 1, 1)], 2).merge(ChannelMatrix.from_counts([(0, 1, 1)], 3))

    def test_validation(self):
        """Shape, bin order and count sign are checked."""
        with pytest.raises(ConfigError):
            ChannelMatrix(2, np.array([1, 2]), np.zeros((3, 2)))
        with pytest.raises(ConfigError):
            ChannelMatrix(1, np.array([2, 1]), np.zeros((1, 2)))
        with pytest.raises(ConfigError):
            ChannelMatrix(1, np.array([1]), np.array([[-1]]))
        with pytest.raises(ConfigError):
            ChannelMatrix.from_counts([(3, 1, 1)], 2)


class TestBenchConfig:
    """Bench parameter validation."""

    def test_default_secret_counts(self):
        """One secret per intensity; the BHT is capped at 129."""
        config = UarchConfig()
        assert default_secret_count(Component.L1D, config) == 129
        assert default_secret_count(Component.BHT, UarchConfig(bht=BhtGeometry(index_bits=10))) == 129
        assert default_secret_count(Component.RAT, config) == 17
        assert small_bench().secret_count == 17

    def test_secret_range(self):
        """S must be in 2..capacity+1."""
        with pytest.raises(ConfigError):
            small_bench(secret_count=1)
        with pytest.raises(ConfigError):
            small_bench(secret_count=18)
        assert small_bench(secret_count=2).total_trials == 10

    def test_other_limits(self):
        """Samples, noise, workers and bucket width are checked."""
        for field, value in (("samples_per_secret", 0), ("noise_cycles", -1), ("workers", 0), ("bucket_width", -1)):
            with pytest.raises(ConfigError):
                small_bench(**{field: value})


class TestTrials:
    """Single trials on a fresh core."""

    def setup_method(self):
        """Jitter-free generator."""
        self.rng = np.random.default_rng(0)

    def test_l1d_unmitigated_leaks(self):
        """More trojan lines make the spy's probe strictly slower."""
        cfg = small_bench()
        times = [run_trial(secret, cfg, self.rng).time for secret in range(cfg.secret_count)]
        assert times[0] == 32
        assert times[1] == 77
        assert all(later > earlier for earlier, later in zip(times, times[1:]))

    def test_bht_step(self):
        """Each trained counter costs the probe one extra mispredict."""
        cfg = small_bench(component=Component.BHT)
        times = [run_trial(secret, cfg, self.rng).time for secret in range(cfg.secret_count)]
        assert times == [256 + 12 * secret for secret in range(cfg.secret_count)]

    def test_direct_mapped_is_injective(self):
        """On a direct-mapped cache each trojan line costs the spy one dirty miss."""
        cfg = small_bench(uarch=UarchConfig(l1d=CacheGeometry(sets=8, ways=1)))
        assert cfg.secret_count == 9
        times = [run_trial(secret, cfg, self.rng).time for secret in range(cfg.secret_count)]
        assert len(set(times)) == 9
        assert times == [16 + secret * (28 - 2 + 1) for secret in range(9)]

    def test_fenced_spy_sees_identical_state(self):
        """After fence.t.s the core the spy probes is bit-identical for every secret."""
        cfg = small_bench(mitigation=FenceConfig())
        states = []
        for secret in range(cfg.secret_count):
            state = BenchState.fresh(cfg)
            switch_domains(secret, cfg, state)
            states.append(state.uarch)
        assert all(uarch == states[0] for uarch in states[1:])

    def test_fence_makes_time_constant(self):
        """Behind fence.t.s the probe always starts from the same state."""
        for component in Component:
            cfg = small_bench(component=component, mitigation=FenceConfig())
            times = {run_trial(secret, cfg, self.rng).time for secret in range(cfg.secret_count)}
            assert len(times) == 1

    def test_observe_switch_adds_padded_time(self):
        """A spy that also times the switch sees the full pad."""
        plain = small_bench(mitigation=FenceConfig())
        observing = small_bench(mitigation=FenceConfig(), observe_switch=True)
        assert run_trial(3, observing, self.rng).time == run_trial(3, plain, self.rng).time + 15_000

    def test_noise_bounds(self):
        """Jitter stays within 0..noise_cycles."""
        cfg = small_bench(noise_cycles=5)
        base = run_trial(4, small_bench(), self.rng).time
        for _ in range(20):
            assert base <= run_trial(4, cfg, self.rng).time <= base + 5

    def test_switch_rejects_bad_secret(self):
        """Secrets outside the configured range are refused."""
        cfg = small_bench(secret_count=4)
        with pytest.raises(ConfigError):
            switch_domains(4, cfg, BenchState.fresh(cfg))

    def test_shared_state_matches_fresh(self):
        """Carrying the core between trials does not change what the spy sees."""
        cfg = small_bench()
        state = BenchState.fresh(cfg)
        for secret in (5, 0, 16, 5):
            assert run_trial(secret, cfg, self.rng, state).time == run_trial(secret, cfg, self.rng).time


class TestTrialCache:
    """Replaying trials that start from an already seen core."""

    def setup_method(self):
        """Jitter-free generator and a secret order with repeats."""
        self.rng = np.random.default_rng(0)
        self.secrets = [3, 0, 3, 16, 0, 3, 16]

    def test_replay_matches_simulation(self):
        """Cached and uncached runs see the same times and leave equal cores."""
        for component in Component:
            cfg = small_bench(component=component)
            cached, plain = BenchState.fresh(cfg), BenchState.fresh(cfg)
            cache = TrialCache()
            for secret in self.secrets:
                assert run_trial(secret, cfg, self.rng, cached, cache) == run_trial(secret, cfg, self.rng, plain)
                assert cached.uarch == plain.uarch

    def test_steady_core_hits(self):
        """The BHT probe leaves the core at reset, so every repeated secret is a hit."""
        cfg = small_bench(component=Component.BHT)
        state = BenchState.fresh(cfg)
        cache = TrialCache()
        for secret in [3, 0, 3, 0, 3]:
            run_trial(secret, cfg, self.rng, state, cache)
        assert (cache.hits, cache.misses) == (3, 2)

    def test_recorded_states_untouched(self):
        """Later trials never mutate a recorded starting core."""
        cfg = small_bench()
        state = BenchState.fresh(cfg)
        cache = TrialCache()
        recorded = []
        for secret in self.secrets:
            run_trial(secret, cfg, self.rng, state, cache)
            outcome = cache.outcomes[secret]
            recorded.append((outcome.entry, outcome.entry.copy(), outcome.exit, outcome.exit.copy()))
        assert recorded[0][0] == reset_state(cfg.uarch)
        for entry, entry_then, exit_, exit_then in recorded:
            assert entry == entry_then
            assert exit_ == exit_then

    def test_replay_keeps_switch_cost(self):
        """A replayed outcome still adds the padded switch time."""
        cfg = small_bench(mitigation=FenceConfig(), observe_switch=True)
        state = BenchState.fresh(cfg)
        cache = TrialCache()
        times = [run_trial(5, cfg, self.rng, state, cache).time for _ in range(3)]
        assert cache.hits == 1
        assert times[1] == times[2] == run_trial(5, small_bench(mitigation=FenceConfig()), self.rng).time + 15_000


class TestRunBench:
    """Seeded sweeps over every secret."""

    def test_shape(self):
        """Every secret gets exactly samples_per_secret observations."""
        matrix = run_bench(small_bench())
        assert matrix.secret_count == 17
        assert matrix.row_sums().tolist() == [5] * 17
        assert matrix.nonzero_columns() == 17

    def test_seed_reproducible(self):
        """Equal seeds give equal matrices, noise included."""
        cfg = small_bench(noise_cycles=7, seed=123)
        assert run_bench(cfg) == run_bench(cfg)

    def test_order_does_not_matter(self):
        """Without jitter, differently shuffled runs give the same matrix."""
        assert run_bench(small_bench(seed=1)) == run_bench(small_bench(seed=99))

    def test_seed_changes_noise(self):
        """Different seeds draw different jitter."""
        first = run_bench(small_bench(noise_cycles=50, seed=1))
        second = run_bench(small_bench(noise_cycles=50, seed=2))
        assert first != second

    def test_workers_match_without_noise(self):
        """Trial times do not depend on order, so worker count does not matter."""
        assert run_bench(small_bench(workers=2)) == run_bench(small_bench(workers=1))

    def test_fenced_bench_single_column(self):
        """fence.t.s leaves one time bin for every component."""
        for component in Component:
            matrix = run_bench(small_bench(component=component, mitigation=FenceConfig()))
            assert matrix.nonzero_columns() == 1

    def test_naive_fence_corruption_warning(self, caplog):
        """The naive fence destroys the trojan's renamed registers and says so."""
        cfg = small_bench(component=Component.RAT, mitigation=FenceConfig(FenceVariant.NAIVE_HW))
        with caplog.at_level(logging.WARNING, logger="tcsim.chanbench"):
            run_bench(cfg)
        assert "corrupted architectural state" in caplog.text
