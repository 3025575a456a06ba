"""
Leakage quantification for channel matrices.

Mutual information uses the plug-in estimator over empirical counts. The
zero-leakage bound resamples a channel-less matrix with the same per-secret
sample counts and the same output distribution, so it measures how much
information estimation noise alone would show.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np

from tcsim.chanbench import ChannelMatrix
from tcsim.errors import ConfigError, ContractViolation

logger = logging.getLogger(__name__)

DEFAULT_TRIALS = 100
DEFAULT_CONFIDENCE = 0.95


@dataclass(frozen=True)
class LeakageReport:
    """Mutual information, its zero-leakage bound and the verdict."""

    mi_millibits: float
    m0_millibits: float
    trials: int
    confidence: float
    leaky: bool
    sample_count: int

    def to_dict(self) -> Dict[str, Any]:
        return OrderedDict(
            [
                ("mi_millibits", self.mi_millibits),
                ("m0_millibits", self.m0_millibits),
                ("trials", self.trials),
                ("confidence", self.confidence),
                ("leaky", self.leaky),
                ("sample_count", self.sample_count),
            ]
        )


def mutual_information_counts(counts: np.ndarray) -> float:
    """
    Plug-in mutual information of a count table, in millibits.

    Empty cells contribute nothing.
    """
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ContractViolation("mutual information of an empty matrix is undefined")
    joint = counts / total
    p_secret = joint.sum(axis=1, keepdims=True)
    p_time = joint.sum(axis=0, keepdims=True)
    nonzero = joint > 0
    expected = (p_secret * p_time)[nonzero]
    bits = float(np.sum(joint[nonzero] * np.log2(joint[nonzero] / expected)))
    return max(0.0, 1000.0 * bits)


def mutual_information(matrix: ChannelMatrix) -> float:
    """
    Information the spy's time carries about the trojan's secret.

    Args:
        matrix: Channel matrix with at least one sample

    Returns:
        Mutual information in millibits

    Raises:
        ContractViolation: When the matrix holds no samples

    Example:
        Four secrets each always observed at its own time -> 2000.0
    """
    return mutual_information_counts(matrix.counts)


def _check_resampling(trials: int, confidence: float) -> None:
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    if not 0 < confidence <= 1:
        raise ConfigError(f"confidence must be in (0, 1], got {confidence}")


def resample_channel_less(
    counts: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Draw a matrix with the same row sums whose times ignore the secret."""
    counts = np.asarray(counts, dtype=np.int64)
    column_totals = counts.sum(axis=0)
    p_time = column_totals / column_totals.sum()
    return rng.multinomial(counts.sum(axis=1), p_time)


def zero_leakage_bound(
    matrix: ChannelMatrix,
    trials: int = DEFAULT_TRIALS,
    confidence: float = DEFAULT_CONFIDENCE,
    seed: Optional[int] = None,
) -> float:
    """
    Upper bound on the mutual information of a channel that leaks nothing.

    Each trial draws a channel-less matrix from its own seed substream; the
    bound is the requested quantile of the trial estimates.

    Args:
        matrix: Observed channel matrix
        trials: Number of channel-less resamples
        confidence: Quantile of the resampled estimates to report
        seed: Root seed; equal seeds give equal bounds

    Returns:
        The bound in millibits
    """
    _check_resampling(trials, confidence)
    if matrix.total_samples <= 0:
        raise ContractViolation("zero-leakage bound of an empty matrix is undefined")

    streams = np.random.SeedSequence(seed).spawn(trials)
    estimates = np.array(
        [
            mutual_information_counts(resample_channel_less(matrix.counts, np.random.default_rng(stream)))
            for stream in streams
        ]
    )
    return max(0.0, float(np.quantile(estimates, confidence)))


def detect(
    matrix: ChannelMatrix,
    trials: int = DEFAULT_TRIALS,
    confidence: float = DEFAULT_CONFIDENCE,
    seed: Optional[int] = None,
) -> LeakageReport:
    """Compare M against M0; M > M0 indicates a timing channel."""
    mi = mutual_information(matrix)
    m0 = zero_leakage_bound(matrix, trials, confidence, seed)
    report = LeakageReport(
        mi_millibits=mi,
        m0_millibits=m0,
        trials=trials,
        confidence=confidence,
        leaky=mi > m0,
        sample_count=matrix.total_samples,
    )
    logger.info("M = %.3f mb, M0 = %.3f mb, leaky=%s", mi, m0, report.leaky)
    return report
