"""RTT sample distribution summaries and relay-path composition.

A sample is summarized by mean, median, population variance, histogram mode
and a modality flag. Per-leg summaries compose into an end-to-end relay
prediction by adding means, medians and modes, adding variances, and taking
the square root of the variance total for the combined standard deviation.

The mode of a continuous sample is the center of the most populated
fixed-width histogram bin; bins are centered on multiples of the bin width,
so a constant sample reports its own value. Median and mode composition by
plain addition is a modeling convention, not a distributional identity;
:func:`monte_carlo_compose` gives the empirical sum-distribution
alternative.
"""

from __future__ import annotations

import math
import random
import statistics
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import EmptyInputError, ParseError

MODALITY_UNIMODAL = "unimodal"
MODALITY_BIMODAL = "bimodal"
MODALITY_MULTIMODAL = "multimodal"
MODALITY_DEGENERATE = "degenerate"

_MODALITY_RANK = {
    MODALITY_UNIMODAL: 1,
    MODALITY_BIMODAL: 2,
    MODALITY_MULTIMODAL: 3,
}

# a secondary histogram peak below this fraction of the tallest peak is noise
PEAK_MIN_FRACTION = 0.10

SUMMARY_HEADER = (
    "label",
    "mean_ms",
    "median_ms",
    "variance_ms2",
    "mode_ms",
    "std_dev_ms",
    "sample_count",
    "modality",
)


@dataclass(frozen=True, slots=True)
class RttSummary:
    """Summary statistics of one RTT distribution."""

    mean_ms: float
    median_ms: float
    variance_ms2: float
    mode_ms: float
    std_dev_ms: float
    sample_count: int
    mode_bin_width_ms: float
    modality: str

    def __post_init__(self) -> None:
        if self.mode_bin_width_ms <= 0:
            raise ValueError("mode_bin_width_ms must be > 0")
        if (self.sample_count == 0) != (self.modality == MODALITY_DEGENERATE):
            raise ValueError("sample_count = 0 exactly when modality is degenerate")
        tolerance = 1e-9 * max(abs(self.variance_ms2), 1.0)
        if abs(self.std_dev_ms**2 - self.variance_ms2) > tolerance:
            raise ValueError("std_dev_ms**2 must equal variance_ms2")

    @classmethod
    def from_moments(
        cls,
        mean_ms: float,
        median_ms: float,
        variance_ms2: float,
        mode_ms: float,
        sample_count: int = 1,
        mode_bin_width_ms: float = 0.5,
        modality: str = MODALITY_UNIMODAL,
    ) -> "RttSummary":
        """Build a summary from known moments; std dev is derived."""
        return cls(
            mean_ms=mean_ms,
            median_ms=median_ms,
            variance_ms2=variance_ms2,
            mode_ms=mode_ms,
            std_dev_ms=math.sqrt(variance_ms2),
            sample_count=sample_count,
            mode_bin_width_ms=mode_bin_width_ms,
            modality=modality,
        )


def _bin_index(value: float, width: float) -> int:
    # bins centered on multiples of width: bin k covers [k*w - w/2, k*w + w/2)
    return math.floor(value / width + 0.5)


def _histogram(samples: Iterable[float], width: float) -> Counter:
    counts: Counter = Counter()
    for value in samples:
        counts[_bin_index(value, width)] += 1
    return counts


def _peaks(counts: Counter) -> list[tuple[int, int]]:
    """Local maxima of the binned histogram as (bin index, count).

    Bins are scanned in contiguous segments (empty bins are zero valleys);
    a plateau of equal counts bounded by strictly smaller neighbors is one
    peak, reported at its lowest bin.
    """
    indices = sorted(counts)
    peaks: list[tuple[int, int]] = []
    segment_start = 0
    for position in range(1, len(indices) + 1):
        if position < len(indices) and indices[position] == indices[position - 1] + 1:
            continue
        segment = indices[segment_start:position]
        values = [counts[i] for i in segment]
        # sentinel zeros: segment boundaries face empty bins
        run_start = 0
        for i in range(1, len(values) + 1):
            if i < len(values) and values[i] == values[run_start]:
                continue
            left = values[run_start - 1] if run_start > 0 else 0
            right = values[i] if i < len(values) else 0
            if values[run_start] > left and values[run_start] > right:
                peaks.append((segment[run_start], values[run_start]))
            run_start = i
        segment_start = position
    return peaks


def _modality(counts: Counter) -> str:
    peaks = _peaks(counts)
    if not peaks:
        return MODALITY_DEGENERATE
    tallest = max(count for _, count in peaks)
    significant = sum(1 for _, count in peaks if count >= PEAK_MIN_FRACTION * tallest)
    if significant <= 1:
        return MODALITY_UNIMODAL
    if significant == 2:
        return MODALITY_BIMODAL
    return MODALITY_MULTIMODAL


def summarize(samples: Sequence[float], mode_bin_width_ms: float = 0.5) -> RttSummary:
    """Summarize a list of RTTs (ms). Samples must be finite and > 0.

    Median uses the midpoint convention for even counts; variance is the
    population variance; the mode is the center of the most populated bin,
    with count ties going to the lower bin.
    """
    if mode_bin_width_ms <= 0:
        raise ValueError("mode_bin_width_ms must be > 0")
    n = len(samples)
    if n == 0:
        raise EmptyInputError("no samples")
    for value in samples:
        if not (math.isfinite(value) and value > 0):
            raise ValueError(f"samples must be finite and > 0, got {value!r}")

    mean = math.fsum(samples) / n
    variance = math.fsum((value - mean) ** 2 for value in samples) / n
    median = statistics.median(samples)

    counts = _histogram(samples, mode_bin_width_ms)
    mode_index, _ = max(counts.items(), key=lambda item: (item[1], -item[0]))
    mode = mode_index * mode_bin_width_ms

    return RttSummary(
        mean_ms=mean,
        median_ms=median,
        variance_ms2=variance,
        mode_ms=mode,
        std_dev_ms=math.sqrt(variance),
        sample_count=n,
        mode_bin_width_ms=mode_bin_width_ms,
        modality=_modality(counts),
    )


@dataclass(frozen=True)
class OverlayPath:
    """An ordered chain of relay legs, each given by its RTT summary."""

    legs: tuple[RttSummary, ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.legs:
            raise ValueError("a path needs at least one leg")
        if any(leg.modality == MODALITY_DEGENERATE for leg in self.legs):
            raise ValueError("legs must be non-degenerate")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"leg{i+1}" for i in range(len(self.legs))))
        elif len(self.labels) != len(self.legs):
            raise ValueError("one label per leg")


def compose(path: OverlayPath, forwarding_delay_ms: float = 0.0) -> RttSummary:
    """Predict the end-to-end summary of a relay chain.

    Mean, median and mode are the sums of the per-leg values (plus any
    constant relay forwarding delay); variances add and the combined std
    dev is the square root of that total. A multi-peaked leg marks the
    whole prediction as multi-peaked. Median and mode addition follows the
    per-leg reporting convention; see :func:`monte_carlo_compose` for the
    empirical alternative.
    """
    legs = path.legs
    relay_delay = forwarding_delay_ms * (len(legs) - 1)
    # left-fold addition so nested composition reproduces flat composition
    mean = sum(leg.mean_ms for leg in legs) + relay_delay
    median = sum(leg.median_ms for leg in legs) + relay_delay
    mode = sum(leg.mode_ms for leg in legs) + relay_delay
    variance = sum(leg.variance_ms2 for leg in legs)
    rank = max(_MODALITY_RANK[leg.modality] for leg in legs)
    modality = {1: MODALITY_UNIMODAL, 2: MODALITY_BIMODAL, 3: MODALITY_MULTIMODAL}[rank]
    return RttSummary(
        mean_ms=mean,
        median_ms=median,
        variance_ms2=variance,
        mode_ms=mode,
        std_dev_ms=math.sqrt(variance),
        sample_count=min(leg.sample_count for leg in legs),
        mode_bin_width_ms=max(leg.mode_bin_width_ms for leg in legs),
        modality=modality,
    )


@dataclass(frozen=True)
class ComparisonVerdict:
    """Direct-vs-overlay comparison. Deltas are overlay minus direct."""

    mean_delta_ms: float
    median_delta_ms: float
    mode_delta_ms: float
    preferred_metric: str
    faster: str
    description: str


def compare(direct: RttSummary, overlay: RttSummary) -> ComparisonVerdict:
    """Compare a direct route against a composed overlay prediction.

    The mean is distrusted whenever either distribution is multi-peaked,
    in which case the median decides which route is faster.
    """
    if MODALITY_DEGENERATE in (direct.modality, overlay.modality):
        raise ValueError("both summaries must be non-degenerate")
    mean_delta = overlay.mean_ms - direct.mean_ms
    median_delta = overlay.median_ms - direct.median_ms
    mode_delta = overlay.mode_ms - direct.mode_ms
    if direct.modality != MODALITY_UNIMODAL or overlay.modality != MODALITY_UNIMODAL:
        preferred, deciding = "median", median_delta
    else:
        preferred, deciding = "mean", mean_delta
    if deciding > 0:
        faster = "direct"
    elif deciding < 0:
        faster = "overlay"
    else:
        faster = "tie"
    if faster == "tie":
        description = f"routes tie on {preferred}"
    else:
        description = f"{faster} route is {abs(deciding):.2f} ms faster by {preferred}"
    return ComparisonVerdict(
        mean_delta_ms=mean_delta,
        median_delta_ms=median_delta,
        mode_delta_ms=mode_delta,
        preferred_metric=preferred,
        faster=faster,
        description=description,
    )


def monte_carlo_compose(
    leg_samples: Sequence[Sequence[float]],
    draws: int = 100_000,
    rng: Optional[random.Random] = None,
    mode_bin_width_ms: float = 0.5,
) -> RttSummary:
    """Empirical sum-distribution summary: resample each leg and add.

    This is the independent check on :func:`compose`: the mean and variance
    agree, while median and mode of sums need not match the added per-leg
    values.
    """
    if rng is None:
        rng = random.Random()
    if not leg_samples or any(len(leg) == 0 for leg in leg_samples):
        raise EmptyInputError("every leg needs samples")
    legs = [list(leg) for leg in leg_samples]
    sums = [math.fsum(rng.choice(leg) for leg in legs) for _ in range(draws)]
    return summarize(sums, mode_bin_width_ms=mode_bin_width_ms)


def read_samples(path: str | Path) -> list[float]:
    """Read one RTT (ms) per line; blank lines and # comments are skipped."""
    samples: list[float] = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            try:
                samples.append(float(text))
            except ValueError as exc:
                raise ParseError(lineno, f"bad sample {text!r}") from exc
    return samples


def frequency_distribution(
    samples: Sequence[float], bin_width_ms: float
) -> list[tuple[float, int]]:
    """(bin center, count) pairs sorted by center, for plotting."""
    counts = _histogram(samples, bin_width_ms)
    return [(index * bin_width_ms, counts[index]) for index in sorted(counts)]


def summary_row(label: str, summary: RttSummary) -> list[str]:
    return [
        label,
        f"{summary.mean_ms:.2f}",
        f"{summary.median_ms:.2f}",
        f"{summary.variance_ms2:.2f}",
        f"{summary.mode_ms:.2f}",
        f"{summary.std_dev_ms:.2f}",
        str(summary.sample_count),
        summary.modality,
    ]
