"""Windowed band-power spawning detection.

A series is cut into fixed-length windows anchored at its most recent sample
and walking backwards, each window's mean 0.3-1.3 Hz PSD is compared against
the threshold (``>=``), and runs of consecutive spawning windows are merged
into events.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from . import spectral
from .errors import InvalidArgumentError, NyquistError
from .signal_core import GapeSeries

DEFAULT_WINDOW_SAMPLES = 6000
DEFAULT_BAND_HZ = (0.3, 1.3)
DEFAULT_THRESHOLD = 0.1
SWEEP_SIZES = (100, 300, 500, 1000, 2000, 6000)
MIN_SWEEP_SIZE = 100

# Spawning-point counts reported for the original field recording (oyster 6),
# keyed by window size. Kept for reference only; that dataset is not available.
REFERENCE_SWEEP_COUNTS = {6000: 2, 2000: 6, 1000: 12, 500: 24, 300: 39, 100: 365}


@dataclass(frozen=True)
class DetectorConfig:
    """Detection parameters.

    ``threshold`` is in the linear units of the band statistic (mean PSD,
    mm^2/Hz). ``hop_samples=None`` means tumbling windows (hop equal to the
    window length). A leftover head segment is analysed, zero padded, only if
    it holds at least ``min_partial_fraction * window_samples`` samples; the
    default of 1.0 discards it.
    """

    window_samples: int = DEFAULT_WINDOW_SAMPLES
    f_lo_hz: float = DEFAULT_BAND_HZ[0]
    f_hi_hz: float = DEFAULT_BAND_HZ[1]
    threshold: float = DEFAULT_THRESHOLD
    min_partial_fraction: float = 1.0
    hop_samples: Optional[int] = None

    def __post_init__(self):
        if int(self.window_samples) != self.window_samples or self.window_samples < 8:
            raise InvalidArgumentError("window_samples must be an integer >= 8")
        if not (0 <= self.f_lo_hz < self.f_hi_hz):
            raise InvalidArgumentError("band must satisfy 0 <= f_lo < f_hi")
        if not self.threshold >= 0:
            raise InvalidArgumentError("threshold must be >= 0")
        if not 0.0 <= self.min_partial_fraction <= 1.0:
            raise InvalidArgumentError("min_partial_fraction must be in [0, 1]")
        if self.hop_samples is not None and (
            int(self.hop_samples) != self.hop_samples or self.hop_samples < 1
        ):
            raise InvalidArgumentError("hop_samples must be a positive integer or None")

    @property
    def hop(self) -> int:
        return self.window_samples if self.hop_samples is None else int(self.hop_samples)

    def min_sample_rate_hz(self) -> float:
        return 2.0 * self.f_hi_hz

    def check_rate(self, sample_rate_hz: float) -> None:
        if sample_rate_hz < self.min_sample_rate_hz():
            raise NyquistError(sample_rate_hz, self.f_hi_hz)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class Window:
    """One analysis window cut from a series."""

    index: int
    start_sample: int
    values: np.ndarray
    sample_rate_hz: float
    start_time_ms: int
    end_time_ms: int
    padded: bool = False


@dataclass(frozen=True)
class WindowVerdict:
    window_index: int
    start_time_ms: int
    end_time_ms: int
    band_power: float
    is_spawning: bool
    padded: bool = False


@dataclass(frozen=True)
class SpawningEvent:
    channel_id: int
    start_time_ms: int
    end_time_ms: int
    peak_band_power: float
    window_count: int
    first_window: int
    last_window: int


@dataclass
class Segmentation:
    windows: list[Window]
    discarded_head_samples: int
    note: Optional[str] = None

    def __len__(self) -> int:
        return len(self.windows)

    def __iter__(self):
        return iter(self.windows)


@dataclass
class DetectionResult:
    channel_id: int
    config: DetectorConfig
    verdicts: list[WindowVerdict]
    events: list[SpawningEvent]
    discarded_head_samples: int = 0
    note: Optional[str] = None

    @property
    def spawning_count(self) -> int:
        return sum(v.is_spawning for v in self.verdicts)


@dataclass(frozen=True)
class SweepRow:
    size: int
    window_count: int
    spawning_count: int
    runtime_s: float = field(compare=False)
    reference_count: Optional[int] = None


def segment_windows(series: GapeSeries, config: DetectorConfig) -> Segmentation:
    """Cut ``series`` into windows anchored at its tail, returned oldest first.

    With the default tumbling hop, window ``i`` (counted from the tail) covers
    samples ``[L - (i+1)W, L - iW)``. Whatever is left at the head is
    discarded unless ``config.min_partial_fraction`` admits it, in which case
    it becomes a zero-padded window flagged ``padded``.
    """
    n = len(series)
    w = config.window_samples
    hop = config.hop
    starts = []
    end = n
    while end - w >= 0:
        starts.append(end - w)
        end -= hop
    starts.reverse()

    head = starts[0] if starts else n
    windows: list[Window] = []
    partial = None
    if head > 0 and config.min_partial_fraction < 1.0 and head >= config.min_partial_fraction * w:
        vals = np.zeros(w)
        vals[:head] = series.values[:head]
        partial = Window(
            index=0,
            start_sample=0,
            values=vals,
            sample_rate_hz=series.sample_rate_hz,
            start_time_ms=series.time_ms(0),
            end_time_ms=series.time_ms(head),
            padded=True,
        )
        windows.append(partial)
    for s in starts:
        windows.append(
            Window(
                index=len(windows),
                start_sample=s,
                values=series.values[s : s + w],
                sample_rate_hz=series.sample_rate_hz,
                start_time_ms=series.time_ms(s),
                end_time_ms=series.time_ms(s + w),
            )
        )
    discarded = 0 if partial is not None else head
    note = None
    if not starts:
        note = f"no full window: series has {n} samples, window needs {w}"
    return Segmentation(windows, discarded_head_samples=discarded, note=note)


def window_band_power(values, sample_rate_hz: float, config: DetectorConfig) -> float:
    spec = spectral.fft(values, sample_rate_hz)
    return spectral.band_average_power(spec, config.f_lo_hz, config.f_hi_hz).mean_power


def classify_window(window: Window, config: DetectorConfig) -> WindowVerdict:
    """Compute a window's band power and flag it as spawning if it reaches the threshold."""
    config.check_rate(window.sample_rate_hz)
    if len(window.values) != config.window_samples:
        raise InvalidArgumentError(
            f"window has {len(window.values)} samples, config expects {config.window_samples}"
        )
    power = window_band_power(window.values, window.sample_rate_hz, config)
    return WindowVerdict(
        window_index=window.index,
        start_time_ms=window.start_time_ms,
        end_time_ms=window.end_time_ms,
        band_power=power,
        is_spawning=power >= config.threshold,
        padded=window.padded,
    )


def merge_events(channel_id: int, verdicts: Sequence[WindowVerdict]) -> list[SpawningEvent]:
    """Collapse each maximal run of consecutive spawning verdicts into one event."""
    events = []
    run: list[WindowVerdict] = []
    for v in list(verdicts) + [None]:
        if v is not None and v.is_spawning:
            run.append(v)
            continue
        if run:
            events.append(
                SpawningEvent(
                    channel_id=channel_id,
                    start_time_ms=run[0].start_time_ms,
                    end_time_ms=run[-1].end_time_ms,
                    peak_band_power=max(r.band_power for r in run),
                    window_count=len(run),
                    first_window=run[0].window_index,
                    last_window=run[-1].window_index,
                )
            )
            run = []
    return events


def detect_events(series: GapeSeries, config: DetectorConfig = DetectorConfig()) -> DetectionResult:
    """Classify every window of ``series`` and merge spawning runs into events."""
    config.check_rate(series.sample_rate_hz)
    seg = segment_windows(series, config)
    verdicts = [classify_window(w, config) for w in seg.windows]
    return DetectionResult(
        channel_id=series.channel_id,
        config=config,
        verdicts=verdicts,
        events=merge_events(series.channel_id, verdicts),
        discarded_head_samples=seg.discarded_head_samples,
        note=seg.note,
    )


def window_size_sweep(
    series: GapeSeries,
    sizes: Iterable[int] = SWEEP_SIZES,
    config: DetectorConfig = DetectorConfig(),
) -> list[SweepRow]:
    """Re-run detection with each window size and tabulate the spawning counts."""
    sizes = list(sizes)
    for s in sizes:
        if int(s) != s or s < MIN_SWEEP_SIZE:
            raise InvalidArgumentError(
                f"window size {s} rejected: sizes below {MIN_SWEEP_SIZE} samples are not considered"
            )
    rows = []
    for s in sizes:
        t0 = time.perf_counter()
        res = detect_events(series, replace(config, window_samples=int(s)))
        rows.append(
            SweepRow(
                size=int(s),
                window_count=len(res.verdicts),
                spawning_count=res.spawning_count,
                runtime_s=time.perf_counter() - t0,
                reference_count=REFERENCE_SWEEP_COUNTS.get(int(s)),
            )
        )
    return rows
