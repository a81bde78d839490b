"""Gape data types and the preprocessing chain.

Raw sensor rows are cleaned into :class:`GapeRecord` objects (or the columnar
:class:`GapeTable` for multi-million-row files), a single oyster's channel is
pulled out as a :class:`GapeSeries`, and the series can then be block-mean
downsampled, shifted to start at zero and smoothed with a centred moving
average.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import EmptyChannelError, GapDetectedError, InvalidArgumentError

N_CHANNELS = 6
DEFAULT_SAMPLE_RATE_HZ = 10.0
DEFAULT_SMOOTH_WINDOW = 5

GAP_POLICIES = ("concatenate", "error-on-gap")

_MISSING_TOKENS = frozenset({"", "nan"})


@dataclass(frozen=True, slots=True)
class GapeRecord:
    """One timestamped six-channel reading. ``None`` marks a missing channel."""

    timestamp_ms: int
    channels: tuple[Optional[float], ...]

    def __post_init__(self):
        if len(self.channels) != N_CHANNELS:
            raise InvalidArgumentError(
                f"expected {N_CHANNELS} channel slots, got {len(self.channels)}"
            )
        if self.timestamp_ms < 0:
            raise InvalidArgumentError("timestamp_ms must be >= 0")
        for v in self.channels:
            if v is not None and not math.isfinite(v):
                raise InvalidArgumentError(f"channel value {v!r} is not finite")

    def channel(self, channel_id: int) -> Optional[float]:
        return self.channels[channel_id - 1]

    @property
    def present_count(self) -> int:
        return sum(v is not None for v in self.channels)


@dataclass(frozen=True, eq=False)
class GapeSeries:
    """A uniformly sampled gape trace for one channel.

    ``values`` is stored as a read-only float64 array. Sample ``i`` sits at
    ``start_time_ms + i * 1000 / sample_rate_hz``.
    """

    channel_id: int
    values: np.ndarray
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    start_time_ms: int = 0

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if values.size == 0:
            raise InvalidArgumentError("a GapeSeries needs at least one value")
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError("GapeSeries values must be finite")
        if not (self.sample_rate_hz > 0 and math.isfinite(self.sample_rate_hz)):
            raise InvalidArgumentError("sample_rate_hz must be positive")
        if not 1 <= self.channel_id <= N_CHANNELS:
            raise InvalidArgumentError(f"channel_id must be 1..{N_CHANNELS}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))
        object.__setattr__(self, "start_time_ms", int(self.start_time_ms))

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, GapeSeries):
            return NotImplemented
        return (
            self.channel_id == other.channel_id
            and self.sample_rate_hz == other.sample_rate_hz
            and self.start_time_ms == other.start_time_ms
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    @property
    def period_ms(self) -> float:
        return 1000.0 / self.sample_rate_hz

    def time_ms(self, index: int) -> int:
        """Timestamp of sample ``index`` (may be ``len(self)`` for the end)."""
        return self.start_time_ms + int(round(index * self.period_ms))

    def timestamps_ms(self) -> np.ndarray:
        idx = np.arange(self.values.size, dtype=np.float64)
        return self.start_time_ms + np.round(idx * self.period_ms).astype(np.int64)

    def replace_values(self, values, *, sample_rate_hz: Optional[float] = None) -> "GapeSeries":
        return GapeSeries(
            channel_id=self.channel_id,
            values=values,
            sample_rate_hz=self.sample_rate_hz if sample_rate_hz is None else sample_rate_hz,
            start_time_ms=self.start_time_ms,
        )


@dataclass(frozen=True, eq=False)
class GapeTable:
    """Columnar form of a cleaned record sequence.

    ``timestamps_ms`` is int64 of shape ``(n,)``; ``values`` is float64 of
    shape ``(n, 6)`` with NaN for a missing channel. Used for files too large
    to hold as per-row objects.
    """

    timestamps_ms: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps_ms, dtype=np.int64).reshape(-1)
        vals = np.asarray(self.values, dtype=np.float64).reshape(ts.size, N_CHANNELS)
        object.__setattr__(self, "timestamps_ms", ts)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.timestamps_ms.size

    @classmethod
    def from_records(cls, records: Sequence[GapeRecord]) -> "GapeTable":
        ts = np.fromiter((r.timestamp_ms for r in records), dtype=np.int64, count=len(records))
        vals = np.array(
            [[math.nan if v is None else v for v in r.channels] for r in records],
            dtype=np.float64,
        ).reshape(len(records), N_CHANNELS)
        return cls(ts, vals)

    def to_records(self) -> list[GapeRecord]:
        out = []
        for t, row in zip(self.timestamps_ms.tolist(), self.values.tolist()):
            out.append(GapeRecord(t, tuple(None if math.isnan(v) else v for v in row)))
        return out


@dataclass
class CleanResult:
    """Output of :func:`clean_records`.

    ``dropped_rows`` holds 1-based positions (within the input) of rows that
    were discarded as empty or unparsable; duplicates are counted separately.
    """

    records: list[GapeRecord]
    dropped: int = 0
    duplicates: int = 0
    dropped_rows: list[int] = field(default_factory=list)

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


RawRow = Union[str, Sequence, GapeRecord]


def _parse_value(field_: str) -> Optional[float]:
    s = field_.strip()
    if s.lower() in _MISSING_TOKENS:
        return None
    try:
        v = float(s)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def _parse_timestamp(field_) -> Optional[int]:
    if isinstance(field_, (int, np.integer)) and not isinstance(field_, bool):
        t = int(field_)
        return t if t >= 0 else None
    s = str(field_).strip()
    try:
        t = int(s)
    except ValueError:
        try:
            f = float(s)
        except ValueError:
            return None
        if not math.isfinite(f) or f != int(f):
            return None
        t = int(f)
    return t if t >= 0 else None


def parse_row(row: RawRow) -> Optional[GapeRecord]:
    """Parse one raw row into a record, or return None if it must be dropped.

    A row is a CSV data line, a sequence of 7 fields, or an existing record.
    Unparsable channel fields become missing; a row with no usable channel,
    a bad timestamp or the wrong field count is dropped.
    """
    if isinstance(row, GapeRecord):
        return row if row.present_count else None
    if isinstance(row, bytes):
        row = row.decode("utf-8", errors="replace")
    if isinstance(row, str):
        line = row.rstrip("\r\n")
        if not line.strip():
            return None
        fields = line.split(",")
    else:
        fields = list(row)
    if len(fields) != N_CHANNELS + 1:
        return None
    ts = _parse_timestamp(fields[0])
    if ts is None:
        return None
    chans = []
    for f in fields[1:]:
        if f is None:
            chans.append(None)
        elif isinstance(f, str):
            chans.append(_parse_value(f))
        else:
            try:
                v = float(f)
            except (TypeError, ValueError):
                v = math.nan
            chans.append(v if math.isfinite(v) else None)
    if all(v is None for v in chans):
        return None
    return GapeRecord(ts, tuple(chans))


def clean_records(rows: Iterable[RawRow]) -> CleanResult:
    """Drop empty/unusable rows, sort by timestamp and keep the first of duplicates.

    Cleaning never fails; an input with nothing usable yields an empty result
    with the drop count set.
    """
    kept: list[GapeRecord] = []
    dropped_rows: list[int] = []
    for i, row in enumerate(rows, start=1):
        rec = parse_row(row)
        if rec is None:
            dropped_rows.append(i)
        else:
            kept.append(rec)

    # stable sort keeps input order among equal timestamps, so "first" wins
    kept.sort(key=lambda r: r.timestamp_ms)
    out: list[GapeRecord] = []
    duplicates = 0
    last_ts = None
    for rec in kept:
        if rec.timestamp_ms == last_ts:
            duplicates += 1
            continue
        out.append(rec)
        last_ts = rec.timestamp_ms
    return CleanResult(out, dropped=len(dropped_rows), duplicates=duplicates, dropped_rows=dropped_rows)


def clean_table(timestamps_ms, values) -> tuple[GapeTable, int, int]:
    """Vectorised counterpart of :func:`clean_records` for already-parsed columns.

    Rows with no finite channel are dropped; non-finite entries become NaN.
    Returns ``(table, dropped, duplicates)``.
    """
    ts = np.asarray(timestamps_ms, dtype=np.int64).reshape(-1)
    vals = np.array(values, dtype=np.float64).reshape(ts.size, N_CHANNELS)
    vals[~np.isfinite(vals)] = np.nan
    usable = np.any(~np.isnan(vals), axis=1) & (ts >= 0)
    dropped = int(ts.size - np.count_nonzero(usable))
    ts, vals = ts[usable], vals[usable]
    order = np.argsort(ts, kind="stable")
    ts, vals = ts[order], vals[order]
    first = np.ones(ts.size, dtype=bool)
    first[1:] = ts[1:] != ts[:-1]
    duplicates = int(ts.size - np.count_nonzero(first))
    return GapeTable(ts[first], vals[first]), dropped, duplicates


def _check_channel(channel_id: int) -> None:
    if not isinstance(channel_id, (int, np.integer)) or not 1 <= channel_id <= N_CHANNELS:
        raise InvalidArgumentError(f"channel_id must be an integer in 1..{N_CHANNELS}")


def extract_channel(
    records: Union[Sequence[GapeRecord], GapeTable],
    channel_id: int,
    gap_policy: str = "concatenate",
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
) -> GapeSeries:
    """Pull one channel out of cleaned records as a uniformly sampled series.

    With ``gap_policy="concatenate"`` missing readings are spliced out and the
    remaining values are treated as consecutive samples. With
    ``"error-on-gap"`` any missing reading between the first and last present
    one, or a timestamp step longer than 1.5 sample periods, raises
    :class:`GapDetectedError`.
    """
    _check_channel(channel_id)
    if gap_policy not in GAP_POLICIES:
        raise InvalidArgumentError(f"gap_policy must be one of {GAP_POLICIES}")
    table = records if isinstance(records, GapeTable) else GapeTable.from_records(records)
    col = table.values[:, channel_id - 1]
    present = ~np.isnan(col)
    if not np.any(present):
        raise EmptyChannelError(f"channel {channel_id} has no readings")
    idx = np.flatnonzero(present)
    ts = table.timestamps_ms[idx]

    if gap_policy == "error-on-gap":
        holes = np.flatnonzero(np.diff(idx) > 1)
        if holes.size:
            j = holes[0]
            raise GapDetectedError(channel_id, int(ts[j]), int(ts[j + 1]))
        period = 1000.0 / sample_rate_hz
        jumps = np.flatnonzero(np.diff(ts) > 1.5 * period)
        if jumps.size:
            j = jumps[0]
            raise GapDetectedError(channel_id, int(ts[j]), int(ts[j + 1]))

    return GapeSeries(
        channel_id=channel_id,
        values=col[idx],
        sample_rate_hz=sample_rate_hz,
        start_time_ms=int(ts[0]),
    )


def block_mean_downsample(series: GapeSeries, block: int) -> GapeSeries:
    """Average consecutive non-overlapping blocks of ``block`` samples.

    A trailing partial block is dropped. The output rate is the input rate
    divided by ``block``.
    """
    if not isinstance(block, (int, np.integer)) or block < 1:
        raise InvalidArgumentError("block must be a positive integer")
    if block == 1:
        return series
    n_out = len(series) // block
    if n_out == 0:
        raise InvalidArgumentError(
            f"series of length {len(series)} is shorter than one block of {block}"
        )
    means = series.values[: n_out * block].reshape(n_out, block).mean(axis=1)
    return series.replace_values(means, sample_rate_hz=series.sample_rate_hz / block)


def normalize_zero_start(series: GapeSeries) -> GapeSeries:
    """Shift the series so its first value is exactly zero."""
    return series.replace_values(series.values - series.values[0])


def moving_average(series: GapeSeries, window: int = DEFAULT_SMOOTH_WINDOW) -> GapeSeries:
    """Centred moving mean with symmetric shrinking windows at both edges.

    Sample ``i`` is averaged over ``[i - h, i + h]`` where
    ``h = min(window // 2, i, n - 1 - i)``, so the output keeps the input
    length and ``out[0] == in[0]``.
    """
    if not isinstance(window, (int, np.integer)) or window < 1 or window % 2 == 0:
        raise InvalidArgumentError("window must be an odd positive integer")
    x = series.values
    n = x.size
    if window > n:
        raise InvalidArgumentError(f"window {window} exceeds series length {n}")
    if window == 1:
        return series

    half = window // 2
    out = np.empty(n, dtype=np.float64)
    views = sliding_window_view(x, window)
    # clip to the local range: rounding in the mean must not escape [min, max]
    out[half : n - half] = np.clip(views.mean(axis=1), views.min(axis=1), views.max(axis=1))
    for i in range(half):
        for j in (i, n - 1 - i):
            seg = x[j - i : j + i + 1]
            out[j] = min(max(seg.mean(), seg.min()), seg.max())
    return series.replace_values(out)
