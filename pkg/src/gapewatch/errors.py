"""Exception types raised across gapewatch."""

from __future__ import annotations


class GapewatchError(Exception):
    """Base class for all gapewatch errors."""


class InvalidArgumentError(GapewatchError, ValueError):
    """An argument violates an operation's precondition."""


class EmptyChannelError(GapewatchError, ValueError):
    """The requested channel has no readings."""


class GapDetectedError(GapewatchError, ValueError):
    """A channel has a hole and the gap policy forbids splicing it out.

    Attributes:
        gap_start_ms: timestamp of the last reading before the gap.
        gap_end_ms: timestamp of the first reading after the gap.
    """

    def __init__(self, channel_id: int, gap_start_ms: int, gap_end_ms: int):
        self.channel_id = channel_id
        self.gap_start_ms = gap_start_ms
        self.gap_end_ms = gap_end_ms
        super().__init__(
            f"gap detected on channel {channel_id} between "
            f"{gap_start_ms} ms and {gap_end_ms} ms"
        )


class EmptyBandError(GapewatchError, ValueError):
    """No frequency bin falls inside the requested band."""


class NyquistError(GapewatchError, ValueError):
    """The sampling rate cannot represent the requested band."""

    def __init__(self, sample_rate_hz: float, f_hi_hz: float):
        self.sample_rate_hz = sample_rate_hz
        self.f_hi_hz = f_hi_hz
        self.min_rate_hz = 2.0 * f_hi_hz
        super().__init__(
            f"band upper edge {f_hi_hz:g} Hz exceeds the Nyquist frequency "
            f"{sample_rate_hz / 2.0:g} Hz; a sample rate of at least "
            f"{self.min_rate_hz:g} Hz is required (got {sample_rate_hz:g} Hz)"
        )


class CorpusGenerationError(GapewatchError, RuntimeError):
    """A synthetic signal could not meet its detection margin."""
