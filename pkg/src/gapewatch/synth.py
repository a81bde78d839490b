"""Seeded synthetic gape signals with known spawning bursts.

A signal is a constant baseline gape, a slow sinusoidal drift, white
Gaussian noise and any number of spawning bursts. A burst is an oscillation
whose frequency wanders around its centre frequency, shaped by a cosine
onset/offset taper over 10% of its duration at each end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .detector import DetectorConfig, segment_windows, window_band_power
from .errors import CorpusGenerationError, InvalidArgumentError
from .signal_core import N_CHANNELS, GapeRecord, GapeSeries

TAPER_FRACTION = 0.1
MAX_RETRIES = 100
SPAWN_MARGIN = 2.0
QUIET_MARGIN = 0.5


@dataclass(frozen=True)
class BurstSpec:
    start_s: float
    duration_s: float
    center_freq_hz: float = 0.8
    freq_jitter_hz: float = 0.0
    amplitude_mm: float = 1.0

    @property
    def end_s(self) -> float:
        return self.start_s + self.duration_s

    def validate(self, sample_rate_hz: float, total_s: float) -> None:
        if self.duration_s <= 0:
            raise InvalidArgumentError("burst duration_s must be positive")
        if not self.amplitude_mm > 0:
            raise InvalidArgumentError("burst amplitude_mm must be positive")
        if self.freq_jitter_hz < 0:
            raise InvalidArgumentError("burst freq_jitter_hz must be >= 0")
        lo = self.center_freq_hz - self.freq_jitter_hz
        hi = self.center_freq_hz + self.freq_jitter_hz
        if not (0 < lo and hi < sample_rate_hz / 2):
            raise InvalidArgumentError(
                f"burst frequency range [{lo:g}, {hi:g}] Hz must lie inside (0, {sample_rate_hz / 2:g})"
            )
        if self.start_s < 0 or self.end_s > total_s + 1e-9:
            raise InvalidArgumentError(
                f"burst [{self.start_s:g}, {self.end_s:g}] s lies outside [0, {total_s:g}] s"
            )


@dataclass(frozen=True)
class SynthSpec:
    seed: int
    duration_s: float
    sample_rate_hz: float = 10.0
    baseline_mm: float = 0.2
    drift_period_s: float = 3600.0
    drift_amplitude_mm: float = 0.05
    noise_sigma_mm: float = 0.005
    bursts: tuple[BurstSpec, ...] = ()
    channel_id: int = 1
    start_time_ms: int = 0

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate_hz))

    def validate(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise InvalidArgumentError("seed must be an unsigned 64-bit integer")
        if self.duration_s <= 0 or self.n_samples < 1:
            raise InvalidArgumentError("duration_s * sample_rate_hz must be >= 1")
        if self.noise_sigma_mm < 0:
            raise InvalidArgumentError("noise_sigma_mm must be >= 0")
        if self.drift_period_s <= 0:
            raise InvalidArgumentError("drift_period_s must be positive")
        for b in self.bursts:
            b.validate(self.sample_rate_hz, self.duration_s)
        ordered = sorted(self.bursts, key=lambda b: b.start_s)
        for a, b in zip(ordered, ordered[1:]):
            if b.start_s < a.end_s:
                raise InvalidArgumentError(
                    f"bursts overlap: [{a.start_s:g}, {a.end_s:g}] and [{b.start_s:g}, {b.end_s:g}] s"
                )


@dataclass(frozen=True)
class TruthEvent:
    """Ground-truth burst interval on one channel."""

    channel_id: int
    start_ms: int
    end_ms: int
    burst: BurstSpec

    def overlaps(self, start_ms: int, end_ms: int) -> bool:
        return start_ms < self.end_ms and self.start_ms < end_ms


def _envelope(n: int) -> np.ndarray:
    env = np.ones(n)
    ramp = int(round(TAPER_FRACTION * n))
    if ramp > 0:
        r = 0.5 * (1 - np.cos(np.pi * (np.arange(ramp) + 0.5) / ramp))
        env[:ramp] = r
        env[n - ramp :] = r[::-1]
    return env


def _burst_waveform(burst: BurstSpec, n: int, fs: float, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n) / fs
    phase0 = rng.uniform(0, 2 * np.pi)
    if burst.freq_jitter_hz > 0:
        wander_period = rng.uniform(60.0, 300.0)
        wander_phase = rng.uniform(0, 2 * np.pi)
        freq = burst.center_freq_hz + burst.freq_jitter_hz * np.sin(
            2 * np.pi * t / wander_period + wander_phase
        )
        phase = phase0 + 2 * np.pi * np.cumsum(freq) / fs
    else:
        phase = phase0 + 2 * np.pi * burst.center_freq_hz * t
    return burst.amplitude_mm * _envelope(n) * np.sin(phase)


def generate(spec: SynthSpec) -> tuple[GapeSeries, list[TruthEvent]]:
    """Build the signal described by ``spec``; identical specs give identical output."""
    spec.validate()
    fs = spec.sample_rate_hz
    n = spec.n_samples
    rng = np.random.default_rng(spec.seed)
    t = np.arange(n) / fs

    x = np.full(n, spec.baseline_mm, dtype=np.float64)
    if spec.drift_amplitude_mm:
        x += spec.drift_amplitude_mm * np.sin(2 * np.pi * t / spec.drift_period_s)
    noise = rng.standard_normal(n)
    if spec.noise_sigma_mm:
        x += spec.noise_sigma_mm * noise

    truth = []
    period_ms = 1000.0 / fs
    for b in sorted(spec.bursts, key=lambda b: b.start_s):
        i0 = int(round(b.start_s * fs))
        i1 = min(n, int(round(b.end_s * fs)))
        if i1 > i0:
            x[i0:i1] += _burst_waveform(b, i1 - i0, fs, rng)
        truth.append(
            TruthEvent(
                channel_id=spec.channel_id,
                start_ms=spec.start_time_ms + int(round(i0 * period_ms)),
                end_ms=spec.start_time_ms + int(round(i1 * period_ms)),
                burst=b,
            )
        )
    series = GapeSeries(spec.channel_id, x, fs, spec.start_time_ms)
    return series, truth


@dataclass
class CorpusSignal:
    index: int
    is_spawning: bool
    series: GapeSeries
    truth: list[TruthEvent]
    spec: SynthSpec
    attempts: int = 1
    window_powers: list[float] = field(default_factory=list)

    @property
    def channel_id(self) -> int:
        return self.series.channel_id


def derive_seed(corpus_seed: int, index: int, attempt: int = 0) -> int:
    """Per-signal seed, a pure function of (corpus seed, index, attempt)."""
    ss = np.random.SeedSequence([int(corpus_seed), int(index), int(attempt)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _random_spawning_spec(base: SynthSpec, rng: np.random.Generator) -> SynthSpec:
    total = base.duration_s
    dur = rng.uniform(10 * 60.0, min(100 * 60.0, total))
    start = rng.uniform(0.0, total - dur)
    jitter = rng.uniform(0.0, 0.1)
    burst = BurstSpec(
        start_s=start,
        duration_s=dur,
        center_freq_hz=rng.uniform(0.4 + jitter, 1.2 - jitter),
        freq_jitter_hz=jitter,
        amplitude_mm=rng.uniform(0.8, 1.2),
    )
    return replace(base, bursts=(burst,))


def _margins_ok(
    sig_series: GapeSeries,
    truth: Sequence[TruthEvent],
    is_spawning: bool,
    config: DetectorConfig,
) -> tuple[bool, list[float]]:
    seg = segment_windows(sig_series, config)
    powers = [window_band_power(w.values, w.sample_rate_hz, config) for w in seg.windows]
    hi = SPAWN_MARGIN * config.threshold
    lo = QUIET_MARGIN * config.threshold
    for w, p in zip(seg.windows, powers):
        in_burst = any(t.overlaps(w.start_time_ms, w.end_time_ms) for t in truth)
        if not in_burst and p > lo:
            return False, powers
    for t in truth:
        hits = [
            p
            for w, p in zip(seg.windows, powers)
            if t.overlaps(w.start_time_ms, w.end_time_ms) and p >= hi
        ]
        if not hits:
            return False, powers
    if is_spawning and not truth:
        return False, powers
    return True, powers


def make_corpus(
    n_signals: int,
    spawning_fraction: float,
    seed: int,
    *,
    duration_s: float = 7200.0,
    config: DetectorConfig = DetectorConfig(),
    base: Optional[SynthSpec] = None,
) -> list[CorpusSignal]:
    """Deterministic labelled corpus for detector acceptance runs.

    Every spawning signal carries one burst that drives at least one window
    overlapping it to ``>= 2x`` the threshold; every window not touching a
    burst (all windows, for quiet signals) stays ``<= 0.5x`` the threshold.
    Candidates failing these margins are redrawn with a perturbed seed.
    Signal ``i`` is placed on channel ``i % 6 + 1``.
    """
    if n_signals < 1:
        raise InvalidArgumentError("n_signals must be >= 1")
    if not 0.0 <= spawning_fraction <= 1.0:
        raise InvalidArgumentError("spawning_fraction must be in [0, 1]")
    n_spawn = int(round(n_signals * spawning_fraction))
    labels = np.zeros(n_signals, dtype=bool)
    labels[:n_spawn] = True
    np.random.default_rng([int(seed), 0xFFFFFFFF]).shuffle(labels)

    if base is None:
        base = SynthSpec(seed=0, duration_s=duration_s, sample_rate_hz=10.0)

    corpus = []
    for i, spawning in enumerate(labels.tolist()):
        for attempt in range(MAX_RETRIES):
            sig_seed = derive_seed(seed, i, attempt)
            spec = replace(base, seed=sig_seed, channel_id=i % N_CHANNELS + 1, bursts=())
            if spawning:
                spec = _random_spawning_spec(spec, np.random.default_rng(sig_seed ^ 0x5EED))
            series, truth = generate(spec)
            ok, powers = _margins_ok(series, truth, spawning, config)
            if ok:
                corpus.append(
                    CorpusSignal(i, spawning, series, truth, spec, attempt + 1, powers)
                )
                break
        else:
            raise CorpusGenerationError(
                f"signal {i} could not meet its detection margin after {MAX_RETRIES} attempts"
            )
    return corpus


def series_to_records(series: Sequence[GapeSeries]) -> list[GapeRecord]:
    """Lay several series side by side as six-channel records.

    Series must have distinct channels, the same start time and rate; a
    shorter series leaves its channel missing in later rows.
    """
    if not series:
        return []
    chans = [s.channel_id for s in series]
    if len(set(chans)) != len(chans):
        raise InvalidArgumentError("series must be on distinct channels")
    first = series[0]
    for s in series[1:]:
        if s.start_time_ms != first.start_time_ms or s.sample_rate_hz != first.sample_rate_hz:
            raise InvalidArgumentError("series must share start time and sample rate")
    n = max(len(s) for s in series)
    ts = first.start_time_ms + np.round(np.arange(n) * first.period_ms).astype(np.int64)
    cols: list[list[Optional[float]]] = [[None] * n for _ in range(N_CHANNELS)]
    for s in series:
        cols[s.channel_id - 1][: len(s)] = s.values.tolist()
    return [GapeRecord(int(t), tuple(c[j] for c in cols)) for j, t in enumerate(ts.tolist())]


def write_truth(path, events: Sequence[TruthEvent]) -> None:
    """Ground-truth sidecar: header then one ``channel,start_ms,end_ms`` line per burst."""
    lines = ["channel,start_ms,end_ms"]
    for e in sorted(events, key=lambda e: (e.channel_id, e.start_ms)):
        lines.append(f"{e.channel_id},{e.start_ms},{e.end_ms}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_truth(path) -> list[tuple[int, int, int]]:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines()[1:]:
        if line.strip():
            c, s, e = line.split(",")
            rows.append((int(c), int(s), int(e)))
    return rows


def write_corpus_csv(path, signals: Sequence[CorpusSignal], truth_path=None) -> Path:
    """Write up to six corpus signals as one CSV plus its ground-truth sidecar.

    The sidecar defaults to ``<path>.truth.csv``.
    """
    from .ingest import write_csv

    path = Path(path)
    records = series_to_records([s.series for s in signals])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        write_csv(records, fh)
    truth_path = Path(truth_path) if truth_path else path.with_name(path.name + ".truth.csv")
    write_truth(truth_path, [t for s in signals for t in s.truth])
    return truth_path


def corpus_band_leakage(spec: SynthSpec, config: DetectorConfig = DetectorConfig()) -> float:
    """Largest window band power of ``spec`` with bursts and noise removed."""
    quiet = replace(spec, bursts=(), noise_sigma_mm=0.0)
    series, _ = generate(quiet)
    seg = segment_windows(series, config)
    if not seg.windows:
        return math.nan
    return max(window_band_power(w.values, w.sample_rate_hz, config) for w in seg.windows)
