"""Automatic oyster spawning detection from valve-gape recordings.

The pipeline: clean six-channel gape rows, extract one oyster's channel,
cut it into 10-minute windows, and flag windows whose mean 0.3-1.3 Hz power
spectral density reaches a threshold. Consecutive flagged windows form a
spawning event.
"""

__version__ = "0.1.0"

from .detector import (
    DetectorConfig,
    SpawningEvent,
    WindowVerdict,
    classify_window,
    detect_events,
    segment_windows,
    window_size_sweep,
)
from .errors import (
    EmptyBandError,
    EmptyChannelError,
    GapDetectedError,
    GapewatchError,
    InvalidArgumentError,
    NyquistError,
)
from .ingest import IngestServer, parse_csv, read_table, replay, write_csv
from .signal_core import (
    GapeRecord,
    GapeSeries,
    GapeTable,
    block_mean_downsample,
    clean_records,
    extract_channel,
    moving_average,
    normalize_zero_start,
)
from .spectral import (
    BandPower,
    ComplexSpectrum,
    SingleSidedSpectrum,
    band_average_power,
    dft_naive,
    fft,
    single_sided_spectrum,
    to_db,
    two_sided_spectrum,
)
from .synth import BurstSpec, SynthSpec, generate, make_corpus
