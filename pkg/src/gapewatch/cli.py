"""``gapewatch`` command line: preprocess, spectrum, detect, sweep, synth, serve, replay."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .detector import (
    DEFAULT_BAND_HZ,
    DEFAULT_THRESHOLD,
    DEFAULT_WINDOW_SAMPLES,
    SWEEP_SIZES,
    DetectorConfig,
    detect_events,
    segment_windows,
    window_size_sweep,
)
from .errors import GapewatchError, InvalidArgumentError
from .ingest import (
    IngestServer,
    JsonlAlertSink,
    alerts_from_verdicts,
    read_table,
    replay,
)
from .signal_core import (
    N_CHANNELS,
    GapeSeries,
    block_mean_downsample,
    extract_channel,
    moving_average,
    normalize_zero_start,
)
from .spectral import fft, periodogram, single_sided_spectrum, to_db
from .synth import BurstSpec, SynthSpec, generate, make_corpus, write_corpus_csv, write_truth

log = logging.getLogger("gapewatch")

DB_FLOOR = -120.0


# --------------------------------------------------------------------------
# flag parsing helpers


def _channel(text: str) -> int:
    c = int(text)
    if not 1 <= c <= N_CHANNELS:
        raise argparse.ArgumentTypeError(f"channel must be 1..{N_CHANNELS}")
    return c


def _band(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(p) for p in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("band must look like lo:hi, e.g. 0.3:1.3") from None
    return lo, hi


def _off_or_int(text: str) -> Optional[int]:
    if text.lower() == "off":
        return None
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or 'off', got {text!r}") from None


def _seed(text: str) -> int:
    s = int(text)
    if not 0 <= s < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return s


def _rate(text: str) -> Optional[float]:
    return None if text == "auto" else float(text)


def _sizes(text: str) -> list[int]:
    return [int(p) for p in text.split(",") if p.strip()]


def _burst(text: str) -> BurstSpec:
    parts = text.split(":")
    if len(parts) not in (4, 5):
        raise argparse.ArgumentTypeError("burst must be start:duration:freq:amp[:jitter]")
    start, dur, freq, amp = (float(p) for p in parts[:4])
    jitter = float(parts[4]) if len(parts) == 5 else 0.0
    return BurstSpec(start, dur, freq, jitter, amp)


def _add_detector_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("detector")
    g.add_argument("--window", type=int, default=DEFAULT_WINDOW_SAMPLES, metavar="SAMPLES",
                   help="window length in samples (default %(default)s = 10 min at 10 Hz)")
    g.add_argument("--band", type=_band, default=DEFAULT_BAND_HZ, metavar="LO:HI",
                   help="band edges in Hz, inclusive (default 0.3:1.3)")
    g.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD,
                   help="spawning threshold on mean band PSD, compared with >= (default %(default)s)")
    g.add_argument("--hop", type=_off_or_int, default=None, metavar="SAMPLES|off",
                   help="hop between windows; off means tumbling windows (default off)")


def _add_input_flags(p: argparse.ArgumentParser, channel_required: bool = False) -> None:
    p.add_argument("input", help="gape CSV file (ts_ms,s1..s6)")
    p.add_argument("--channel", type=_channel, required=channel_required, metavar="1-6",
                   help="channel to analyse" + ("" if channel_required else " (default: all present)"))
    p.add_argument("--rate", type=_rate, default=None, metavar="HZ|auto",
                   help="input sample rate; inferred from timestamps when omitted")
    p.add_argument("--smooth", type=_off_or_int, default=None, metavar="N|off",
                   help="centred moving-average window, odd (default off)")
    p.add_argument("--downsample", type=_off_or_int, default=None, metavar="K|off",
                   help="block-mean downsampling factor (default off)")


def _add_output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("csv", "jsonl"), default="jsonl",
                   help="machine output format (default %(default)s)")
    p.add_argument("--out", metavar="PATH", help="write machine output here instead of stdout")


def _config(args) -> DetectorConfig:
    lo, hi = args.band
    return DetectorConfig(
        window_samples=args.window,
        f_lo_hz=lo,
        f_hi_hz=hi,
        threshold=args.threshold,
        hop_samples=args.hop,
    )


# --------------------------------------------------------------------------
# shared pipeline


def _infer_rate(table, channel: int) -> float:
    col = table.values[:, channel - 1]
    ts = table.timestamps_ms[~np.isnan(col)]
    if ts.size < 2:
        return 10.0
    step = float(np.median(np.diff(ts)))
    return 1000.0 / step if step > 0 else 10.0


def _load_series(args) -> tuple[list[GapeSeries], dict]:
    table, report = read_table(args.input)
    present = [c for c in range(1, N_CHANNELS + 1) if np.any(~np.isnan(table.values[:, c - 1]))]
    channels = [args.channel] if args.channel else present
    out = []
    for c in channels:
        rate = args.rate if args.rate else _infer_rate(table, c)
        s = extract_channel(table, c, "concatenate", sample_rate_hz=rate)
        if args.smooth is not None:
            s = moving_average(s, args.smooth)
        if args.downsample is not None:
            s = block_mean_downsample(s, args.downsample)
        out.append(s)
    info = {
        "path": str(args.input),
        "lines": report.total_lines,
        "records": report.records,
        "dropped": report.dropped,
        "duplicates": report.duplicates,
    }
    return out, info


class _Output:
    def __init__(self, args):
        self.fmt = args.format
        self.path = args.out
        self.buf = io.StringIO()

    def jsonl(self, obj: dict) -> None:
        self.buf.write(json.dumps(obj) + "\n")

    def table(self, header: Sequence[str], rows) -> None:
        if self.fmt == "jsonl":
            for r in rows:
                self.jsonl(dict(zip(header, r)))
            return
        w = csv.writer(self.buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)

    def flush(self) -> None:
        text = self.buf.getvalue()
        if self.path:
            Path(self.path).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)


# --------------------------------------------------------------------------
# commands


def cmd_preprocess(args) -> int:
    series, _ = _load_series(args)
    out = _Output(args)
    rows = []
    for s in series:
        if args.normalize:
            s = normalize_zero_start(s)
        rows.extend((s.channel_id, int(t), float(v)) for t, v in zip(s.timestamps_ms(), s.values))
    out.table(("channel_id", "ts_ms", "value_mm"), rows)
    out.flush()
    return 0


def cmd_spectrum(args) -> int:
    series, _ = _load_series(args)
    s = series[0]
    config = DetectorConfig(window_samples=args.window) if args.window else None
    if config is None:
        values = s.values
    else:
        seg = segment_windows(s, config)
        n = len(seg.windows)
        if n == 0:
            raise InvalidArgumentError(f"series of {len(s)} samples holds no {args.window}-sample window")
        idx = args.index
        if not -n <= idx < n:
            raise InvalidArgumentError(f"window index {idx} out of range; valid range is 0..{n - 1} (or -{n}..-1)")
        values = seg.windows[idx].values
    spec = fft(values, s.sample_rate_hz)
    p1 = single_sided_spectrum(spec)
    _, pxx = periodogram(spec)
    rows = [
        (float(f), float(a), float(p), to_db(p) if p > 0 else DB_FLOOR)
        for f, a, p in zip(p1.freqs_hz, p1.amplitudes, pxx)
    ]
    out = _Output(args)
    out.table(("freq_hz", "amplitude", "psd", "psd_db"), rows)
    out.flush()
    return 0


def cmd_detect(args) -> int:
    config = _config(args)
    t0 = time.perf_counter()
    series, info = _load_series(args)
    results = [detect_events(s, config) for s in series]
    report = {
        "record": "report",
        "command": "detect",
        "version": __version__,
        "input": info,
        "config": config.to_dict(),
        "preprocess": {"smooth": args.smooth, "downsample": args.downsample},
        "channels": [
            {
                "channel_id": r.channel_id,
                "sample_rate_hz": s.sample_rate_hz,
                "samples": len(s),
                "windows": len(r.verdicts),
                "spawning_windows": r.spawning_count,
                "events": len(r.events),
                "discarded_head_samples": r.discarded_head_samples,
                "note": r.note,
            }
            for r, s in zip(results, series)
        ],
    }
    if args.timing:
        report["timing_s"] = time.perf_counter() - t0

    out = _Output(args)
    if args.format == "jsonl":
        out.jsonl(report)
        for r in results:
            for v in r.verdicts:
                out.jsonl({"record": "verdict", "channel_id": r.channel_id, **asdict(v)})
            for e in r.events:
                out.jsonl({"record": "event", **asdict(e)})
    else:
        rows = []
        for r in results:
            rows += [("verdict", r.channel_id, v.window_index, v.window_index, v.start_time_ms,
                      v.end_time_ms, v.band_power, int(v.is_spawning), 1) for v in r.verdicts]
            rows += [("event", e.channel_id, e.first_window, e.last_window, e.start_time_ms,
                      e.end_time_ms, e.peak_band_power, 1, e.window_count) for e in r.events]
        out.table(("record", "channel_id", "first_window", "last_window", "start_time_ms",
                   "end_time_ms", "band_power", "is_spawning", "window_count"), rows)
        sys.stderr.write(json.dumps(report) + "\n")
    out.flush()

    if args.alerts:
        sink = JsonlAlertSink(args.alerts)
        for r in results:
            for a in alerts_from_verdicts(r.channel_id, r.verdicts):
                sink(a)
        sink.close()
    return 0


def cmd_sweep(args) -> int:
    config = _config(args)
    series, _ = _load_series(args)
    rows = []
    for s in series:
        for row in window_size_sweep(s, args.sizes, config):
            r = [s.channel_id, row.size, row.window_count, row.spawning_count, row.reference_count]
            if args.timing:
                r.append(row.runtime_s)
            rows.append(tuple(r))
    header = ["channel_id", "size", "window_count", "spawning_count", "reference_count"]
    if args.timing:
        header.append("runtime_s")
    out = _Output(args)
    out.table(header, rows)
    out.flush()
    return 0


def cmd_synth(args) -> int:
    if args.corpus:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        corpus = make_corpus(args.corpus, args.spawning_fraction, args.seed, duration_s=args.duration)
        files = []
        for k in range(0, len(corpus), N_CHANNELS):
            group = corpus[k : k + N_CHANNELS]
            path = out_dir / f"corpus_{k // N_CHANNELS:03d}.csv"
            write_corpus_csv(path, group)
            files.append(
                {
                    "path": path.name,
                    "signals": [
                        {"index": s.index, "channel_id": s.channel_id, "spawning": s.is_spawning,
                         "seed": s.spec.seed}
                        for s in group
                    ],
                }
            )
        report = {"command": "synth", "seed": args.seed, "corpus": args.corpus,
                  "spawning_fraction": args.spawning_fraction, "duration_s": args.duration,
                  "files": files}
    else:
        spec = SynthSpec(
            seed=args.seed,
            duration_s=args.duration,
            sample_rate_hz=args.sample_rate,
            baseline_mm=args.baseline,
            drift_period_s=args.drift_period,
            drift_amplitude_mm=args.drift_amp,
            noise_sigma_mm=args.noise,
            bursts=tuple(args.burst or ()),
            channel_id=args.channel or 1,
        )
        series, truth = generate(spec)
        from .ingest import write_csv
        from .synth import series_to_records

        path = Path(args.out)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            write_csv(series_to_records([series]), fh)
        truth_path = Path(args.truth) if args.truth else path.with_name(path.name + ".truth.csv")
        write_truth(truth_path, truth)
        report = {"command": "synth", "seed": args.seed, "spec": asdict(spec),
                  "out": path.name, "truth": truth_path.name, "events": len(truth)}
    sys.stdout.write(json.dumps(report) + "\n")
    return 0


def cmd_serve(args) -> int:
    config = _config(args)
    sink = JsonlAlertSink(args.alerts, stream=None if args.quiet else sys.stdout)
    server = IngestServer(args.listen, config, sink, sample_rate_hz=args.sample_rate)
    host, port = server.address
    log.info("listening on %s:%d", host, port)
    sys.stderr.write(f"listening on {host}:{port}\n")
    sys.stderr.flush()
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
        sink.close()
        sys.stderr.write(
            f"frames={server.frames} malformed={server.malformed} rejected={server.rejected} "
            f"alerts={len(server.alerts)}\n"
        )
    return 0


def cmd_replay(args) -> int:
    table, _ = read_table(args.input)
    n = replay(table.to_records(), args.to, channels=args.channels, rate_hz=args.speed)
    sys.stderr.write(f"sent {n} frames to {args.to}\n")
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gapewatch",
        description="Oyster spawning detection from valve-gape time series.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="clean, smooth, downsample and normalise a channel")
    _add_input_flags(p)
    p.add_argument("--normalize", action=argparse.BooleanOptionalAction, default=True,
                   help="shift each series to start at zero (default on)")
    _add_output_flags(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("spectrum", help="single-sided spectrum table of one window")
    _add_input_flags(p, channel_required=True)
    p.add_argument("--window", type=_off_or_int, default=DEFAULT_WINDOW_SAMPLES, metavar="SAMPLES|off",
                   help="window length; off transforms the whole series (default %(default)s)")
    p.add_argument("--index", type=int, default=-1,
                   help="window to transform, 0 = earliest, negative counts from the tail (default -1)")
    _add_output_flags(p)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("detect", help="classify windows and report spawning events")
    _add_input_flags(p)
    _add_detector_flags(p)
    _add_output_flags(p)
    p.add_argument("--alerts", metavar="PATH", help="also write the equivalent alert stream here")
    p.add_argument("--timing", action="store_true", help="include wall-clock timing in the report")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("sweep", help="spawning counts across window sizes")
    _add_input_flags(p)
    _add_detector_flags(p)
    p.add_argument("--sizes", type=_sizes, default=list(SWEEP_SIZES), metavar="N,N,...",
                   help="window sizes, each >= 100 (default 100,300,500,1000,2000,6000)")
    p.add_argument("--timing", action="store_true", help="add a runtime_s column")
    _add_output_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="generate synthetic gape data with ground truth")
    p.add_argument("--seed", type=_seed, required=True, help="unsigned 64-bit RNG seed")
    p.add_argument("--duration", type=float, default=7200.0, help="seconds (default %(default)s)")
    p.add_argument("--sample-rate", type=float, default=10.0, help="samples per second (default %(default)s)")
    p.add_argument("--baseline", type=float, default=0.2, help="baseline gape, mm")
    p.add_argument("--drift-amp", type=float, default=0.05, help="drift amplitude, mm")
    p.add_argument("--drift-period", type=float, default=3600.0, help="drift period, s")
    p.add_argument("--noise", type=float, default=0.005, help="white noise sigma, mm")
    p.add_argument("--burst", type=_burst, action="append", metavar="START:DUR:FREQ:AMP[:JITTER]",
                   help="add a spawning burst (seconds, seconds, Hz, mm, Hz); repeatable")
    p.add_argument("--channel", type=_channel, metavar="1-6", help="output channel (default 1)")
    p.add_argument("--corpus", type=int, metavar="N", help="generate an N-signal labelled corpus instead")
    p.add_argument("--spawning-fraction", type=float, default=0.5,
                   help="share of corpus signals that contain a burst (default %(default)s)")
    p.add_argument("--out", required=True, metavar="PATH", help="CSV path, or directory with --corpus")
    p.add_argument("--truth", metavar="PATH", help="ground-truth sidecar (default <out>.truth.csv)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve", help="run the streaming ingest server")
    p.add_argument("--listen", default="127.0.0.1:7878", metavar="HOST:PORT",
                   help="address to accept frame connections on (default %(default)s)")
    p.add_argument("--alerts", metavar="PATH", help="append alerts to this JSONL file")
    p.add_argument("--sample-rate", type=float, default=10.0, help="frame rate of the sensors, Hz")
    p.add_argument("--quiet", action="store_true", help="do not echo alerts to stdout")
    _add_detector_flags(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="stream a CSV file to a running server")
    p.add_argument("input")
    p.add_argument("--to", required=True, metavar="HOST:PORT", help="address of a running server")
    p.add_argument("--channels", type=lambda t: [_channel(c) for c in t.split(",")], metavar="C,C,...",
                   help="send only these channels")
    p.add_argument("--speed", type=float, metavar="FRAMES_PER_S", help="throttle (default: as fast as possible)")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (GapewatchError, OSError) as exc:
        sys.stderr.write(f"gapewatch {args.command}: error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
