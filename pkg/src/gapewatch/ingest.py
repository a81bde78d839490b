"""Six-channel gape CSV codec and the streaming ingest server.

File and wire share one line grammar::

    <timestamp_ms>,<v1>,<v2>,<v3>,<v4>,<v5>,<v6>\\n

Values are millimetres; an empty field or ``NaN`` marks a missing channel.
Files start with the header ``ts_ms,s1,s2,s3,s4,s5,s6``.

The server accepts any number of TCP connections, splits each frame into
per-channel tumbling buffers, classifies every full window with the offline
detector and emits an alert whenever a channel's verdict flips.
"""

from __future__ import annotations

import io
import json
import logging
import math
import socket
import socketserver
import sys
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, TextIO, Union

import numpy as np

from .detector import DetectorConfig, Window, WindowVerdict, classify_window
from .errors import InvalidArgumentError
from .signal_core import (
    DEFAULT_SAMPLE_RATE_HZ,
    N_CHANNELS,
    GapeRecord,
    GapeTable,
    clean_records,
    clean_table,
    parse_row,
)

log = logging.getLogger(__name__)
DRAIN_TIMEOUT_S = 10.0

CSV_HEADER = "ts_ms,s1,s2,s3,s4,s5,s6"
ALERT_STARTED = "spawning-started"
ALERT_ENDED = "spawning-ended"


# --------------------------------------------------------------------------
# CSV codec


@dataclass
class CleanReport:
    """What happened while reading a file.

    ``dropped_lines`` are 1-based line numbers in the source text.
    """

    total_lines: int = 0
    header: bool = False
    records: int = 0
    dropped: int = 0
    duplicates: int = 0
    dropped_lines: list[int] = field(default_factory=list)
    elapsed_s: float = 0.0

    @property
    def throughput_lines_per_s(self) -> float:
        return self.total_lines / self.elapsed_s if self.elapsed_s > 0 else math.inf


@dataclass
class ParseResult:
    records: list[GapeRecord]
    report: CleanReport

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


def _is_header(line: str) -> bool:
    first = line.split(",", 1)[0].strip()
    if not first:
        return False
    try:
        float(first)
    except ValueError:
        return True
    return False


def _lines(source) -> Iterable[str]:
    if isinstance(source, (str, Path)) and not (isinstance(source, str) and "\n" in source):
        with open(source, "r", encoding="utf-8", errors="replace", newline="") as fh:
            yield from fh
    elif isinstance(source, str):
        yield from io.StringIO(source, newline="")
    elif isinstance(source, bytes):
        yield from io.StringIO(source.decode("utf-8", errors="replace"), newline="")
    else:
        for line in source:
            if isinstance(line, bytes):
                line = line.decode("utf-8", errors="replace")
            yield line


def parse_csv(source) -> ParseResult:
    """Parse and clean a gape CSV.

    ``source`` may be a path, an open text stream, an iterable of lines or
    the file content itself. A non-numeric first field on line 1 marks a
    header. Malformed lines are dropped and counted, never fatal.
    """
    t0 = time.perf_counter()
    lines = list(_lines(source))
    header = bool(lines) and _is_header(lines[0])
    body = lines[1:] if header else lines
    offset = 2 if header else 1
    cleaned = clean_records(body)
    report = CleanReport(
        total_lines=len(lines),
        header=header,
        records=len(cleaned.records),
        dropped=cleaned.dropped,
        duplicates=cleaned.duplicates,
        dropped_lines=[i - 1 + offset for i in cleaned.dropped_rows],
        elapsed_s=time.perf_counter() - t0,
    )
    return ParseResult(cleaned.records, report)


def read_table(source) -> tuple[GapeTable, CleanReport]:
    """Columnar variant of :func:`parse_csv` for very large files.

    Same grammar and cleaning rules, but no per-row objects are built.
    """
    t0 = time.perf_counter()
    ts_list: list[int] = []
    vals: list[float] = []
    nan = math.nan
    dropped_lines = []
    total = 0
    header = False
    for lineno, line in enumerate(_lines(source), start=1):
        total += 1
        if lineno == 1 and _is_header(line):
            header = True
            continue
        parts = line.rstrip("\r\n").split(",")
        try:
            if len(parts) != N_CHANNELS + 1:
                raise ValueError
            row = [float(p) if p.strip() else nan for p in parts[1:]]
            ts = int(parts[0])
            if ts < 0:
                raise ValueError
        except ValueError:
            rec = parse_row(line)  # slow path handles odd-but-valid rows
            if rec is None:
                dropped_lines.append(lineno)
                continue
            ts = rec.timestamp_ms
            row = [nan if v is None else v for v in rec.channels]
        ts_list.append(ts)
        vals.extend(row)
    arr = np.array(vals, dtype=np.float64).reshape(-1, N_CHANNELS)
    table, dropped, duplicates = clean_table(np.array(ts_list, dtype=np.int64), arr)
    # all-missing rows were dropped inside clean_table; their line numbers are lost there
    report = CleanReport(
        total_lines=total,
        header=header,
        records=len(table),
        dropped=len(dropped_lines) + dropped,
        duplicates=duplicates,
        dropped_lines=dropped_lines,
        elapsed_s=time.perf_counter() - t0,
    )
    return table, report


def format_line(record: GapeRecord) -> str:
    """One protocol/CSV line for ``record``, without the trailing newline."""
    if record.present_count == 0:
        raise InvalidArgumentError(
            f"record at {record.timestamp_ms} ms has no channel values and would not re-parse"
        )
    return ",".join(
        [str(record.timestamp_ms)] + ["" if v is None else repr(float(v)) for v in record.channels]
    )


def write_csv(records: Iterable[GapeRecord], stream: Optional[TextIO] = None) -> Optional[str]:
    """Write header plus one line per record; return the text if no stream is given.

    Floats use the shortest repr that parses back to the same double.
    """
    records = list(records)
    lines = [format_line(r) for r in records]  # validates everything before writing
    text = CSV_HEADER + "\n" + "".join(line + "\n" for line in lines)
    if stream is None:
        return text
    stream.write(text)
    return None


# --------------------------------------------------------------------------
# Wire messages


@dataclass(frozen=True)
class FrameMessage:
    timestamp_ms: int
    channels: tuple[Optional[float], ...]

    @classmethod
    def parse(cls, line: Union[str, bytes]) -> Optional["FrameMessage"]:
        rec = parse_row(line)
        return None if rec is None else cls(rec.timestamp_ms, rec.channels)

    @classmethod
    def from_record(cls, record: GapeRecord) -> "FrameMessage":
        return cls(record.timestamp_ms, record.channels)

    def to_record(self) -> GapeRecord:
        return GapeRecord(self.timestamp_ms, self.channels)

    def serialize(self) -> str:
        return format_line(self.to_record()) + "\n"


@dataclass(frozen=True)
class AlertRecord:
    channel_id: int
    kind: str
    window_start_ms: int
    window_end_ms: int
    band_power: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=False)

    @classmethod
    def from_json(cls, line: str) -> "AlertRecord":
        return cls(**json.loads(line))


class AlertTracker:
    """Turns a channel's verdict stream into alternating started/ended alerts."""

    def __init__(self, channel_id: int):
        self.channel_id = channel_id
        self.spawning = False

    def update(self, verdict: WindowVerdict) -> Optional[AlertRecord]:
        if verdict.is_spawning == self.spawning:
            return None
        self.spawning = verdict.is_spawning
        return AlertRecord(
            channel_id=self.channel_id,
            kind=ALERT_STARTED if verdict.is_spawning else ALERT_ENDED,
            window_start_ms=verdict.start_time_ms,
            window_end_ms=verdict.end_time_ms,
            band_power=verdict.band_power,
        )


def alerts_from_verdicts(channel_id: int, verdicts: Sequence[WindowVerdict]) -> list[AlertRecord]:
    """Alerts an online run would emit for this chronological verdict list."""
    tracker = AlertTracker(channel_id)
    return [a for a in (tracker.update(v) for v in verdicts) if a is not None]


class ChannelBuffer:
    """Tumbling window buffer for one channel.

    Accepts values in timestamp order; every ``window_samples`` accepted
    values it classifies the full window and resets. Readings at or before
    the last accepted timestamp are rejected.
    """

    def __init__(self, channel_id: int, config: DetectorConfig, sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ):
        config.check_rate(sample_rate_hz)
        self.channel_id = channel_id
        self.config = config
        self.sample_rate_hz = float(sample_rate_hz)
        self.capacity = config.window_samples
        self._buf = np.empty(self.capacity, dtype=np.float64)
        self.fill = 0
        self.window_start_ms: Optional[int] = None
        self.last_timestamp_ms: Optional[int] = None
        self.windows_emitted = 0
        self.last_verdict: Optional[WindowVerdict] = None
        self.tracker = AlertTracker(channel_id)
        self.lock = threading.Lock()

    def push(self, timestamp_ms: int, value: float) -> Optional[WindowVerdict]:
        if self.last_timestamp_ms is not None and timestamp_ms <= self.last_timestamp_ms:
            return None
        self.last_timestamp_ms = timestamp_ms
        if self.fill == 0:
            self.window_start_ms = timestamp_ms
        self._buf[self.fill] = value
        self.fill += 1
        if self.fill < self.capacity:
            return None
        window = Window(
            index=self.windows_emitted,
            start_sample=self.windows_emitted * self.capacity,
            values=self._buf.copy(),
            sample_rate_hz=self.sample_rate_hz,
            start_time_ms=self.window_start_ms,
            end_time_ms=self.window_start_ms + int(round(self.capacity * 1000.0 / self.sample_rate_hz)),
        )
        self.fill = 0
        self.windows_emitted += 1
        self.last_verdict = classify_window(window, self.config)
        return self.last_verdict


# --------------------------------------------------------------------------
# Alert sinks


class JsonlAlertSink:
    """Appends one JSON object per alert to a file and/or a text stream."""

    def __init__(self, path=None, stream: Optional[TextIO] = None):
        self.path = Path(path) if path else None
        self.stream = stream
        self._lock = threading.Lock()
        self._fh = open(self.path, "a", encoding="utf-8") if self.path else None

    def __call__(self, alert: AlertRecord) -> None:
        line = alert.to_json() + "\n"
        with self._lock:
            if self._fh:
                self._fh.write(line)
                self._fh.flush()
            if self.stream:
                self.stream.write(line)
                self.stream.flush()

    def close(self) -> None:
        if self._fh:
            self._fh.close()
            self._fh = None


def read_alerts(path) -> list[AlertRecord]:
    text = Path(path).read_text(encoding="utf-8")
    return [AlertRecord.from_json(line) for line in text.splitlines() if line.strip()]


# --------------------------------------------------------------------------
# Server


def parse_address(address: Union[str, tuple]) -> tuple[str, int]:
    """``"host:port"`` (or ``":port"``) to a ``(host, port)`` pair."""
    if isinstance(address, tuple):
        return address[0], int(address[1])
    host, sep, port = str(address).rpartition(":")
    if not sep:
        raise InvalidArgumentError(f"listen address {address!r} must look like host:port")
    try:
        port_no = int(port)
    except ValueError:
        raise InvalidArgumentError(f"invalid port in {address!r}") from None
    return host.strip("[]") or "127.0.0.1", port_no


class _FrameHandler(socketserver.StreamRequestHandler):
    def handle(self):
        srv: IngestServer = self.server.ingest  # type: ignore[attr-defined]
        srv._connection_opened()
        try:
            for raw in self.rfile:
                srv.feed_line(raw)
        except (ConnectionError, OSError) as exc:
            log.warning("connection from %s failed: %s", self.client_address, exc)
        finally:
            srv._connection_closed()


class _TCPServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


class IngestServer:
    """Line-protocol ingest with live per-channel detection.

    Buffers are keyed by channel and outlive connections, so a client that
    drops and reconnects resumes filling the same windows.
    """

    def __init__(
        self,
        listen_address: Union[str, tuple] = "127.0.0.1:0",
        config: DetectorConfig = DetectorConfig(),
        alert_sink: Optional[Callable[[AlertRecord], None]] = None,
        sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
    ):
        if config.hop_samples not in (None, config.window_samples):
            raise InvalidArgumentError("the ingest server only runs tumbling windows")
        self.config = config
        self.alert_sink = alert_sink
        self.buffers = {c: ChannelBuffer(c, config, sample_rate_hz) for c in range(1, N_CHANNELS + 1)}
        self.verdicts: dict[int, list[WindowVerdict]] = {c: [] for c in self.buffers}
        self.alerts: list[AlertRecord] = []
        self.frames = 0
        self.malformed = 0
        self.rejected = 0
        self._stats_lock = threading.Lock()
        self._conn_cond = threading.Condition()
        self._active = 0
        self._closed_connections = 0
        self._thread: Optional[threading.Thread] = None
        host, port = parse_address(listen_address)
        self._server = _TCPServer((host, port), _FrameHandler, bind_and_activate=True)
        self._server.ingest = self

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def feed_line(self, line: Union[str, bytes]) -> None:
        if isinstance(line, bytes):
            line = line.decode("utf-8", errors="replace")
        msg = FrameMessage.parse(line)
        if msg is None:
            if line.strip() and line.strip() != CSV_HEADER:
                with self._stats_lock:
                    self.malformed += 1
            return
        self.feed_frame(msg)

    def feed_frame(self, msg: FrameMessage) -> None:
        with self._stats_lock:
            self.frames += 1
        for cid, value in enumerate(msg.channels, start=1):
            if value is None:
                continue
            buf = self.buffers[cid]
            with buf.lock:
                if buf.last_timestamp_ms is not None and msg.timestamp_ms <= buf.last_timestamp_ms:
                    with self._stats_lock:
                        self.rejected += 1
                    continue
                verdict = buf.push(msg.timestamp_ms, value)
                if verdict is None:
                    continue
                self.verdicts[cid].append(verdict)
                alert = buf.tracker.update(verdict)
                if alert is not None:
                    with self._stats_lock:
                        self.alerts.append(alert)
                    if self.alert_sink is not None:
                        self.alert_sink(alert)

    def _connection_opened(self):
        with self._conn_cond:
            self._active += 1

    def _connection_closed(self):
        with self._conn_cond:
            self._active -= 1
            self._closed_connections += 1
            self._conn_cond.notify_all()

    def wait_for_connections(self, n: int, timeout: Optional[float] = None) -> bool:
        """Block until ``n`` connections have been fully processed."""
        with self._conn_cond:
            return self._conn_cond.wait_for(lambda: self._closed_connections >= n, timeout)

    def drain(self, timeout: Optional[float] = DRAIN_TIMEOUT_S) -> bool:
        """Wait for open connections to finish; False if some are still open at ``timeout``."""
        with self._conn_cond:
            return self._conn_cond.wait_for(lambda: self._active == 0, timeout)

    def serve_forever(self) -> None:
        self._server.serve_forever(poll_interval=0.1)

    def start(self) -> "IngestServer":
        self._thread = threading.Thread(target=self.serve_forever, name="gapewatch-ingest", daemon=True)
        self._thread.start()
        return self

    def stop(self, drain_timeout: Optional[float] = DRAIN_TIMEOUT_S) -> None:
        """Stop accepting, let open connections finish, then close."""
        if self._thread:
            self._server.shutdown()
            self._thread.join()
        if not self.drain(drain_timeout):
            log.warning("closing with %d connection(s) still open", self._active)
        self._server.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def serve(
    listen_address: Union[str, tuple],
    config: DetectorConfig = DetectorConfig(),
    alert_sink: Optional[Callable[[AlertRecord], None]] = None,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
    on_ready: Optional[Callable[[IngestServer], None]] = None,
) -> IngestServer:
    """Run the ingest server in the foreground until interrupted.

    A bind failure propagates as ``OSError`` before anything is served.
    """
    server = IngestServer(listen_address, config, alert_sink, sample_rate_hz)
    if on_ready:
        on_ready(server)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return server


def replay(
    records: Iterable[GapeRecord],
    address: Union[str, tuple],
    *,
    channels: Optional[Sequence[int]] = None,
    rate_hz: Optional[float] = None,
    chunk: int = 500,
) -> int:
    """Send records to a running server as protocol lines; return frames sent.

    ``channels`` restricts each frame to those channels (others sent empty,
    frames left with nothing are skipped). ``rate_hz`` throttles to that many
    frames per second; ``None`` sends as fast as the socket allows.
    """
    keep = None if channels is None else set(channels)
    sent = 0
    pending: list[str] = []
    with socket.create_connection(parse_address(address)) as sock:
        t0 = time.perf_counter()
        for rec in records:
            if keep is not None:
                vals = tuple(v if (i + 1) in keep else None for i, v in enumerate(rec.channels))
                if all(v is None for v in vals):
                    continue
                rec = GapeRecord(rec.timestamp_ms, vals)
            pending.append(format_line(rec) + "\n")
            sent += 1
            if len(pending) >= chunk:
                sock.sendall("".join(pending).encode("utf-8"))
                pending.clear()
                if rate_hz:
                    lag = sent / rate_hz - (time.perf_counter() - t0)
                    if lag > 0:
                        time.sleep(lag)
        if pending:
            sock.sendall("".join(pending).encode("utf-8"))
        sock.shutdown(socket.SHUT_WR)
    return sent


def stdout_sink() -> JsonlAlertSink:
    return JsonlAlertSink(stream=sys.stdout)
