import csv
import io
import json
import socket
import threading

import numpy as np
import pytest

from gapewatch.cli import build_parser, main
from gapewatch.ingest import read_alerts, write_csv
from gapewatch.signal_core import GapeRecord
from gapewatch.synth import read_truth


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def spawning_csv(tmp_path, capsys):
    path = tmp_path / "spawn.csv"
    code, _, _ = run(capsys, "synth", "--seed", 42, "--duration", 7200,
                     "--burst", "1200:2400:0.8:1.0:0.05", "--out", path)
    assert code == 0
    return path


def _jsonl(text):
    return [json.loads(line) for line in text.splitlines()]


class TestDetect:
    def test_events_match_truth(self, spawning_csv, capsys):
        code, out, _ = run(capsys, "detect", spawning_csv)
        assert code == 0
        rows = _jsonl(out)
        events = [r for r in rows if r["record"] == "event"]
        assert len(events) == 1
        truth = read_truth(str(spawning_csv) + ".truth.csv")
        (ch, t0, t1), = truth
        e = events[0]
        assert e["channel_id"] == ch and e["start_time_ms"] < t1 and t0 < e["end_time_ms"]

    def test_zero_file(self, tmp_path, capsys):
        path = tmp_path / "zero.csv"
        path.write_text(write_csv(GapeRecord(i * 100, (0.0,) + (None,) * 5) for i in range(12000)))
        code, out, _ = run(capsys, "detect", path)
        rows = _jsonl(out)
        assert code == 0
        assert not [r for r in rows if r["record"] == "event"]
        assert len([r for r in rows if r["record"] == "verdict"]) == 2

    def test_config_echo(self, spawning_csv, capsys):
        _, out, _ = run(capsys, "detect", spawning_csv, "--window", 6000, "--band", "0.3:1.3", "--threshold", 0.1)
        cfg = _jsonl(out)[0]["config"]
        assert (cfg["window_samples"], cfg["f_lo_hz"], cfg["f_hi_hz"], cfg["threshold"]) == (6000, 0.3, 1.3, 0.1)

    def test_csv_format(self, spawning_csv, capsys):
        code, out, err = run(capsys, "detect", spawning_csv, "--format", "csv")
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == 0 and len([r for r in rows if r["record"] == "event"]) == 1
        assert json.loads(err)["command"] == "detect"

    def test_nyquist_error(self, spawning_csv, capsys):
        code, _, err = run(capsys, "detect", spawning_csv, "--downsample", 10)
        assert code != 0
        assert "2.6 Hz" in err

    def test_one_hz_file(self, tmp_path, capsys):
        path = tmp_path / "slow.csv"
        path.write_text(write_csv(GapeRecord(i * 1000, (0.1,) + (None,) * 5) for i in range(7000)))
        code, _, err = run(capsys, "detect", path)
        assert code == 1 and "Nyquist" in err

    def test_deterministic(self, spawning_csv, capsys):
        assert run(capsys, "detect", spawning_csv)[1] == run(capsys, "detect", spawning_csv)[1]

    def test_smoothing_flag(self, spawning_csv, capsys):
        code, out, _ = run(capsys, "detect", spawning_csv, "--smooth", 5, "--channel", 1)
        assert code == 0 and _jsonl(out)[0]["preprocess"]["smooth"] == 5


class TestSpectrum:
    def test_tone_peak_and_rows(self, tmp_path, capsys):
        n = 6000
        x = 0.2 * np.sin(2 * np.pi * 0.8 * np.arange(n) / 10)
        path = tmp_path / "tone.csv"
        path.write_text(write_csv(GapeRecord(i * 100, (float(v),) + (None,) * 5) for i, v in enumerate(x)))
        code, out, _ = run(capsys, "spectrum", path, "--channel", 1, "--index", 0, "--format", "csv")
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == 0 and len(rows) == 3001
        assert list(rows[0]) == ["freq_hz", "amplitude", "psd", "psd_db"]
        amps = [float(r["amplitude"]) for r in rows]
        k = int(np.argmax(amps))
        assert float(rows[k]["freq_hz"]) == pytest.approx(0.8)
        assert amps[k] == pytest.approx(0.2, abs=1e-9)

    def test_zero_window(self, tmp_path, capsys):
        path = tmp_path / "z.csv"
        path.write_text(write_csv(GapeRecord(i * 100, (0.0,) + (None,) * 5) for i in range(6000)))
        _, out, _ = run(capsys, "spectrum", path, "--channel", 1, "--format", "jsonl")
        rows = _jsonl(out)
        assert all(r["amplitude"] == 0 for r in rows)
        assert all(r["psd_db"] == -120.0 for r in rows)

    def test_out_of_range(self, spawning_csv, capsys):
        code, _, err = run(capsys, "spectrum", spawning_csv, "--channel", 1, "--index", 12)
        assert code == 1 and "0..11" in err


class TestSweep:
    def test_default_sizes(self):
        args = build_parser().parse_args(["sweep", "x.csv"])
        assert args.sizes == [100, 300, 500, 1000, 2000, 6000]

    def test_reject_50(self, spawning_csv, capsys):
        code, _, err = run(capsys, "sweep", spawning_csv, "--sizes", "50")
        assert code == 1 and "not considered" in err

    def test_rows(self, spawning_csv, capsys):
        code, out, _ = run(capsys, "sweep", spawning_csv, "--sizes", "1000,6000", "--format", "csv")
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == 0 and [int(r["size"]) for r in rows] == [1000, 6000]
        assert int(rows[0]["spawning_count"]) >= int(rows[1]["spawning_count"])


class TestSynth:
    def test_byte_identical(self, tmp_path, capsys):
        for name in ("a.csv", "b.csv"):
            run(capsys, "synth", "--seed", 42, "--duration", 600, "--out", tmp_path / name)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_sidecar(self, tmp_path, capsys):
        code, out, _ = run(capsys, "synth", "--seed", 1, "--duration", 1000,
                           "--burst", "100:600:0.8:0.2", "--out", tmp_path / "s.csv")
        assert code == 0 and json.loads(out)["seed"] == 1
        assert read_truth(tmp_path / "s.csv.truth.csv") == [(1, 100_000, 700_000)]

    def test_corpus(self, tmp_path, capsys):
        code, out, _ = run(capsys, "synth", "--seed", 3, "--corpus", 6, "--duration", 1800,
                           "--out", tmp_path / "corpus")
        rep = json.loads(out)
        assert code == 0 and len(rep["files"]) == 1
        assert (tmp_path / "corpus" / "corpus_000.csv").exists()


class TestFlags:
    def test_unknown_flag(self, capsys):
        with pytest.raises(SystemExit) as ei:
            main(["detect", "x.csv", "--bogus"])
        assert ei.value.code == 2

    @pytest.mark.parametrize("cmd", ["preprocess", "spectrum", "detect", "sweep", "synth", "serve", "replay"])
    def test_help_documents_flags(self, cmd, capsys):
        with pytest.raises(SystemExit):
            main([cmd, "--help"])
        text = capsys.readouterr().out
        parser = build_parser()
        sub = parser._subparsers._group_actions[0].choices[cmd]
        for action in sub._actions:
            for opt in action.option_strings:
                assert opt in text
            if action.option_strings and action.dest != "help":
                assert action.help

    def test_spec_flags_exist(self):
        p = build_parser()
        det = p._subparsers._group_actions[0].choices
        opts = {o for name in det for a in det[name]._actions for o in a.option_strings}
        for flag in ["--channel", "--window", "--band", "--threshold", "--smooth", "--downsample",
                     "--hop", "--seed", "--listen", "--alerts", "--format"]:
            assert flag in opts


class TestPreprocess:
    def test_normalised_output(self, tmp_path, capsys):
        path = tmp_path / "p.csv"
        path.write_text(write_csv(GapeRecord(i * 100, (0.3 + i,) + (None,) * 5) for i in range(20)))
        code, out, _ = run(capsys, "preprocess", path, "--downsample", 10, "--format", "csv")
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == 0
        assert [float(r["value_mm"]) for r in rows] == pytest.approx([0.0, 10.0])
        assert [int(r["ts_ms"]) for r in rows] == [0, 1000]


class TestServeReplay:
    def test_serve_matches_detect(self, spawning_csv, tmp_path, capsys):
        from gapewatch import cli

        with socket.socket() as s:
            s.bind(("127.0.0.1", 0))
            port = s.getsockname()[1]
        alerts = tmp_path / "online.jsonl"
        started = {}
        orig = cli.IngestServer

        class Capture(orig):
            def __init__(self, *a, **kw):
                super().__init__(*a, **kw)
                started["srv"] = self

        cli.IngestServer = Capture
        try:
            t = threading.Thread(target=main, args=(["serve", "--listen", f"127.0.0.1:{port}",
                                                     "--alerts", str(alerts), "--quiet"],), daemon=True)
            t.start()
            for _ in range(100):
                if "srv" in started:
                    break
                threading.Event().wait(0.05)
            assert main(["replay", str(spawning_csv), "--to", f"127.0.0.1:{port}"]) == 0
            srv = started["srv"]
            assert srv.wait_for_connections(1, timeout=30)
            srv._server.shutdown()
            t.join(10)
        finally:
            cli.IngestServer = orig
        capsys.readouterr()
        assert main(["detect", str(spawning_csv), "--alerts", str(tmp_path / "offline.jsonl")]) == 0
        assert read_alerts(alerts) == read_alerts(tmp_path / "offline.jsonl")
        assert len(read_alerts(alerts)) >= 1
