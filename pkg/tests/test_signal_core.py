import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import rec, series_of
from gapewatch.errors import EmptyChannelError, GapDetectedError, InvalidArgumentError
from gapewatch.signal_core import (
    GapeRecord,
    GapeTable,
    block_mean_downsample,
    clean_records,
    clean_table,
    extract_channel,
    moving_average,
    normalize_zero_start,
    parse_row,
)

finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False)


class TestTypes:
    def test_record_needs_six_slots(self):
        with pytest.raises(InvalidArgumentError):
            GapeRecord(0, (1.0, 2.0))

    def test_record_rejects_nonfinite_and_negative_time(self):
        with pytest.raises(InvalidArgumentError):
            rec(0, math.inf)
        with pytest.raises(InvalidArgumentError):
            rec(-1, 1.0)

    def test_series_invariants(self):
        with pytest.raises(InvalidArgumentError):
            series_of([])
        with pytest.raises(InvalidArgumentError):
            series_of([1.0, math.nan])
        with pytest.raises(InvalidArgumentError):
            series_of([1.0], fs=0)

    def test_series_timestamps_uniform(self):
        s = series_of(np.zeros(5), start=1000)
        assert s.timestamps_ms().tolist() == [1000, 1100, 1200, 1300, 1400]
        assert s.time_ms(5) == 1500

    def test_series_values_read_only(self):
        s = series_of([1.0, 2.0])
        with pytest.raises(ValueError):
            s.values[0] = 5


class TestCleanRecords:
    def test_blank_row_dropped(self):
        out = clean_records(["1000,1,2,3,4,5,6", "", "1100,1,2,3,4,5,6"])
        assert len(out) == 2
        assert out.dropped == 1
        assert out.dropped_rows == [2]

    def test_sort_and_dedupe(self):
        rows = [f"{t},{t},,,,," for t in (5, 3, 3, 9)]
        out = clean_records(rows)
        assert [r.timestamp_ms for r in out] == [3, 5, 9]
        assert out.duplicates == 1

    def test_keeps_first_duplicate(self):
        out = clean_records(["3,1.0,,,,,", "3,2.0,,,,,"])
        assert out.records[0].channel(1) == 1.0

    def test_partial_row_kept_with_missing_slots(self):
        out = clean_records(["1000,0.21,,0.22,NaN,xx,0.23"])
        assert out.records[0].channels == (0.21, None, 0.22, None, None, 0.23)

    def test_row_with_no_values_dropped(self):
        out = clean_records(["1000,,,,,,", "1000,nan,NaN,,,,", "abc,1,2,3,4,5,6", "1,2,3"])
        assert out.records == [] and out.dropped == 4

    def test_all_invalid_input(self):
        out = clean_records(["", "garbage"])
        assert out.records == [] and out.dropped == 2

    def test_accepts_field_sequences(self):
        out = clean_records([[10, 0.1, None, None, None, None, 0.6]])
        assert out.records[0].channels[0] == 0.1

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 50), st.lists(st.one_of(st.none(), finite), min_size=6, max_size=6))))
    def test_idempotent(self, rows):
        raw = [[t] + vals for t, vals in rows]
        once = clean_records(raw).records
        twice = clean_records(once)
        assert twice.records == once
        assert twice.dropped == 0 and twice.duplicates == 0

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 50), st.lists(st.one_of(st.none(), finite), min_size=6, max_size=6))))
    def test_table_cleaning_agrees(self, rows):
        raw = [[t] + vals for t, vals in rows]
        expected = clean_records(raw)
        ts = [t for t, _ in rows]
        vals = [[math.nan if v is None else v for v in vs] for _, vs in rows]
        table, dropped, dups = clean_table(ts, np.array(vals).reshape(-1, 6))
        assert table.to_records() == expected.records
        assert (dropped, dups) == (expected.dropped, expected.duplicates)


class TestParseRow:
    def test_float_timestamp_integral(self):
        assert parse_row("1000.0,1,,,,,").timestamp_ms == 1000

    def test_fractional_timestamp_dropped(self):
        assert parse_row("1000.5,1,,,,,") is None

    def test_infinite_value_is_missing(self):
        assert parse_row("1,inf,2,,,,").channels[:2] == (None, 2.0)


class TestExtractChannel:
    def test_full_channel(self):
        recs = [rec(i * 100, 0.0, float(i)) for i in range(10)]
        s = extract_channel(recs, 2)
        assert len(s) == 10
        assert s.start_time_ms == 0

    def _gappy(self):
        return [rec(i * 100, 0, 0, 0, 0, 0, None if i in (3, 4) else float(i)) for i in range(8)]

    def test_concatenate_splices(self):
        s = extract_channel(self._gappy(), 6)
        assert s.values.tolist() == [0, 1, 2, 5, 6, 7]

    def test_error_on_gap(self):
        with pytest.raises(GapDetectedError) as ei:
            extract_channel(self._gappy(), 6, "error-on-gap")
        assert (ei.value.gap_start_ms, ei.value.gap_end_ms) == (200, 500)

    def test_error_on_timestamp_jump(self):
        recs = [rec(t, 1.0) for t in (0, 100, 200, 900)]
        with pytest.raises(GapDetectedError):
            extract_channel(recs, 1, "error-on-gap")
        assert len(extract_channel(recs, 1)) == 4

    def test_empty_channel(self):
        with pytest.raises(EmptyChannelError):
            extract_channel([rec(0, 1.0)], 3)

    def test_bad_arguments(self):
        with pytest.raises(InvalidArgumentError):
            extract_channel([rec(0, 1.0)], 7)
        with pytest.raises(InvalidArgumentError):
            extract_channel([rec(0, 1.0)], 1, "interpolate")

    def test_table_input(self):
        recs = self._gappy()
        assert extract_channel(GapeTable.from_records(recs), 6) == extract_channel(recs, 6)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.booleans(), min_size=1, max_size=40))
    def test_length_is_present_count(self, mask):
        if not any(mask):
            return
        recs = [rec(i, 1.0, float(i) if m else None) for i, m in enumerate(mask)]
        assert len(extract_channel(recs, 2)) == sum(mask)


class TestDownsample:
    def test_block_mean(self):
        out = block_mean_downsample(series_of(range(1, 11)), 10)
        assert out.values.tolist() == [5.5]
        assert out.sample_rate_hz == 1.0

    def test_drops_partial_block(self):
        out = block_mean_downsample(series_of(range(25)), 10)
        assert out.values.tolist() == [4.5, 14.5]

    def test_identity(self, rng):
        s = series_of(rng.standard_normal(17))
        assert block_mean_downsample(s, 1) == s

    def test_zero_block(self):
        with pytest.raises(InvalidArgumentError):
            block_mean_downsample(series_of([1.0]), 0)

    def test_composition(self, rng):
        s = series_of(rng.standard_normal(360))
        a = block_mean_downsample(block_mean_downsample(s, 4), 3)
        b = block_mean_downsample(s, 12)
        np.testing.assert_allclose(a.values, b.values, rtol=1e-12, atol=1e-15)
        assert a.sample_rate_hz == b.sample_rate_hz

    def test_table_scale_lengths(self):
        s = series_of(np.zeros(3_984_040))
        out = block_mean_downsample(s, 10)
        assert len(out) == 398_404 and out.sample_rate_hz == 1.0


class TestNormalize:
    @pytest.mark.parametrize(
        "inp, expected",
        [([3, 4, 5], [0, 1, 2]), ([7.5], [0])],
    )
    def test_examples(self, inp, expected):
        assert normalize_zero_start(series_of(inp)).values.tolist() == expected

    def test_decimal_example(self):
        out = normalize_zero_start(series_of([0.21, 0.21, 0.35])).values
        assert out[0] == 0 and out[1] == 0
        assert out[2] == pytest.approx(0.14, abs=1e-15)

    @given(st.lists(finite, min_size=1, max_size=30))
    def test_idempotent_and_differences(self, vals):
        s = series_of(vals)
        once = normalize_zero_start(s)
        assert once.values[0] == 0.0
        assert normalize_zero_start(once) == once
        i, j = 0, len(vals) - 1
        assert once.values[j] - once.values[i] == pytest.approx(s.values[j] - s.values[i], abs=1e-9)


class TestMovingAverage:
    def test_edge_rule_by_hand(self):
        assert moving_average(series_of([1, 5, 3, 7]), 3).values.tolist() == [1, 3, 5, 7]

    def test_window5_edges(self):
        x = [1.0, 2.0, 6.0, 4.0, 9.0, 3.0]
        out = moving_average(series_of(x), 5).values
        assert out[0] == 1.0 and out[-1] == 3.0
        assert out[1] == pytest.approx(3.0)  # mean(1,2,6)
        assert out[2] == pytest.approx(22 / 5)
        assert out[4] == pytest.approx(16 / 3)  # mean(4,9,3)

    def test_identity(self, rng):
        s = series_of(rng.standard_normal(9))
        assert moving_average(s, 1) == s

    @pytest.mark.parametrize("window", [0, 2, 4, -1])
    def test_bad_window(self, window):
        with pytest.raises(InvalidArgumentError):
            moving_average(series_of(np.ones(10)), window)

    def test_window_longer_than_series(self):
        with pytest.raises(InvalidArgumentError):
            moving_average(series_of([1.0, 2.0]), 3)

    @given(finite, st.integers(1, 40), st.sampled_from([1, 3, 5, 7, 11]))
    def test_constant_preserved_exactly(self, c, n, w):
        if w > n:
            return
        out = moving_average(series_of([c] * n), w)
        assert np.all(out.values == c)

    @given(st.lists(finite, min_size=11, max_size=60), st.sampled_from([3, 5, 9, 11]))
    def test_bounded(self, vals, w):
        out = moving_average(series_of(vals), w).values
        assert out.min() >= min(vals) and out.max() <= max(vals)
        assert out.size == len(vals)
