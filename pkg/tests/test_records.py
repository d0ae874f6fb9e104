import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conformal_abstention.records import (
    Dataset,
    MatchCalibRecord,
    ParseError,
    ScoreKind,
    ValidationError,
    parse_match_calib_records,
    parse_scored_examples,
    round_half_up,
    seeded_permutation,
    serialize_match_calib_records,
    serialize_scored_examples,
    split_calibration_test,
)


class TestParseScoredExamples:
    def test_two_lines_in_order(self):
        data = parse_scored_examples(
            b'{"id": "x", "score": 2, "matched": true}\n{"id": "w", "score": 1.5, "matched": false}\n'
        )
        assert data.ids == ["x", "w"]
        np.testing.assert_array_equal(data.scores, [2.0, 1.5])
        np.testing.assert_array_equal(data.matched, [True, False])

    def test_non_numeric_score_names_line(self):
        with pytest.raises(ParseError, match="line 1"):
            parse_scored_examples('{"id": "x", "score": "high", "matched": true}\n')

    def test_bool_score_rejected(self):
        with pytest.raises(ParseError):
            parse_scored_examples('{"id": "x", "score": true, "matched": true}\n')

    def test_bad_json_line_number(self):
        src = '{"id": "a", "score": 1, "matched": true}\n\n{oops\n'
        with pytest.raises(ParseError, match="line 3"):
            parse_scored_examples(src)

    def test_missing_field(self):
        with pytest.raises(ParseError, match="matched"):
            parse_scored_examples('{"id": "a", "score": 1}\n')

    def test_four_point_fixture(self, four_point_jsonl):
        data = parse_scored_examples(four_point_jsonl.read_bytes())
        np.testing.assert_array_equal(data.scores, [5, 3, 4, 1])
        np.testing.assert_array_equal(data.matched, [True, False, True, False])

    def test_duplicate_ids(self):
        src = '{"id": "a", "score": 1, "matched": true}\n{"id": "a", "score": 2, "matched": true}\n'
        with pytest.raises(ValidationError, match="duplicate"):
            parse_scored_examples(src)

    def test_nan_score_is_validation_error(self):
        with pytest.raises(ValidationError):
            parse_scored_examples('{"id": "a", "score": NaN, "matched": true}\n')

    def test_empty_input(self):
        with pytest.raises(ValidationError):
            parse_scored_examples(b"")

    def test_headers(self):
        src = "#score_kind=match-count\n#k=4\n# a comment\n" '{"id": "a", "score": 4, "matched": true}\n'
        data = parse_scored_examples(src)
        assert data.score_kind is ScoreKind.MATCH_COUNT
        assert data.k == 4

    def test_match_count_out_of_range(self):
        src = "#score_kind=match-count\n#k=4\n" '{"id": "a", "score": 5, "matched": true}\n'
        with pytest.raises(ValidationError):
            parse_scored_examples(src)

    def test_match_count_non_integer(self):
        src = "#score_kind=match-count\n" '{"id": "a", "score": 2.5, "matched": true}\n'
        with pytest.raises(ValidationError):
            parse_scored_examples(src)

    def test_unknown_score_kind(self):
        with pytest.raises(ParseError, match="line 1"):
            parse_scored_examples("#score_kind=vibes\n")

    def test_file_object_and_invalid_utf8(self):
        data = parse_scored_examples(io.BytesIO(b'{"id": "a", "score": 1, "matched": true}\n'))
        assert len(data) == 1
        with pytest.raises(ParseError, match="UTF-8"):
            parse_scored_examples(b"\xff\xfe\n")

    def test_round_trip(self, four_point):
        data = Dataset(four_point.examples, ScoreKind.MATCH_COUNT, 6)
        back = parse_scored_examples(serialize_scored_examples(data))
        assert back == data


class TestParseMatchCalibRecords:
    def test_singleton(self):
        recs = parse_match_calib_records('{"id": "a", "similarity": 7.0, "human_correct": true}\n')
        assert recs == [MatchCalibRecord("a", 7.0, True)]

    def test_nan_similarity(self):
        with pytest.raises(ValidationError):
            parse_match_calib_records('{"id": "a", "similarity": NaN, "human_correct": true}\n')

    def test_string_nan_similarity(self):
        # A quoted "NaN" is not a number at all.
        with pytest.raises((ParseError, ValidationError)):
            parse_match_calib_records('{"id": "a", "similarity": "NaN", "human_correct": true}\n')

    def test_six_record_fixture(self):
        sims = [9, 8, 7, 6, 5, 4]
        hc = [True, True, False, True, False, False]
        recs = [MatchCalibRecord(f"r{i}", float(s), c) for i, (s, c) in enumerate(zip(sims, hc))]
        back = parse_match_calib_records(serialize_match_calib_records(recs))
        assert back == recs
        assert len(back) == 6


class TestSplit:
    def _data(self, n):
        return Dataset.from_arrays(np.arange(n, dtype=float), np.ones(n, dtype=bool))

    def test_sizes(self):
        cal, test = split_calibration_test(self._data(10), 0.2, seed=7)
        assert (len(cal), len(test)) == (8, 2)

    def test_deterministic(self):
        a = split_calibration_test(self._data(10), 0.2, seed=7)
        b = split_calibration_test(self._data(10), 0.2, seed=7)
        assert a[0].ids == b[0].ids and a[1].ids == b[1].ids

    def test_round_half_up_leaves_empty_calibration(self):
        assert round_half_up(4.5) == 5
        with pytest.raises(ValidationError):
            split_calibration_test(self._data(5), 0.9, seed=0)

    def test_fraction_bounds(self):
        with pytest.raises(ValidationError):
            split_calibration_test(self._data(5), 1.0, seed=0)

    def test_partition_and_order(self):
        data = self._data(50)
        cal, test = split_calibration_test(data, 0.3, seed=3)
        ids = cal.ids + test.ids
        assert sorted(ids, key=int) == data.ids
        assert cal.ids == sorted(cal.ids, key=int)
        assert test.ids == sorted(test.ids, key=int)

    def test_different_seeds_differ(self):
        data = self._data(50)
        assert split_calibration_test(data, 0.2, 1)[1].ids != split_calibration_test(data, 0.2, 2)[1].ids


class TestSeededPermutation:
    @given(st.integers(0, 200), st.integers(0, 2**32))
    @settings(max_examples=50, deadline=None)
    def test_is_permutation(self, n, seed):
        perm = seeded_permutation(n, seed)
        np.testing.assert_array_equal(np.sort(perm), np.arange(n))

    def test_frozen_values(self):
        # Pins the raw-word shuffle so a platform or numpy change is noticed.
        assert seeded_permutation(10, 7).tolist() == [6, 3, 5, 8, 4, 7, 1, 0, 9, 2]

    def test_roughly_uniform_first_position(self):
        counts = np.bincount([seeded_permutation(4, s)[0] for s in range(4000)], minlength=4)
        # Each value has probability 1/4; 5 standard errors of slack.
        np.testing.assert_allclose(counts / 4000, 0.25, atol=5 * math.sqrt(0.25 * 0.75 / 4000))


class TestDataset:
    def test_take_with_repeats(self, four_point):
        sub = four_point.take([0, 0, 3])
        assert sub.ids == ["a@0", "a@1", "d@2"]
        np.testing.assert_array_equal(sub.scores, [5, 5, 1])

    def test_non_finite_score(self):
        with pytest.raises(ValidationError):
            Dataset.from_arrays([1.0, math.inf], [True, True])
