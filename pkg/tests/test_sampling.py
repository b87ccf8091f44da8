"""
Tests for segment partitioning and snippet selection
"""

import numpy as np
import pytest

from . import project_root  # noqa: F401

from core.exceptions import ConfigError, ShapeError
from preprocessing.sampling import partition_segments, sample_test, sample_train


class TestPartition:
    def test_even_split(self):
        assert partition_segments(9, 3).ranges == [(0, 3), (3, 6), (6, 9)]

    def test_uneven_split_covers_video(self):
        plan = partition_segments(10, 3)
        assert plan.ranges == [(0, 3), (3, 6), (6, 10)]
        assert sum(plan.lengths()) == 10
        assert max(plan.lengths()) - min(plan.lengths()) <= 1

    def test_single_segment(self):
        assert partition_segments(7, 1).ranges == [(0, 7)]

    def test_too_few_frames(self):
        with pytest.raises(ShapeError):
            partition_segments(2, 3)

    def test_zero_segments(self):
        with pytest.raises(ConfigError):
            partition_segments(10, 0)

    @pytest.mark.parametrize("largest", [120, pytest.param(1000, marks=pytest.mark.slow)])
    def test_exhaustive_sweep(self, largest):
        for num_frames in range(1, largest + 1):
            for num_segments in range(1, num_frames + 1):
                bounds = np.array(partition_segments(num_frames, num_segments).ranges)
                assert bounds[0, 0] == 0 and bounds[-1, 1] == num_frames
                assert np.array_equal(bounds[1:, 0], bounds[:-1, 1])
                lengths = bounds[:, 1] - bounds[:, 0]
                assert lengths.min() >= 1 and lengths.max() - lengths.min() <= 1


class TestSampleTrain:
    def test_starts_stay_inside_segments(self):
        rng = np.random.default_rng(0)
        plan = partition_segments(23, 3)
        for _ in range(200):
            starts = sample_train(plan, 5, rng)
            for (begin, end), start in zip(plan.ranges, starts):
                assert begin <= start <= end - 5

    def test_every_start_is_reachable(self):
        rng = np.random.default_rng(1)
        plan = partition_segments(12, 3)
        seen = {tuple(sample_train(plan, 1, rng)) for _ in range(500)}
        firsts = {s[0] for s in seen}
        assert firsts == {0, 1, 2, 3}

    def test_deterministic_given_seed(self):
        plan = partition_segments(30, 3)
        a = sample_train(plan, 5, np.random.default_rng(7))
        b = sample_train(plan, 5, np.random.default_rng(7))
        assert a == b

    def test_segment_shorter_than_snippet(self):
        with pytest.raises(ShapeError):
            sample_train(partition_segments(9, 3), 5, np.random.default_rng(0))


class TestSampleTest:
    def test_hundred_frames(self):
        starts = sample_test(100, 25, 1)
        assert len(starts) == 25
        assert starts == [int(np.floor((i + 0.5) * 100 / 25)) for i in range(25)]
        assert starts[0] == 2 and starts[-1] == 98

    def test_snippet_length_shrinks_span(self):
        starts = sample_test(99, 25, 5)
        assert max(starts) + 5 <= 99
        assert starts == [((2 * i + 1) * 95) // 50 for i in range(25)]

    def test_more_snippets_than_frames(self):
        starts = sample_test(10, 25, 1)
        assert len(starts) == 25
        assert starts == sorted(starts)
        assert 0 <= min(starts) and max(starts) <= 9

    def test_video_shorter_than_snippet(self):
        with pytest.raises(ShapeError):
            sample_test(3, 25, 5)

    def test_monotone_and_repeatable(self):
        for num_frames in range(5, 200):
            for count in (1, 3, 25):
                for length in (1, 5):
                    starts = sample_test(num_frames, count, length)
                    assert all(a <= b for a, b in zip(starts, starts[1:]))
                    assert starts == sample_test(num_frames, count, length)
