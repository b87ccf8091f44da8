"""
Tests for flow discretization, RGB differences and snippet construction
"""

import numpy as np
import pytest

from . import project_root  # noqa: F401

from core.exceptions import ConfigError, ShapeError
from core.models import FlowField, Homography, Modality, VideoClip
from preprocessing.modality import (
    build_snippet, discretize_flow, flow_stack, rgb_diff_stack, rgb_diff_to_bytes, undiscretize_flow,
)

HEIGHT, WIDTH = 8, 10


def _clip(num_frames=8, flow_value=(1.5, -0.5), with_camera=True):
    def frame(t):
        return np.full((3, HEIGHT, WIDTH), 10.0 * t)

    def flow(t):
        return FlowField(np.full((HEIGHT, WIDTH), flow_value[0]), np.full((HEIGHT, WIDTH), flow_value[1]))

    camera = [Homography.translation(*flow_value)] * (num_frames - 1) if with_camera else None
    return VideoClip("clip_0", 0, num_frames, frame, flow, camera)


class TestFlowDiscretization:
    def test_endpoints_and_zero(self):
        field = FlowField(np.array([[-20.0, 0.0, 20.0]]), np.array([[-50.0, 0.0, 50.0]]))
        u, v = discretize_flow(field, 20.0)
        assert u.dtype == np.uint8
        assert u.tolist() == [[0, 128, 255]]
        assert v.tolist() == [[0, 128, 255]]

    def test_round_trip_error_bounded(self):
        values = np.random.default_rng(0).uniform(-20.0, 20.0, size=(100, 100))
        u, _ = discretize_flow(FlowField(values, values), 20.0)
        error = np.abs(undiscretize_flow(u, 20.0) - values)
        assert error.max() <= 20.0 / 255.0 + 1e-12

    def test_monotone_and_saturating(self):
        values = np.linspace(-60.0, 60.0, 4801)[None]
        u, v = discretize_flow(FlowField(values, -values), 20.0)
        assert np.all(np.diff(u[0].astype(int)) >= 0)
        assert np.all(np.diff(v[0].astype(int)) <= 0)
        assert np.all(u[values <= -20.0] == 0) and np.all(u[values >= 20.0] == 255)

    def test_bound_must_be_positive(self):
        with pytest.raises(ConfigError):
            discretize_flow(FlowField.zeros(2, 2), 0.0)


class TestRgbDiff:
    def test_stacked_differences(self):
        frames = [np.full((3, 2, 2), value) for value in (5.0, 8.0, 4.0)]
        stack = rgb_diff_stack(frames)
        assert stack.shape == (6, 2, 2)
        np.testing.assert_array_equal(stack[:3], 3.0)
        np.testing.assert_array_equal(stack[3:], -4.0)

    def test_needs_two_frames(self):
        with pytest.raises(ShapeError):
            rgb_diff_stack([np.zeros((3, 2, 2))])

    def test_byte_export_clamps(self):
        np.testing.assert_array_equal(rgb_diff_to_bytes(np.array([-300.0, 0.0, 300.0])), [0.0, 128.0, 255.0])


class TestFlowStack:
    def test_channel_order(self):
        flows = [FlowField(np.full((2, 2), 20.0), np.full((2, 2), -20.0)), FlowField.zeros(2, 2)]
        stack = flow_stack(flows)
        assert stack.shape == (4, 2, 2)
        assert [int(stack[c, 0, 0]) for c in range(4)] == [255, 0, 128, 128]

    def test_warped_with_known_camera_cancels(self):
        flow = FlowField(np.full((4, 4), 3.0), np.full((4, 4), -2.0))
        stack = flow_stack([flow], warped=True, homographies=[Homography.translation(3.0, -2.0)])
        np.testing.assert_array_equal(stack, 128)

    def test_homography_count_mismatch(self):
        with pytest.raises(ShapeError):
            flow_stack([FlowField.zeros(2, 2)] * 2, warped=True, homographies=[Homography.identity()])

    def test_estimation_needs_rng(self):
        with pytest.raises(ConfigError):
            flow_stack([FlowField.zeros(40, 40)], warped=True)


class TestBuildSnippet:
    @pytest.mark.parametrize("modality,length,channels", [
        (Modality.RGB, 1, 3),
        (Modality.RGB_DIFF, 5, 15),
        (Modality.FLOW, 5, 10),
        (Modality.WARPED_FLOW, 5, 10),
    ])
    def test_shapes(self, modality, length, channels):
        snippet = build_snippet(_clip(), modality, 1, length)
        assert snippet.shape == (channels, HEIGHT, WIDTH)
        assert modality.channels(length) == channels

    def test_rgb_normalization(self):
        snippet = build_snippet(_clip(), Modality.RGB, 2, 1)
        np.testing.assert_allclose(snippet, 20.0 / 255.0 - 0.5)

    def test_rgb_diff_values(self):
        snippet = build_snippet(_clip(), Modality.RGB_DIFF, 0, 2)
        np.testing.assert_allclose(snippet, 10.0 / 255.0)

    def test_warped_flow_uses_camera_metadata(self):
        snippet = build_snippet(_clip(), Modality.WARPED_FLOW, 0, 3)
        np.testing.assert_allclose(snippet, 128.0 / 255.0 - 0.5)

    def test_unknown_homography_source(self):
        with pytest.raises(ConfigError):
            build_snippet(_clip(), Modality.FLOW, 0, 1, homography_source="guess")

    def test_snippet_past_the_end(self):
        with pytest.raises(IndexError):
            build_snippet(_clip(num_frames=4), Modality.FLOW, 2, 3)


class TestModalityKind:
    def test_parse(self):
        assert Modality.parse("WarpedFlow") is Modality.WARPED_FLOW
        with pytest.raises(ConfigError):
            Modality.parse("depth")

    def test_units(self):
        assert Modality.RGB.units(24) == 24
        assert Modality.FLOW.units(24) == 23
