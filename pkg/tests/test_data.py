"""
Tests for split lists, the tensor file format and the synthetic video generator
"""

import numpy as np
import pytest

from . import project_root, small_synthetic_spec  # noqa: F401

from core.config import DataConfig
from core.exceptions import ConfigError, GenerationError, SplitFormatError, TensorFormatError
from core.models import Homography
from data.dataset import DirectoryDataset, read_camera, read_meta, write_camera
from data.sources import open_dataset
from data.splits import SplitEntry, SplitList, check_disjoint, load_split, write_split
from data.synthetic import StagePrimitive, SyntheticDataset, SyntheticSpec, generate
from data.tensor_io import VERSION_U8, decode_tensor, encode_tensor, read_tensor, write_tensor


def tiny_spec(**overrides):
    values = dict(height=48, width=64, actor_size=8, frames_per_video=6,
                  train_videos_per_class=1, test_videos_per_class=1)
    values.update(overrides)
    return small_synthetic_spec(**values)


class TestSplits:
    def test_load_with_comments(self, tmp_path):
        path = tmp_path / "train.txt"
        path.write_text("# header\n\nvideos/a 0\nvideos/b 2\n")
        split = load_split(path, num_classes=3)
        assert split.paths() == ["videos/a", "videos/b"]
        assert split.labels() == [0, 2]

    @pytest.mark.parametrize("line,reason", [
        ("videos/a", "expected"),
        ("videos/a zero", "integer"),
        ("videos/a 5", "class range"),
    ])
    def test_malformed_lines(self, tmp_path, line, reason):
        path = tmp_path / "bad.txt"
        path.write_text(f"videos/ok 1\n{line}\n")
        with pytest.raises(SplitFormatError, match=reason) as info:
            load_split(path, num_classes=3)
        assert info.value.line_number == 2

    def test_write_then_load(self, tmp_path):
        split = SplitList([SplitEntry("x", 1), SplitEntry("y", 0)])
        path = write_split(tmp_path / "s.txt", split, header="tsn-desk seed=3")
        assert path.read_text().startswith("# tsn-desk seed=3\n")
        assert load_split(path).entries == split.entries

    def test_disjoint(self):
        train = SplitList([SplitEntry("a", 0), SplitEntry("b", 1)])
        check_disjoint(train, SplitList([SplitEntry("c", 0)]))
        with pytest.raises(ConfigError):
            check_disjoint(train, SplitList([SplitEntry("b", 1)]))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_split(tmp_path / "none.txt")


class TestTensorFormat:
    def test_float_values_survive(self):
        array = np.array([[0.5, -1.25], [3.0, 1e-3]])
        np.testing.assert_allclose(decode_tensor(encode_tensor(array)), array, rtol=1e-7)

    def test_header_layout(self):
        data = encode_tensor(np.zeros((2, 3)), VERSION_U8)
        assert data[:4] == b"TSNT"
        assert data[4] == VERSION_U8 and data[5] == 2
        assert len(data) == 6 + 8 + 6

    @pytest.mark.parametrize("values", [[256.0], [-1.0], [1.5]])
    def test_u8_range(self, values):
        with pytest.raises(TensorFormatError) as info:
            encode_tensor(np.array(values), VERSION_U8)
        assert info.value.field == "payload"

    @pytest.mark.parametrize("mutate,field", [
        (lambda b: b"XXXX" + b[4:], "magic"),
        (lambda b: b[:4] + bytes([9]) + b[5:], "version"),
        (lambda b: b[:-1], "payload"),
        (lambda b: b[:3], "header"),
        (lambda b: b[:8], "dims"),
    ])
    def test_malformed(self, mutate, field):
        good = encode_tensor(np.ones((2, 2)))
        with pytest.raises(TensorFormatError) as info:
            decode_tensor(mutate(good))
        assert info.value.field == field

    def test_file_round_trip(self, tmp_path):
        path = write_tensor(tmp_path / "t" / "x.tsnt", np.arange(6).reshape(2, 3), VERSION_U8)
        np.testing.assert_array_equal(read_tensor(path), np.arange(6).reshape(2, 3))
        assert not path.with_name("x.tsnt.tmp").exists()

    def test_read_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_tensor(tmp_path / "missing.tsnt")


class TestSyntheticSpec:
    def test_default_has_order_pairs(self):
        spec = SyntheticSpec()
        spec.validate()
        assert (0, 1) in spec.order_pairs()

    def test_needs_order_pair(self):
        spec = SyntheticSpec(classes={"a": [StagePrimitive("right")], "b": [StagePrimitive("left")]})
        with pytest.raises(ConfigError):
            spec.validate()

    def test_unknown_direction(self):
        with pytest.raises(ConfigError):
            StagePrimitive("sideways")

    def test_velocity(self):
        assert StagePrimitive("up", 3.0).velocity() == (0.0, -3.0)
        assert StagePrimitive("right").velocity() == (2.0, 0.0)

    def test_yaml_round_trip(self, tmp_path):
        spec = small_synthetic_spec(camera_scale=0.01)
        spec.save(tmp_path / "s.yaml")
        assert SyntheticSpec.load(tmp_path / "s.yaml") == spec

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            SyntheticSpec.from_dict({"frames": 3})


class TestSyntheticVideo:
    def test_actor_flow_is_stage_velocity(self):
        video = SyntheticDataset(small_synthetic_spec(), seed=0).video(0)
        flow = video.flow(0)
        mask = video.actor_mask(0)
        np.testing.assert_array_equal(flow.u[mask], 2.0)
        np.testing.assert_array_equal(flow.v[mask], 0.0)
        camera = video.camera[0].displacement_field(256, 340)
        np.testing.assert_array_equal(flow.u[~mask], camera.u[~mask])
        np.testing.assert_array_equal(flow.v[~mask], camera.v[~mask])

    def test_stage_displacement_integrates(self):
        video = SyntheticDataset(small_synthetic_spec(), seed=0).video(0)
        assert video.stage_of_pair == [0] * 6 + [1] * 5
        np.testing.assert_array_equal(video.positions[-1] - video.positions[0], [12.0, -10.0])

    def test_actor_pixels_move_with_flow(self):
        video = SyntheticDataset(small_synthetic_spec(), seed=1).video(0)
        left, top = video.positions[0].astype(int)
        size = video.spec.actor_size
        first = video.frame(0)[:, top:top + size, left:left + size]
        second = video.frame(1)[:, top:top + size, left + 2:left + 2 + size]
        np.testing.assert_array_equal(first, second)

    def test_static_scene_has_zero_flow(self):
        still = {
            "a": [StagePrimitive("right", 0.0), StagePrimitive("up", 0.0)],
            "b": [StagePrimitive("up", 0.0), StagePrimitive("right", 0.0)],
        }
        video = SyntheticDataset(tiny_spec(classes=still, camera_translation=0.0), seed=0).video(0)
        for t in range(video.spec.frames_per_video - 1):
            flow = video.flow(t)
            assert not flow.u.any() and not flow.v.any()
        np.testing.assert_array_equal(video.frame(0), video.frame(3))

    def test_frames_are_bytes(self):
        frame = SyntheticDataset(tiny_spec(), seed=2).clip(0).frame(0)
        assert frame.shape == (3, 48, 64)
        assert frame.min() >= 0 and frame.max() <= 255
        np.testing.assert_array_equal(frame, np.round(frame))

    def test_same_seed_same_video(self):
        a = SyntheticDataset(tiny_spec(), seed=5).clip(1)
        b = SyntheticDataset(tiny_spec(), seed=5).clip(1)
        c = SyntheticDataset(tiny_spec(), seed=6).clip(1)
        assert a.frame(2).tobytes() == b.frame(2).tobytes()
        assert a.frame(2).tobytes() != c.frame(2).tobytes()

    def test_actor_leaving_frame(self):
        spec = tiny_spec(height=64, width=64, actor_size=60, frames_per_video=12, camera_translation=0.0)
        with pytest.raises(GenerationError):
            SyntheticDataset(spec, seed=0).video(0)

    def test_splits_are_disjoint(self):
        spec = small_synthetic_spec()
        train = SyntheticDataset(spec, 0, "train")
        test = SyntheticDataset(spec, 0, "test")
        assert len(train) == 12 and len(test) == 8
        check_disjoint(train.split_list(), test.split_list())
        assert train.labels() == [0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3]


class TestGenerate:
    def test_layout_and_reader(self, tmp_path):
        spec = tiny_spec()
        root = generate(spec, seed=4, out_dir=tmp_path / "data", workers=2)
        meta = read_meta(root / "meta.txt")
        assert meta["seed"] == "4" and meta["num_classes"] == "4"
        assert (root / "splits" / "train.txt").read_text().startswith("# tsn-desk ")
        assert (root / "videos" / "train_00000" / "frame_00005.tsnt").exists()
        assert (root / "flow" / "train_00000" / "flow_00004.tsnt").exists()
        assert not (root / "flow" / "train_00000" / "flow_00005.tsnt").exists()
        assert SyntheticSpec.load(root / "synthetic.yaml") == spec

        on_disk = DirectoryDataset(root, "test")
        in_memory = SyntheticDataset(spec, 4, "test")
        assert on_disk.labels() == in_memory.labels()
        disk_clip, memory_clip = on_disk.clip(3), in_memory.clip(3)
        np.testing.assert_array_equal(disk_clip.frame(2), memory_clip.frame(2))
        np.testing.assert_allclose(disk_clip.flow(1).u, memory_clip.flow(1).u, rtol=1e-6, atol=1e-6)
        np.testing.assert_allclose(disk_clip.camera[1].matrix, memory_clip.camera[1].matrix)

    def test_open_dataset_prefers_directory(self, tmp_path):
        root = generate(tiny_spec(), seed=0, out_dir=tmp_path, workers=1)
        assert isinstance(open_dataset(DataConfig(root=str(root)), "train"), DirectoryDataset)
        assert isinstance(open_dataset(DataConfig(), "train", tiny_spec()), SyntheticDataset)

    def test_missing_meta(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            DirectoryDataset(tmp_path)

    def test_camera_file(self, tmp_path):
        homographies = [Homography.translation(0.1, -0.3), Homography(np.diag([1.01, 0.99, 1.0]))]
        restored = read_camera(write_camera(tmp_path / "camera.txt", homographies))
        for original, loaded in zip(homographies, restored):
            assert original.matrix.tobytes() == loaded.matrix.tobytes()
