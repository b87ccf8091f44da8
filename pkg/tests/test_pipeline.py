"""
Tests for the optimizer, training loop, evaluation, fusion, gradient checks,
class visualization and configuration
"""

import argparse
import logging

import numpy as np
import pytest

from . import TEST_CONFIG_FILE, project_root, small_synthetic_spec  # noqa: F401

from autodiff.tensor import Tensor
from core.ablation import MODALITY_COMBOS, combo_accuracy, run_ablation, study_variants
from core.config import BackboneConfig, Config, EvalConfig, PRESETS, TrainConfig, apply_preset
from core.evaluator import (
    EvalResult, FusionSpec, ScoreDump, Stream, VideoResult, evaluate, fuse, fuse_scores, parse_stream_arg,
    parse_streams,
)
from core.exceptions import ConfigError, NumericalError, ShapeError
from core.gradcheck import at_max_tie, gradcheck
from core.models import ConsensusKind, Modality
from core.optim import SGD, lr_at, sgd_momentum_step
from core.trainer import METRICS_FILE, Trainer
from data.dataset import VideoDataset
from data.synthetic import SyntheticDataset
from network.backbone import BackboneSpec, build
from network.checkpoint import load_checkpoint
from visualization.class_visualizer import angle_between, dominant_direction, visualize_class

SMALL_BACKBONE = BackboneConfig(input_size=16, stages="4:3:2:1")


@pytest.fixture(scope="module")
def train_set():
    return SyntheticDataset(small_synthetic_spec(), seed=0, split="train")


@pytest.fixture(scope="module")
def test_set():
    return SyntheticDataset(small_synthetic_spec(), seed=0, split="test")


def small_train(**overrides):
    values = dict(modality="rgb", segments=3, batch_size=4, max_iterations=3, lr_steps=[2], log_interval=1)
    values.update(overrides)
    return TrainConfig(**values)


class TestOptimizer:
    def test_zero_momentum_is_plain_sgd(self):
        params = {"w": np.array([1.0, 2.0])}
        sgd_momentum_step(params, {"w": np.array([0.5, -1.0])}, {}, lr=0.1, momentum=0.0)
        np.testing.assert_allclose(params["w"], [0.95, 2.1])

    def test_two_steps_with_momentum(self):
        params, velocity = {"w": np.array([0.0])}, {}
        grad = {"w": np.array([1.0])}
        for _ in range(2):
            sgd_momentum_step(params, grad, velocity, lr=0.1, momentum=0.9)
        np.testing.assert_allclose(params["w"], [-0.1 * (2 + 0.9)])

    def test_weight_decay_adds_to_gradient(self):
        params = {"w": np.array([2.0])}
        sgd_momentum_step(params, {"w": np.array([0.0])}, {}, lr=0.5, momentum=0.0, weight_decay=0.1)
        np.testing.assert_allclose(params["w"], [1.9])

    def test_quadratic_converges(self):
        x = Tensor(np.array([5.0]), requires_grad=True)
        optimizer = SGD({"x": x}, momentum=0.9)
        for _ in range(300):
            optimizer.step(0.1, {"x": 2.0 * x.data})
        assert abs(x.data[0]) < 1e-3

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            sgd_momentum_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, {}, 0.1, 0.9)

    def test_momentum_range(self):
        with pytest.raises(ConfigError):
            SGD({}, momentum=1.0)

    def test_step_schedule(self):
        assert lr_at(0, 0.01, [300]) == 0.01
        assert lr_at(299, 0.01, [300]) == 0.01
        assert lr_at(300, 0.01, [300]) == pytest.approx(0.001)

    def test_temporal_preset_schedule(self):
        preset = PRESETS["full-temporal"]
        assert lr_at(11999, preset["lr"], preset["lr_steps"]) == pytest.approx(0.005)
        assert lr_at(12000, preset["lr"], preset["lr_steps"]) == pytest.approx(0.0005)
        assert lr_at(18000, preset["lr"], preset["lr_steps"]) == pytest.approx(0.00005)

    def test_negative_step(self):
        with pytest.raises(ConfigError):
            lr_at(-1, 0.01, [])


class TestTrainer:
    def test_batch_shape(self, train_set):
        trainer = Trainer(small_train(), train_set, SMALL_BACKBONE, workers=1)
        batch, labels = trainer.sample_batch(0)
        assert batch.shape == (4, 3, 3, 16, 16)
        assert len(labels) == 4

    def test_same_seed_same_run(self, train_set):
        first = Trainer(small_train(), train_set, SMALL_BACKBONE, workers=1).run(progress=False)
        second = Trainer(small_train(), train_set, SMALL_BACKBONE, workers=3).run(progress=False)
        assert first.losses == second.losses
        for name, value in first.model.state_dict().items():
            assert value.tobytes() == second.model.state_dict()[name].tobytes()

    def test_different_seed_differs(self, train_set):
        first = Trainer(small_train(max_iterations=1), train_set, SMALL_BACKBONE, workers=1).run(progress=False)
        second = Trainer(small_train(max_iterations=1, seed=1), train_set, SMALL_BACKBONE, workers=1).run(progress=False)
        assert first.losses != second.losses

    @pytest.mark.parametrize("steps", [3, pytest.param(50, marks=pytest.mark.slow)])
    def test_snippet_baseline_matches_single_segment(self, train_set, steps):
        tsn = Trainer(small_train(segments=1, max_iterations=steps), train_set, SMALL_BACKBONE,
                      workers=1).run(progress=False)
        baseline = Trainer(small_train(segments=1, max_iterations=steps, snippet_baseline=True), train_set,
                           SMALL_BACKBONE, workers=1).run(progress=False)
        assert len(tsn.losses) == steps
        assert tsn.losses == baseline.losses

    def test_single_snippet_batches_train(self, train_set):
        config = small_train(segments=1, batch_size=1, snippet_baseline=True)
        result = Trainer(config, train_set, SMALL_BACKBONE, workers=1).run(progress=False)
        assert len(result.losses) == 3
        assert np.all(np.isfinite(result.losses))

    def test_single_value_normalization_rejected_before_training(self, train_set):
        backbone = BackboneConfig(input_size=16, stages="4:3:2:1,4:3:2:1,4:3:1:0")
        with pytest.raises(ConfigError, match="bn3"):
            Trainer(small_train(segments=1, batch_size=1), train_set, backbone, workers=1)
        Trainer(small_train(segments=3, batch_size=1), train_set, backbone, workers=1)

    def test_metrics_written_while_training(self, train_set, tmp_path, caplog):
        trainer = Trainer(small_train(max_iterations=4), train_set, SMALL_BACKBONE, workers=1)
        step_once = trainer.train_step

        def fail_on_third(optimizer, step):
            if step == 2:
                raise NumericalError("non-finite loss")
            return step_once(optimizer, step)

        trainer.train_step = fail_on_third
        with caplog.at_level(logging.INFO, logger="core.trainer"):
            with pytest.raises(NumericalError):
                trainer.run(tmp_path / "ckpt", progress=False)
        rows = [line for line in (tmp_path / "ckpt" / METRICS_FILE).read_text().splitlines()
                if not line.startswith("#")]
        assert [row.split("\t")[0] for row in rows] == ["1", "2"]
        assert "step 2 lr" in caplog.text

    def test_schedule_in_metrics(self, train_set, tmp_path):
        result = Trainer(small_train(max_iterations=4), train_set, SMALL_BACKBONE, workers=1).run(
            tmp_path / "ckpt", progress=False)
        assert [row.lr for row in result.metrics] == pytest.approx([0.01, 0.01, 0.001, 0.001])
        text = (tmp_path / "ckpt" / METRICS_FILE).read_text()
        assert text.startswith("# tsn-desk ")
        assert "# step\tlr\tloss\ttrain_acc" in text
        checkpoint = load_checkpoint(tmp_path / "ckpt")
        assert checkpoint.modality == "rgb"
        assert checkpoint.metadata["segments"] == 3

    def test_cross_modality_with_partial_bn(self, train_set, tmp_path):
        rgb = Trainer(small_train(max_iterations=1), train_set, SMALL_BACKBONE, workers=1)
        rgb.run(tmp_path / "rgb", progress=False)

        config = small_train(modality="flow", snippet_length=3, init_from=str(tmp_path / "rgb"),
                             partial_bn=True, max_iterations=2)
        flow = Trainer(config, train_set, SMALL_BACKBONE, workers=1)
        assert flow.model.spec.input_channels == 6
        assert flow.model.freeze_flags() == [False]
        result = flow.run(progress=False)
        assert len(result.losses) == 2
        assert flow.metadata()["init_modality"] == "rgb"

    @pytest.mark.parametrize("steps", [2, pytest.param(100, marks=pytest.mark.slow)])
    def test_frozen_statistics_survive_training(self, train_set, tmp_path, steps):
        backbone = BackboneConfig(input_size=16, stages="4:3:2:1,6:3:1:0")
        Trainer(small_train(max_iterations=1), train_set, backbone, workers=1).run(tmp_path / "rgb", progress=False)
        source = load_checkpoint(tmp_path / "rgb").model
        config = small_train(modality="flow", snippet_length=3, init_from=str(tmp_path / "rgb"),
                             partial_bn=True, max_iterations=steps, lr_steps=[steps // 2])
        flow = Trainer(config, train_set, backbone, workers=1)
        flow.run(progress=False)
        after = flow.model.buffers()
        before = source.buffers()
        assert after["bn2.running_mean"].tobytes() == before["bn2.running_mean"].tobytes()
        assert after["bn2.running_var"].tobytes() == before["bn2.running_var"].tobytes()
        assert after["bn1.running_mean"].tobytes() != before["bn1.running_mean"].tobytes()

    def test_videos_too_short_for_segments(self, train_set):
        with pytest.raises(ConfigError):
            Trainer(small_train(modality="flow", snippet_length=5), train_set, SMALL_BACKBONE)

    def test_baseline_needs_single_segment(self, train_set):
        with pytest.raises(ConfigError):
            Trainer(small_train(snippet_baseline=True), train_set, SMALL_BACKBONE)


def constant_stream(name="spatial", bias=(0.0, 3.0, 1.0, 0.0), modality=Modality.RGB, snippet_length=1):
    channels = modality.channels(snippet_length)
    spec = BackboneSpec(input_channels=channels, input_size=16, stages=[], dropout_prob=0.0, num_classes=len(bias))
    model = build(spec, np.random.default_rng(0))
    model.head.weight.data[...] = 0.0
    model.head.bias.data[...] = bias
    return Stream(name, model, modality, snippet_length)


class FirstClips(VideoDataset):
    """The first ``count`` clips of another dataset"""

    def __init__(self, source: VideoDataset, count: int):
        self.source = source
        self.count = count
        self.num_classes = source.num_classes
        self.flow_bound = source.flow_bound

    def __len__(self):
        return self.count

    def clip(self, index):
        return self.source.clip(index)

    def labels(self):
        return self.source.labels()[:self.count]


class TestEvaluation:
    def test_constant_model(self, test_set):
        result = evaluate([constant_stream()], test_set, FusionSpec({"spatial": 1.0}),
                          test_snippets=2, ten_crop=False, workers=1, progress=False)
        assert [v.video_id for v in result.videos] == sorted(v.video_id for v in result.videos)
        assert all(v.prediction == 1 for v in result.videos)
        assert result.accuracy == pytest.approx(0.25)
        np.testing.assert_array_equal(result.videos[0].fused, [0.0, 3.0, 1.0, 0.0])

    def test_ten_crop_views(self, test_set):
        result = evaluate([constant_stream()], test_set, FusionSpec({"spatial": 1.0}),
                          test_snippets=1, ten_crop=True, workers=2, progress=False)
        np.testing.assert_allclose(result.videos[3].stream_scores["spatial"], [0.0, 3.0, 1.0, 0.0])

    def test_two_streams_fuse_before_softmax(self, test_set):
        streams = [constant_stream("spatial", (0.0, 3.0, 1.0, 0.0)), constant_stream("flow", (0.0, 0.0, 2.5, 0.0))]
        result = evaluate(streams, test_set, FusionSpec({"spatial": 1.0, "flow": 1.5}),
                          test_snippets=1, ten_crop=False, workers=1, progress=False)
        np.testing.assert_allclose(result.videos[0].fused, [0.0, 3.0, 4.75, 0.0])
        assert result.accuracy == pytest.approx(0.25)
        assert result.stream_accuracy("spatial") == pytest.approx(0.25)

    def test_class_count_mismatch(self, test_set):
        with pytest.raises(ConfigError):
            evaluate([constant_stream(bias=(0.0, 1.0, 0.0))], test_set, FusionSpec({"spatial": 1.0}),
                     test_snippets=1, ten_crop=False, progress=False)

    def test_missing_weight_and_duplicates(self, test_set):
        with pytest.raises(ConfigError):
            evaluate([constant_stream("flow")], test_set, FusionSpec({"spatial": 1.0}), progress=False)
        with pytest.raises(ConfigError):
            evaluate([constant_stream(), constant_stream()], test_set, FusionSpec({"spatial": 1.0}),
                     progress=False)

    def test_parse_stream_arg(self):
        assert parse_stream_arg("flow=runs/a:2.0") == ("flow", "runs/a", 2.0)
        assert parse_stream_arg("spatial=runs/b") == ("spatial", "runs/b", 1.0)
        assert parse_stream_arg("warped=c:/x") == ("warped", "c:/x", 0.5)
        with pytest.raises(ConfigError):
            parse_stream_arg("custom=runs/c")
        with pytest.raises(ConfigError):
            parse_stream_arg("runs/c")

    def test_parse_streams_default_weights(self):
        two = parse_streams(["spatial=a", "flow=b"])
        assert [weight for _, _, weight in two] == [1.0, 1.5]
        three = parse_streams(["spatial=a", "flow=b", "warped=c"])
        assert [weight for _, _, weight in three] == [1.0, 1.0, 0.5]
        explicit = parse_streams(["spatial=a", "flow=b:2.0", "warped=c"])
        assert [weight for _, _, weight in explicit] == [1.0, 2.0, 0.5]
        with pytest.raises(ConfigError):
            parse_streams(["flow=a", "flow=b"])

    def test_fusion_spec_validation(self):
        with pytest.raises(ConfigError):
            FusionSpec({})
        with pytest.raises(ConfigError):
            FusionSpec({"a": -1.0})
        with pytest.raises(ConfigError):
            FusionSpec({"a": 0.0})


@pytest.mark.slow
class TestFullProtocol:
    """25 positions x 10 crops on 100-frame videos, fused before softmax"""

    SPATIAL = (1.0, 0.0, 2.0, 0.0)
    FLOW = (0.0, 2.0, 0.0, 0.0)
    WARPED = (0.0, 0.0, 0.0, 4.0)

    @pytest.fixture(scope="class")
    def long_videos(self):
        return FirstClips(SyntheticDataset(small_synthetic_spec(frames_per_video=100), seed=0, split="test"), 3)

    def _streams(self):
        return [
            constant_stream("spatial", self.SPATIAL),
            constant_stream("flow", self.FLOW, Modality.FLOW, 5),
            constant_stream("warped", self.WARPED, Modality.WARPED_FLOW, 5),
        ]

    def test_positions_and_views(self, long_videos, monkeypatch):
        import core.evaluator as evaluator

        starts, views = {}, {}
        render = evaluator.build_snippet

        def recording_build(clip, modality, start, *args, **kwargs):
            starts.setdefault((modality, clip.video_id), []).append(start)
            return render(clip, modality, start, *args, **kwargs)

        monkeypatch.setattr(evaluator, "build_snippet", recording_build)
        streams = self._streams()
        for stream in streams:
            forward = stream.model.forward

            def counting_forward(batch, mode="train", name=stream.name, forward=forward):
                views[name] = views.get(name, 0) + len(batch)
                return forward(batch, mode)

            stream.model.forward = counting_forward

        evaluate(streams, long_videos, FusionSpec({"spatial": 1.0, "flow": 1.0, "warped": 0.5}),
                 test_snippets=25, ten_crop=True, workers=1, progress=False)
        assert views == {"spatial": 750, "flow": 750, "warped": 750}
        clip = long_videos.clip(0)
        assert starts[(Modality.RGB, clip.video_id)] == [int(np.floor((i + 0.5) * 100 / 25)) for i in range(25)]
        assert starts[(Modality.FLOW, clip.video_id)] == [int(np.floor((i + 0.5) * 95 / 25)) for i in range(25)]

    @pytest.mark.parametrize("weights,row", [
        ({"spatial": 1.0, "flow": 1.5}, "1.0\t3.0\t2.0\t0.0"),
        ({"spatial": 1.0, "flow": 1.0, "warped": 0.5}, "1.0\t2.0\t2.0\t2.0"),
    ])
    def test_fused_scores_file(self, long_videos, tmp_path, weights, row):
        streams = [s for s in self._streams() if s.name in weights]
        result = evaluate(streams, long_videos, FusionSpec(weights), test_snippets=25, ten_crop=True,
                          workers=2, progress=False)
        path = result.dump().write(tmp_path / "fused.tsv", ["protocol"])
        clips = sorted(long_videos, key=lambda c: c.video_id)
        expected = [f"{c.video_id}\t{c.label}\t{row}" for c in clips]
        body = [line for line in path.read_text().splitlines() if not line.startswith("#")]
        assert body == expected


class TestScoreFiles:
    """Fusion of hand-written score files"""

    def _dumps(self, tmp_path):
        spatial = ScoreDump(["v1", "v2", "v3"], [0, 1, 1], np.array([[2.0, 0.0], [0.0, 1.0], [1.0, 0.0]]))
        flow = ScoreDump(["v3", "v1", "v2"], [1, 0, 1], np.array([[0.0, 1.0], [0.0, 1.0], [1.0, 0.0]]))
        return (ScoreDump.read(spatial.write(tmp_path / "spatial.tsv", ["hand"])),
                ScoreDump.read(flow.write(tmp_path / "flow.tsv")))

    def test_weighted_fusion(self, tmp_path):
        spatial, flow = self._dumps(tmp_path)
        fused = fuse([spatial, flow], [1.0, 1.5])
        assert fused.video_ids == ["v1", "v2", "v3"]
        np.testing.assert_allclose(fused.scores, [[2.0, 1.5], [1.5, 1.0], [1.0, 1.5]])
        assert fused.accuracy == pytest.approx(2 / 3)
        assert spatial.accuracy == pytest.approx(2 / 3)
        assert flow.accuracy == pytest.approx(1 / 3)

    def test_weight_scale_invariance(self, tmp_path):
        spatial, flow = self._dumps(tmp_path)
        a = fuse([spatial, flow], [1.0, 1.5]).scores.argmax(axis=1)
        b = fuse([spatial, flow], [2.0, 3.0]).scores.argmax(axis=1)
        np.testing.assert_array_equal(a, b)

    def test_values_survive_text(self, tmp_path):
        dump = ScoreDump(["x"], [0], np.array([[0.1 + 0.2, -1e-17]]))
        restored = ScoreDump.read(dump.write(tmp_path / "s.tsv"))
        assert restored.scores.tobytes() == dump.scores.tobytes()

    def test_conflicting_videos(self, tmp_path):
        spatial, _ = self._dumps(tmp_path)
        other = ScoreDump(["v1", "v2", "v9"], [0, 1, 1], np.zeros((3, 2)))
        with pytest.raises(ConfigError):
            fuse([spatial, other], [1.0, 1.0])

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("# header\nv1\tnot-a-label\t0.5\n")
        with pytest.raises(ConfigError):
            ScoreDump.read(path)

    def test_fuse_scores_shape(self):
        with pytest.raises(ShapeError):
            fuse_scores([np.zeros(3), np.zeros(4)], [1.0, 1.0])


class TestGradcheck:
    @pytest.mark.parametrize("kind", [
        ConsensusKind.even_average(),
        ConsensusKind.weighted([1 / 6, 2 / 6, 3 / 6]),
    ], ids=["avg", "weighted"])
    def test_smooth_consensus_passes(self, kind):
        report = gradcheck(kind, segments=3, trials=1, seed=0)
        assert report.status == "PASS"
        assert report.max_error < 1e-5
        assert set(report.layers) == {"conv1", "bn1", "conv2", "bn2", "fc"}

    def test_max_consensus(self):
        report = gradcheck(ConsensusKind.maximum(), segments=3, trials=1, seed=0)
        assert report.status in ("PASS", "SKIPPED")
        assert report.status != "FAIL"

    def test_max_tie_is_skipped(self):
        snippet = np.random.default_rng(3).normal(size=(3, 6, 6))
        report = gradcheck(ConsensusKind.maximum(), trials=1, snippets=np.stack([snippet] * 3))
        assert report.status == "SKIPPED"
        assert report.skipped_trials == 1
        assert "SKIPPED" in report.to_lines()[0]

    def test_tie_detection(self):
        assert at_max_tie(np.array([[1.0, 2.0], [1.0, 0.0]]))
        assert not at_max_tie(np.array([[1.0, 2.0], [0.5, 0.0]]))
        assert not at_max_tie(np.array([[1.0, 2.0]]))


class TestVisualization:
    def _flow_model(self):
        spec = BackboneSpec(input_channels=4, input_size=8, stages=[], dropout_prob=0.0, num_classes=2)
        model = build(spec, np.random.default_rng(0))
        model.head.weight.data[...] = [[1.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 1.0]]
        model.head.bias.data[...] = 0.0
        return model

    def test_score_rises_monotonically(self):
        result = visualize_class(self._flow_model(), 0, iterations=20, step_size=0.05, blur_every=0)
        trace = np.array(result.scores)
        assert len(trace) == 21
        assert np.all(np.diff(trace) >= -1e-12)
        assert trace[-1] > trace[0]
        assert result.image.min() >= -0.5 and result.image.max() <= 0.5

    @pytest.mark.parametrize("class_index,angle", [(0, 0.0), (1, 90.0)])
    def test_dominant_direction_follows_class(self, class_index, angle):
        result = visualize_class(self._flow_model(), class_index, iterations=30, step_size=0.05, blur_every=0)
        assert angle_between(dominant_direction(result.image), angle) < 15.0

    def test_blur_keeps_range(self, tmp_path):
        result = visualize_class(self._flow_model(), 0, iterations=6, blur_every=2, blur_sigma=1.0)
        assert result.image.shape == (4, 8, 8)
        path = result.save(tmp_path / "vis.tsnt")
        assert path.with_suffix(".yaml").exists()

    def test_class_range(self):
        with pytest.raises(ConfigError):
            visualize_class(self._flow_model(), 2, iterations=1)

    def test_angle_between(self):
        assert angle_between(350.0, 10.0) == pytest.approx(20.0)
        assert angle_between(90.0, 270.0) == pytest.approx(180.0)


class TestConfig:
    def test_default_file(self):
        config = Config.load(str(TEST_CONFIG_FILE))
        assert config.train.segments == 3
        assert config.train.consensus == "avg"
        assert config.eval.fusion_weights == {"spatial": 1.0, "flow": 1.5, "warped": 0.5}
        assert config.eval.three_stream_weights == {"spatial": 1.0, "flow": 1.0, "warped": 0.5}
        assert config.backbone.stage_specs()[0].stride == 2

    def test_missing_file_gives_defaults(self, tmp_path):
        assert Config.load(str(tmp_path / "none.yaml")) == Config()

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("train:\n  segmnets: 3\n")
        with pytest.raises(ConfigError):
            Config.load(str(path))

    def test_preset_in_file(self, tmp_path):
        path = tmp_path / "preset.yaml"
        path.write_text("preset: full-temporal\ntrain:\n  modality: flow\n")
        config = Config.load(str(path))
        assert config.train.lr == 0.005
        assert config.train.lr_steps == [12000, 18000]
        assert config.train.modality == "flow"

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            apply_preset(TrainConfig(), "huge")

    def test_save_and_load(self, tmp_path):
        config = Config()
        config.train.consensus = "max"
        config.save(str(tmp_path / "c.yaml"))
        assert Config.load(str(tmp_path / "c.yaml")) == config

    def test_command_line_overrides(self):
        config = Config()
        args = argparse.Namespace(command="train", modality="flow", segments=5, iterations=7, lr=None,
                                  partial_bn=True, data_seed=3, no_ten_crop=True)
        config.update_from_args(args)
        assert config.train.modality == "flow"
        assert config.train.segments == 5
        assert config.train.max_iterations == 7
        assert config.train.lr == 0.01
        assert config.train.partial_bn
        assert config.data.seed == 3
        assert not config.eval.ten_crop

    def test_output_dir_override(self, tmp_path):
        config = Config()
        config.update_from_args(argparse.Namespace(command="ablate", output_dir=str(tmp_path)))
        assert config.get_output_path() == tmp_path

    def test_visualize_overrides_stay_in_their_section(self):
        config = Config()
        config.update_from_args(argparse.Namespace(command="visualize", iterations=9, seed=4))
        assert config.visualize.iterations == 9
        assert config.visualize.seed == 4
        assert config.train.max_iterations == 400
        assert config.train.seed == 0

    @pytest.mark.parametrize("overrides", [
        {"snippet_baseline": True},
        {"lr_steps": [300, 100]},
        {"consensus": "median"},
        {"modality": "depth"},
        {"dropout": 1.0},
    ])
    def test_validation(self, overrides):
        with pytest.raises(ConfigError):
            TrainConfig(**overrides).validate()


class TestAblationStudies:
    def test_consensus_variants(self):
        variants = study_variants("consensus")
        assert [v.name for v in variants] == ["K1-avg", "K3-avg", "K3-max", "K3-weighted"]
        weighted = variants[-1].overrides
        kind = ConsensusKind.parse(weighted["consensus"], weighted["segments"], weighted["consensus_weights"])
        np.testing.assert_allclose(kind.coefficients(3), [0.25, 0.5, 0.25])

    def test_modality_variants(self):
        variants = study_variants("modalities")
        assert [v.name for v in variants] == ["rgb", "rgbdiff", "flow", "warpedflow"]
        assert not variants[0].rgb_init
        assert all(v.rgb_init and v.overrides["partial_bn"] for v in variants[1:])

    def test_unknown_study(self):
        with pytest.raises(ConfigError):
            study_variants("resolution")

    def test_combo_accuracy(self):
        videos = [
            VideoResult("a", 0, {"rgb": np.array([1.0, 0.0]), "flow": np.array([0.0, 1.0])}, np.zeros(2)),
            VideoResult("b", 1, {"rgb": np.array([1.0, 0.0]), "flow": np.array([0.0, 1.0])}, np.zeros(2)),
        ]
        result = EvalResult(FusionSpec({"rgb": 1.0, "flow": 1.0}), videos)
        assert combo_accuracy(result, {"rgb": 1.0}) == pytest.approx(0.5)
        assert combo_accuracy(result, {"rgb": 1.0, "flow": 1.5}) == pytest.approx(0.5)
        assert combo_accuracy(result, {"flow": 1.0}) == pytest.approx(0.5)
        assert combo_accuracy(result, {"rgb": 1.0, "flow": 0.5}) == pytest.approx(0.5)
        assert combo_accuracy(EvalResult(result.fusion, videos[1:]), {"rgb": 1.0, "flow": 1.5}) == 1.0

    def test_modalities_study_reports_every_combination(self, tmp_path):
        spec_path = tmp_path / "spec.yaml"
        small_synthetic_spec().save(spec_path)
        config = Config()
        config.data.synthetic_spec = str(spec_path)
        config.backbone = SMALL_BACKBONE
        config.train = TrainConfig(segments=1, batch_size=2, max_iterations=1, lr_steps=[1])
        config.eval = EvalConfig(test_snippets=1, ten_crop=False)
        report = run_ablation("modalities", config, seeds=(0,), out_dir=tmp_path, workers=1)
        assert report.variants() == [name for name, _ in MODALITY_COMBOS]
        assert all(0.0 <= row.accuracy <= 1.0 for row in report.rows)
        assert (tmp_path / "ablation_modalities.tsv").exists()
