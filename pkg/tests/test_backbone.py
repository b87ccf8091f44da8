"""
Tests for the desk backbone, cross-modality initialization, partial BN and checkpoints
"""

import numpy as np
import pytest

from . import project_root  # noqa: F401

from autodiff.tensor import no_grad
from core.exceptions import ConfigError, ShapeError
from network.backbone import (
    BackboneSpec, StageSpec, build, cross_modality_init, load_model, set_partial_bn,
)
from network.checkpoint import load_checkpoint, save_checkpoint


def _model(seed=0, **overrides):
    return build(BackboneSpec(**overrides), np.random.default_rng(seed))


class TestBackboneSpec:
    """Architecture description and its text form"""

    def test_desk_spatial_sizes(self):
        assert BackboneSpec().spatial_sizes() == [16, 8, 8]

    def test_collapse_is_rejected(self):
        with pytest.raises(ConfigError):
            BackboneSpec(input_size=4).validate()

    def test_single_class_rejected(self):
        with pytest.raises(ConfigError):
            BackboneSpec(num_classes=1).validate()

    def test_text_round_trip(self):
        spec = BackboneSpec(input_channels=10, input_size=32, dropout_prob=0.7, num_classes=5,
                            stages=[StageSpec(8, 3, 2, True), StageSpec(12, 5, 1, False)])
        assert BackboneSpec.from_text(spec.to_text()) == spec

    def test_stage_decode_error(self):
        with pytest.raises(ConfigError):
            StageSpec.decode("16:3")


class TestBackboneModel:
    """Forward pass, parameters and state"""

    def test_forward_shape(self):
        model = _model(num_classes=4)
        x = np.random.default_rng(1).normal(size=(3, 3, 64, 64))
        assert model.forward(x, "train").shape == (3, 4)
        assert model.forward(x, "eval").shape == (3, 4)

    def test_wrong_input_shape(self):
        with pytest.raises(ShapeError):
            _model().forward(np.zeros((2, 3, 32, 32)), "eval")

    def test_parameter_names(self):
        names = set(_model().parameters())
        assert {"conv1.weight", "bn1.gamma", "bn1.beta", "conv3.weight", "fc.weight", "fc.bias"} <= names
        assert set(_model().buffers()) == {
            f"bn{i}.{kind}" for i in (1, 2, 3) for kind in ("running_mean", "running_var")
        }

    def test_same_seed_same_weights(self):
        a, b = _model(seed=3), _model(seed=3)
        for name, value in a.state_dict().items():
            assert value.tobytes() == b.state_dict()[name].tobytes()

    def test_eval_is_deterministic(self):
        model = _model()
        x = np.random.default_rng(2).normal(size=(2, 3, 64, 64))
        with no_grad():
            first = model.forward(x, "eval").data
            second = model.forward(x, "eval").data
        assert first.tobytes() == second.tobytes()

    def test_eval_leaves_running_stats(self):
        model = _model()
        before = {k: v.copy() for k, v in model.buffers().items()}
        model.forward(np.ones((2, 3, 64, 64)), "eval")
        for name, value in model.buffers().items():
            assert value.tobytes() == before[name].tobytes()

    def test_state_dict_round_trip(self):
        source = _model(seed=1)
        target = load_model(source.spec, source.state_dict(), seed=9)
        for name, value in source.state_dict().items():
            assert value.tobytes() == target.state_dict()[name].tobytes()

    def test_load_state_dict_missing_entry(self):
        state = _model().state_dict()
        del state["fc.bias"]
        with pytest.raises(ConfigError):
            _model().load_state_dict(state)

    def test_linear_head_without_stages(self):
        model = _model(stages=[], num_classes=3)
        assert model.forward(np.zeros((1, 3, 64, 64)), "eval").shape == (1, 3)


class TestCrossModality:
    """RGB to motion initialization and partial BN"""

    @pytest.mark.parametrize("snippet_length", [1, 3, 5])
    def test_first_layer_response_ratio(self, snippet_length):
        source = _model(seed=4)
        channels = 2 * snippet_length
        target = cross_modality_init(source, channels)
        constant = 0.37
        with no_grad():
            rgb = source.stem(np.full((1, 3, 64, 64), constant)).data
            motion = target.stem(np.full((1, channels, 64, 64), constant)).data
        np.testing.assert_allclose(motion, rgb * channels / 3.0, rtol=1e-9, atol=1e-12)

    def test_other_layers_copied(self):
        source = _model(seed=5)
        source.bns[1].running_mean[...] = 0.25
        target = cross_modality_init(source, 10)
        assert target.spec.input_channels == 10
        assert target.convs[1].weight.data.tobytes() == source.convs[1].weight.data.tobytes()
        assert target.bns[1].running_mean.tobytes() == source.bns[1].running_mean.tobytes()
        assert target.head.weight.data.tobytes() == source.head.weight.data.tobytes()

    def test_source_untouched(self):
        source = _model(seed=6)
        before = source.convs[0].weight.data.copy()
        cross_modality_init(source, 10)
        assert source.convs[0].weight.data.tobytes() == before.tobytes()

    def test_needs_rgb_source(self):
        flow_model = _model(input_channels=10)
        with pytest.raises(ConfigError):
            cross_modality_init(flow_model, 6)

    def test_partial_bn_flags(self):
        model = _model()
        set_partial_bn(model, True)
        assert model.freeze_flags() == [False, True, True]
        set_partial_bn(model, False)
        assert model.freeze_flags() == [False, False, False]

    def test_partial_bn_needs_bn_layers(self):
        with pytest.raises(ConfigError):
            set_partial_bn(_model(stages=[]), True)

    def test_frozen_layers_keep_stats_in_train_mode(self):
        model = _model(seed=7)
        set_partial_bn(model, True)
        before = {k: v.copy() for k, v in model.buffers().items()}
        model.forward(np.random.default_rng(0).normal(size=(4, 3, 64, 64)), "train")
        after = model.buffers()
        assert after["bn1.running_mean"].tobytes() != before["bn1.running_mean"].tobytes()
        for name in ("bn2.running_mean", "bn2.running_var", "bn3.running_mean", "bn3.running_var"):
            assert after[name].tobytes() == before[name].tobytes()


class TestCheckpoint:
    """Checkpoint directories"""

    def test_save_and_load(self, tmp_path):
        model = _model(seed=8, num_classes=5)
        set_partial_bn(model, True)
        save_checkpoint(tmp_path / "ckpt", model, {"modality": "flow", "seed": 8})
        loaded = load_checkpoint(tmp_path / "ckpt")
        assert loaded.modality == "flow"
        assert loaded.model.spec == model.spec
        assert loaded.model.freeze_flags() == [False, True, True]
        for name, value in model.state_dict().items():
            np.testing.assert_allclose(loaded.model.state_dict()[name], value, rtol=1e-6, atol=1e-7)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / "nothing")
