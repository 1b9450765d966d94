import pytest
import torch

from src.backbones.depth import (
    BufferDepthPredictor,
    ChannelMeanDepth,
    MidasDepthPredictor,
    minmax_normalise,
    predict_depth,
)
from src.backbones.encoders import LinearTestEncoder, TinyEncoder, Vgg16Encoder, backbone_checksum, encode_features
from src.backbones.services import get_depth_predictor, get_encoder, load_backbones
from src.config import Config
from src.core.exceptions import ConfigurationError, DomainError
from src.core.storage import LocalArtifactStore, read_image
from src.imaging.schemas import ColourSpace, ImageTensor
from src.render_sim.pipeline import render_sequence, save_sequence
from src.render_sim.raster import random_scene
from src.render_sim.schemas import InjectionMode, PostEffectStack


class TestTinyEncoder:
    """Test the fixed-seed substitute encoder."""

    def test_tap_shapes(self, tiny_encoder, generator):
        features = tiny_encoder(torch.rand(2, 3, 16, 20, generator=generator))
        assert features["relu1"].shape == (2, 8, 16, 20)
        assert features["relu2"].shape == (2, 16, 8, 10)

    def test_same_seed_same_weights(self):
        assert backbone_checksum(TinyEncoder(seed=3)) == backbone_checksum(TinyEncoder(seed=3))

    def test_different_seed_different_weights(self):
        assert backbone_checksum(TinyEncoder(seed=0)) != backbone_checksum(TinyEncoder(seed=1))

    def test_frozen_but_differentiable(self, tiny_encoder, generator):
        """Parameters never need gradients; the input still receives them."""
        assert not any(p.requires_grad for p in tiny_encoder.parameters())
        x = torch.rand(1, 3, 8, 8, generator=generator, requires_grad=True)
        tiny_encoder(x)["relu2"].sum().backward()
        assert x.grad is not None
        assert float(x.grad.abs().sum()) > 0

    def test_stays_in_eval_mode(self):
        encoder = TinyEncoder()
        encoder.train()
        assert not encoder.training

    def test_unknown_layer(self, tiny_encoder):
        with pytest.raises(ConfigurationError):
            tiny_encoder(torch.zeros(1, 3, 8, 8), ["relu9"])

    def test_checksum_unchanged_by_use(self, generator):
        encoder = TinyEncoder()
        before = backbone_checksum(encoder)
        x = torch.rand(1, 3, 8, 8, generator=generator, requires_grad=True)
        encoder(x)["relu1"].pow(2).sum().backward()
        assert backbone_checksum(encoder) == before

    def test_encode_features(self, tiny_encoder, make_image):
        features = encode_features(tiny_encoder, make_image(8, 8), ["relu1"])
        assert list(features) == ["relu1"]
        assert features["relu1"].colour_space == ColourSpace.FEATURE
        assert features["relu1"].shape == (8, 8, 8)


class TestLinearEncoder:
    """Test the closed-form test encoder."""

    def test_features_are_linear_in_pixels(self, generator):
        weight = torch.tensor([[0.5, 0.25, 0.25], [1.0, -1.0, 0.0]])
        encoder = LinearTestEncoder(weight)
        x = torch.rand(1, 3, 4, 5, generator=generator)
        features = encoder(x)["linear"]
        assert features.shape == (1, 2, 4, 5)
        assert torch.allclose(features[0, 1], x[0, 0] - x[0, 1])

    def test_bad_weight_shape(self):
        with pytest.raises(DomainError):
            LinearTestEncoder(torch.ones(2, 4))


class TestVgg16Encoder:
    """Test VGG-16 weight handling."""

    def test_missing_weights_name_the_substitute(self, tmp_path):
        with pytest.raises(ConfigurationError) as exc_info:
            Vgg16Encoder(weights_path=tmp_path / "missing.pth")
        assert exc_info.value.details["substitute"] == "tiny"

    def test_tap_table_at_training_resolution(self):
        encoder = Vgg16Encoder(load_weights=False)
        with torch.no_grad():
            features = encoder(torch.rand(1, 3, 360, 360, generator=torch.Generator().manual_seed(0)))
        for name, (channels, stride) in Vgg16Encoder.channel_table.items():
            assert features[name].shape == (1, channels, 360 // stride, 360 // stride), name
        assert features["relu4_3"].shape == (1, 512, 45, 45)


class TestDepthPredictors:
    """Test depth predictors and normalisation."""

    def test_minmax_normalise(self):
        batch = torch.tensor([[[[2.0, 4.0], [6.0, 10.0]]], [[[3.0, 3.0], [3.0, 3.0]]]])
        out = minmax_normalise(batch)
        assert torch.allclose(out[0, 0], torch.tensor([[0.0, 0.25], [0.5, 1.0]]))
        assert torch.equal(out[1], torch.full((1, 2, 2), 0.5))

    def test_channel_mean(self, depth_stub, generator):
        x = torch.rand(2, 3, 5, 5, generator=generator)
        assert torch.allclose(depth_stub(x), x.mean(dim=1, keepdim=True))

    def test_buffer_lookup(self, make_image):
        colour = make_image(4, 4, seed=5)
        depth = ImageTensor(data=torch.linspace(0.2, 0.8, 16).view(1, 4, 4), colour_space=ColourSpace.LUMINANCE)
        predictor = BufferDepthPredictor()
        predictor.register(colour, depth)
        predicted = predict_depth(predictor, colour)
        assert float(predicted.data.min()) == pytest.approx(0.0)
        assert float(predicted.data.max()) == pytest.approx(1.0)

    def test_buffer_missing(self, make_image):
        with pytest.raises(DomainError):
            BufferDepthPredictor()(make_image(4, 4).batch())

    def test_buffer_is_exactly_the_normalised_depth(self, make_image):
        colour = make_image(5, 6, seed=7)
        values = torch.rand(1, 5, 6, generator=torch.Generator().manual_seed(8)) * 0.5 + 0.25
        predictor = BufferDepthPredictor()
        predictor.register(colour, ImageTensor(data=values, colour_space=ColourSpace.LUMINANCE))
        expected = (values - values.min()) / (values.max() - values.min())
        assert torch.equal(predict_depth(predictor, colour).data, expected)

    def test_buffer_from_simulate_run(self, tmp_path, monkeypatch):
        scene = random_scene(2, height=24, width=24, frame_count=3)
        save_sequence(LocalArtifactStore(tmp_path / "sim"),
                      render_sequence(scene, PostEffectStack(), InjectionMode.NONE))
        monkeypatch.setattr(Config, "GBUFFER_DIR", str(tmp_path / "sim"))
        predictor = get_depth_predictor("gbuffer")
        assert isinstance(predictor, BufferDepthPredictor)
        for t in range(3):
            colour = read_image(tmp_path / "sim" / "colour" / f"frame_{t:04d}.png")
            depth = read_image(tmp_path / "sim" / "depth" / f"depth_{t:04d}.png").data[:1]
            assert torch.equal(predictor(colour.batch())[0], minmax_normalise(depth.unsqueeze(0))[0])

    def test_gbuffer_backend_needs_a_directory(self, monkeypatch):
        monkeypatch.setattr(Config, "GBUFFER_DIR", "")
        with pytest.raises(ConfigurationError):
            get_depth_predictor("gbuffer")

    def test_midas_missing_checkout_names_the_substitute(self, tmp_path):
        with pytest.raises(ConfigurationError) as exc_info:
            MidasDepthPredictor(repo_dir=tmp_path / "no-midas")
        assert exc_info.value.details["substitute"] == "channel_mean"


class TestBackboneServices:
    """Test profile selection."""

    def test_tiny_profile(self):
        encoder, depth = load_backbones("tiny", "channel_mean", seed=2)
        assert encoder.identifier == "tiny-seed2"
        assert isinstance(depth, ChannelMeanDepth)

    def test_unknown_profile(self):
        with pytest.raises(ConfigurationError):
            get_encoder("resnet")

    def test_unknown_depth_backend(self):
        with pytest.raises(ConfigurationError):
            get_depth_predictor("lidar")
