import numpy as np
import pytest
import torch

from ctxrestore.backbone import (
    LAYER_IDS,
    FeatureBackbone,
    extract_context,
    get_backbone,
    layer_channels,
    resolve_weights_path,
    write_surrogate_weights,
)
from ctxrestore.errors import WeightsNotFoundError


def test_layer_registry_shape():
    assert len(LAYER_IDS) == 16
    assert layer_channels("conv1_1") == 64
    assert layer_channels("conv4_2") == 512
    assert layer_channels("conv5_4") == 512


def test_conv4_2_field_dims(backbone, texture64):
    field = backbone.extract(texture64, ["conv4_2"])
    assert tuple(field.layers["conv4_2"].shape) == (8, 8, 512)
    assert field.source_dims == (64, 64)
    assert field.vectors("conv4_2").shape == (64, 512)


def test_multiple_layers_ordered(backbone, texture64):
    field = backbone.extract(texture64, ["conv1_2", "conv3_4", "conv4_2"])
    assert list(field.layers) == ["conv1_2", "conv3_4", "conv4_2"]
    assert tuple(field.layers["conv1_2"].shape) == (64, 64, 64)
    assert tuple(field.layers["conv3_4"].shape) == (16, 16, 256)


def test_extraction_is_deterministic(backbone, texture64):
    a = backbone.extract(texture64, ["conv4_2"]).layers["conv4_2"]
    b = backbone.extract(texture64, ["conv4_2"]).layers["conv4_2"]
    assert torch.equal(a, b)


def test_flip_changes_features(backbone, texture64):
    same = backbone.extract(texture64.copy(), ["conv4_2"]).layers["conv4_2"]
    base = backbone.extract(texture64, ["conv4_2"]).layers["conv4_2"]
    flipped = backbone.extract(texture64[:, ::-1].copy(), ["conv4_2"])
    assert torch.equal(base, same)
    assert not torch.equal(base, flipped.layers["conv4_2"])


def test_values_finite_for_unit_range_inputs(backbone):
    rng = np.random.default_rng(5)
    img = rng.random((33, 47, 3)).astype(np.float32)
    field = backbone.extract(img, ["conv4_2"])
    assert torch.isfinite(field.layers["conv4_2"]).all()


def test_unknown_layer_rejected(backbone, texture64):
    with pytest.raises(KeyError, match="conv6_1"):
        backbone.extract(texture64, ["conv6_1"])
    with pytest.raises(ValueError):
        backbone.extract(texture64, [])


def test_gradients_flow_to_image_not_weights(backbone, texture64):
    img = torch.from_numpy(texture64).requires_grad_(True)
    field = backbone.extract(img, ["conv4_2"])
    field.layers["conv4_2"].sum().backward()
    assert img.grad is not None and float(img.grad.abs().sum()) > 0
    assert all(p.grad is None for p in backbone.trunk.parameters())


def test_checksum_stable_across_forward_passes(backbone, texture64):
    before = backbone.parameter_checksum()
    backbone.extract(texture64, ["conv4_2"])
    img = torch.from_numpy(texture64).requires_grad_(True)
    backbone.extract(img, ["conv4_2"]).layers["conv4_2"].mean().backward()
    assert backbone.parameter_checksum() == before


def test_missing_weights_error(tmp_path, monkeypatch):
    monkeypatch.delenv("CTXRESTORE_WEIGHTS_DIR", raising=False)
    monkeypatch.setenv("HOME", str(tmp_path))
    with pytest.raises(WeightsNotFoundError, match="no backbone weights"):
        resolve_weights_path()
    with pytest.raises(WeightsNotFoundError):
        FeatureBackbone(weights_path=str(tmp_path / "absent.pth"))


def test_env_var_resolution(weights_env):
    path = resolve_weights_path()
    assert path == weights_env


def test_get_backbone_is_shared(weights_env):
    a = get_backbone()
    b = get_backbone()
    assert a is b


def test_extract_context_convenience(weights_env, texture64):
    field = extract_context(texture64)
    assert tuple(field.layers["conv4_2"].shape) == (8, 8, 512)


def test_surrogate_weights_deterministic(tmp_path):
    p1 = write_surrogate_weights(tmp_path / "a.pth", seed=11)
    p2 = write_surrogate_weights(tmp_path / "b.pth", seed=11)
    s1 = torch.load(p1, weights_only=True)
    s2 = torch.load(p2, weights_only=True)
    assert all(torch.equal(s1[k], s2[k]) for k in s1)
