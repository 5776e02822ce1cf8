"""Encoder tests: raw feature semantics, determinism, artifact localization,
and the additive pixel decomposition behind relevance propagation."""

import numpy as np
import pytest

from protoforge.datagen import DataConfig, SampleSequence, generate_dataset, load_manifest, load_split
from protoforge.encoder import (
    DEPTH,
    FEATURE_NAMES,
    FLOW_FEATURE_SLICE,
    EncoderConfig,
    LatentMap,
    encode,
    pixel_shares,
    raw_cell_features,
)
from protoforge.numerics import ShapeMismatchError

_LOG_FLOOR_VALUE = np.log10(1e-8)


def _constant_sample(value=0.5, h=16, w=16, k=4):
    rgb = np.full((h, w, 3), value, dtype=np.float32)
    flows = np.zeros((k - 1, h, w, 2), dtype=np.float32)
    return SampleSequence(
        rgb=rgb, flows=flows, label="pristine",
        landmarks={"nose": (w / 2, h / 2)}, source_id="const", frame_index=0,
    )


def test_feature_names_cover_depth():
    assert len(FEATURE_NAMES) == DEPTH


def test_constant_input_raw_features():
    """Gray frame + zero flow: every variance/gradient/flow statistic bottoms out."""
    s = _constant_sample()
    feats = raw_cell_features(s.rgb[:8, :8].astype(np.float64), s.flows[:, :8, :8].astype(np.float64))
    named = dict(zip(FEATURE_NAMES, feats))
    for name in ("logvar_r", "logvar_g", "logvar_b", "loggrad_r", "loggrad_g", "loggrad_b"):
        assert named[name] == pytest.approx(_LOG_FLOOR_VALUE, abs=1e-9)
    for name in ("orient_0", "orient_1", "orient_2", "orient_3",
                 "range_r", "range_g", "range_b"):
        assert named[name] == pytest.approx(0.0, abs=1e-12)
    assert named["flat_frac"] == 1.0
    for name in FEATURE_NAMES[FLOW_FEATURE_SLICE]:
        assert named[name] == pytest.approx(0.0, abs=1e-12)


def test_constant_input_uniform_grid():
    latent = encode(_constant_sample())
    assert latent.grid.shape == (2, 2, DEPTH)
    for h in range(2):
        for w in range(2):
            np.testing.assert_array_equal(latent.grid[h, w], latent.grid[0, 0])


def test_encode_deterministic(mini_data):
    _, train_s, _ = mini_data
    a = encode(train_s[0])
    b = encode(train_s[0])
    assert a.grid.tobytes() == b.grid.tobytes()


def test_encode_records_recipe_and_cell(mini_data):
    _, train_s, _ = mini_data
    latent = encode(train_s[0])
    assert latent.recipe_version == "enc-v1"
    assert latent.cell == 8
    assert latent.sample_id == train_s[0].sample_id
    assert latent.cell_bbox(1, 2) == (16, 8, 24, 16)


def test_encode_rejects_indivisible_size():
    s = _constant_sample(h=20, w=16)
    with pytest.raises(ShapeMismatchError):
        encode(s)


def test_shifted_artifact_moves_argmax_cell(tmp_path):
    """Moving the flicker patch one full cell moves the hottest flow cell."""
    base = _constant_sample(h=32, w=32, k=6)
    tvar_idx = FEATURE_NAMES.index("flow_tvar")

    def with_flicker(x0, y0):
        s = _constant_sample(h=32, w=32, k=6)
        flows = s.flows.copy()
        for f in range(flows.shape[0]):
            sgn = 1.0 if f % 2 == 0 else -1.0
            flows[f, y0 : y0 + 8, x0 : x0 + 8, :] = sgn * 3.0
        s.flows = flows
        return s

    la = encode(with_flicker(8, 8))
    lb = encode(with_flicker(16, 8))
    ca = np.unravel_index(np.argmax(la.grid[:, :, tvar_idx]), (4, 4))
    cb = np.unravel_index(np.argmax(lb.grid[:, :, tvar_idx]), (4, 4))
    assert ca == (1, 1)
    assert cb == (1, 2)


def test_artifact_cell_stands_out(mini_data):
    """The planted artifact footprint dominates some feature in its own cell."""
    _, train_s, _ = mini_data
    s = next(x for x in train_s if x.artifact and x.artifact.kind == "flow_flicker")
    latent = encode(s)
    x0, y0, x1, y1 = s.artifact.patch_bbox
    cells = {(yy // 8, xx // 8) for yy in range(y0, y1, 8) for xx in range(x0, x1, 8)}
    tvar_idx = FEATURE_NAMES.index("flow_tvar")
    hot = np.unravel_index(np.argmax(latent.grid[:, :, tvar_idx]), latent.grid.shape[:2])
    assert tuple(hot) in cells


def test_pixel_shares_nonnegative_and_shaped(mini_data):
    _, train_s, _ = mini_data
    s = train_s[0]
    shares = pixel_shares(s, (2, 3), EncoderConfig())
    assert len(shares) == DEPTH
    k1 = s.flows.shape[0]
    for domain, arr in shares:
        assert domain in ("rgb", "flow")
        if domain == "rgb":
            assert arr.shape == (8, 8)
        else:
            assert arr.shape == (k1, 8, 8)
        assert np.all(arr >= 0.0)


def test_encoder_config_validation():
    with pytest.raises(ValueError):
        EncoderConfig(depth=16)
    with pytest.raises(ValueError):
        EncoderConfig(recipe_version="enc-v0")
