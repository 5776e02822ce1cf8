"""Shared fixtures: a small dataset for fast unit tests and the full desk
dataset plus a trained model for integration and acceptance tests. Expensive
artifacts are session-scoped and built once."""

from __future__ import annotations

import numpy as np
import pytest

from protoforge.datagen import DataConfig, generate_dataset, load_manifest, load_split
from protoforge.model import TrainConfig, encode_samples, train
from protoforge.refinery import Session, build_cache


@pytest.fixture(scope="session")
def mini_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("mini")
    cfg = DataConfig(train_samples=40, test_samples=20, seed=7)
    generate_dataset(cfg, out)
    return out


@pytest.fixture(scope="session")
def mini_data(mini_dir):
    manifest = load_manifest(mini_dir / "manifest.json")
    return manifest, load_split(manifest, "train"), load_split(manifest, "test")


@pytest.fixture(scope="session")
def mini_encoded(mini_data):
    _, train_s, test_s = mini_data
    return encode_samples(train_s), encode_samples(test_s)


@pytest.fixture(scope="session")
def mini_model(mini_encoded):
    enc_train, _ = mini_encoded
    return train(enc_train, TrainConfig(protos_per_class=3, epochs=10, seed=7))


@pytest.fixture(scope="session")
def desk_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk")
    generate_dataset(DataConfig(train_samples=200, test_samples=100, seed=42), out)
    return out


@pytest.fixture(scope="session")
def desk_data(desk_dir):
    manifest = load_manifest(desk_dir / "manifest.json")
    return manifest, load_split(manifest, "train"), load_split(manifest, "test")


@pytest.fixture(scope="session")
def desk_encoded(desk_data):
    _, train_s, test_s = desk_data
    return encode_samples(train_s), encode_samples(test_s)


@pytest.fixture(scope="session")
def desk_model(desk_encoded):
    enc_train, _ = desk_encoded
    return train(enc_train, TrainConfig(seed=42))


@pytest.fixture(scope="session")
def desk_landmarks(desk_data):
    _, train_s, test_s = desk_data
    return {s.sample_id: s.landmarks for s in list(train_s) + list(test_s)}


@pytest.fixture()
def desk_session(desk_model, desk_encoded, desk_landmarks):
    """A fresh, mutable refinement session per test."""
    enc_train, enc_test = desk_encoded
    return Session(
        desk_model,
        build_cache(desk_model, enc_train, "train"),
        build_cache(desk_model, enc_test, "test"),
        desk_landmarks,
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
