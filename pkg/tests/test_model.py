"""Model tests: forward pass, the four-term loss and its gradients,
prototype projection, last-layer optimization, and persistence."""

import numpy as np
import pytest

from protoforge.encoder import DEPTH, LatentMap
from protoforge.model import (
    EncodedSample,
    ModelVersion,
    Prototype,
    TrainConfig,
    _pairwise_diversity,
    compute_loss,
    forward,
    init_model,
    label_index,
    last_layer_objective,
    load_model,
    logits_from_maxsims,
    loss_and_grads,
    maxsims_matrix,
    optimize_last_layer,
    project_prototypes,
    save_model,
    train,
)
from protoforge.numerics import SimilarityConfig, finite_diff_gradient, similarity


def _latent(grid, sid="s0"):
    return LatentMap(grid=np.asarray(grid, dtype=np.float32), sample_id=sid, cell=8)


def _toy_model(protos, weights, cfg=None):
    return ModelVersion(
        id="toy",
        parent_id=None,
        recipe_version="enc-v1",
        sim_cfg=SimilarityConfig(),
        prototypes=protos,
        weights=np.asarray(weights, dtype=np.float32),
        train_config=cfg or TrainConfig(),
    )


def _random_batch(rng, n=6, gh=3, gw=3):
    batch = []
    for i in range(n):
        label = "pristine" if i % 2 == 0 else "manipulated"
        grid = rng.normal(scale=0.8, size=(gh, gw, DEPTH))
        batch.append(
            EncodedSample(
                sample_id=f"vid{i:02d}_f0",
                label=label,
                latent=_latent(grid, f"vid{i:02d}_f0"),
            )
        )
    return batch


def _random_model(rng, per_class=2):
    protos = []
    for j in range(2 * per_class):
        cname = "pristine" if j < per_class else "manipulated"
        protos.append(
            Prototype(
                id=f"p{j}",
                class_name=cname,
                vector=rng.normal(scale=0.8, size=DEPTH).astype(np.float32),
            )
        )
    weights = rng.normal(scale=0.5, size=(len(protos), 2)).astype(np.float32)
    return _toy_model(protos, weights)


# -- forward pass


def test_logits_closed_form_single_prototype():
    logits, probs = logits_from_maxsims(np.array([[1.0, 0.0]]), np.array([0.5]))
    np.testing.assert_allclose(logits, [0.5, 0.0])
    np.testing.assert_allclose(probs, [0.62245933, 0.37754067], atol=1e-7)


def test_maxsim_at_zero_distance(rng):
    grid = rng.normal(size=(2, 2, DEPTH)).astype(np.float32)
    proto = Prototype(id="p0", class_name="manipulated", vector=grid[1, 0].copy())
    model = _toy_model([proto], [[0.0, 1.0]])
    fwd = forward(model, _latent(grid))
    assert fwd.maxsims[0] == pytest.approx(np.log(1e4), abs=1e-9)
    assert fwd.argmax_cells[0] == (1, 0)
    assert fwd.min_dists[0] == 0.0


def test_forward_matches_brute_force(rng):
    model = _random_model(rng)
    grid = rng.normal(size=(4, 4, DEPTH)).astype(np.float32)
    fwd = forward(model, _latent(grid))
    for j, p in enumerate(model.prototypes):
        best = min(
            float(((grid[h, w].astype(np.float64) - p.vector.astype(np.float64)) ** 2).sum())
            for h in range(4)
            for w in range(4)
        )
        assert fwd.maxsims[j] == pytest.approx(float(similarity(best)), rel=1e-12)
    logits = np.zeros(2)
    for j in range(len(model.prototypes)):
        for c in range(2):
            logits[c] += float(model.weights[j, c]) * fwd.maxsims[j]
    np.testing.assert_allclose(fwd.logits, logits, rtol=1e-12)


def test_contributions_sum_to_logits_exactly(rng):
    model = _random_model(rng)
    grid = rng.normal(size=(3, 3, DEPTH)).astype(np.float32)
    fwd = forward(model, _latent(grid))
    contribs = model.weights.astype(np.float64) * fwd.maxsims[:, None]
    assert np.array_equal(contribs.sum(axis=0), fwd.logits)


# -- loss terms


def test_diversity_identical_pair():
    v = np.ones(DEPTH, dtype=np.float32)
    protos = [
        Prototype(id="p0", class_name="manipulated", vector=v.copy()),
        Prototype(id="p1", class_name="manipulated", vector=v.copy()),
    ]
    div, _ = _pairwise_diversity(protos, margin=0.3, want_grads=False)
    assert div == pytest.approx(0.7, abs=1e-7)


def test_diversity_ignores_cross_class_pairs(rng):
    protos = [
        Prototype(id="p0", class_name="pristine", vector=np.ones(DEPTH, dtype=np.float32)),
        Prototype(id="p1", class_name="manipulated", vector=np.ones(DEPTH, dtype=np.float32)),
    ]
    div, _ = _pairwise_diversity(protos, margin=0.3, want_grads=False)
    assert div == 0.0


def test_cluster_zero_when_prototype_matches_every_sample(rng):
    v = rng.normal(size=DEPTH).astype(np.float32)
    batch = []
    for i in range(4):
        grid = rng.normal(size=(2, 2, DEPTH)).astype(np.float32)
        grid[i % 2, (i // 2) % 2] = v
        batch.append(
            EncodedSample(f"vid{i:02d}_f0", "manipulated", _latent(grid, f"vid{i:02d}_f0"))
        )
    protos = [
        Prototype(id="p0", class_name="manipulated", vector=v.copy()),
        Prototype(id="p1", class_name="pristine",
                  vector=rng.normal(size=DEPTH).astype(np.float32)),
    ]
    model = _toy_model(protos, [[0.0, 1.0], [1.0, 0.0]])
    breakdown = compute_loss(model, batch, TrainConfig())
    assert breakdown.cluster == 0.0


def test_separation_hinge_active_with_nonzero_lambda(rng):
    model = _random_model(rng, per_class=1)
    batch = _random_batch(rng, n=4, gh=2, gw=2)
    cfg = TrainConfig(lambda_sep=0.5, separation_margin=1e6)
    breakdown = compute_loss(model, batch, cfg)
    assert breakdown.separation > 0.0
    assert breakdown.total == pytest.approx(
        breakdown.cross_entropy
        + cfg.lambda_clus * breakdown.cluster
        + cfg.lambda_sep * breakdown.separation
        + cfg.lambda_div * breakdown.diversity
        + cfg.lambda_l1 * breakdown.l1,
        rel=1e-12,
    )


def test_empty_batch_rejected(rng):
    with pytest.raises(ValueError):
        compute_loss(_random_model(rng), [], TrainConfig())


def test_loss_gradients_match_finite_differences(rng):
    """Analytic gradients vs the central-difference oracle at a random point."""
    cfg = TrainConfig(lambda_sep=0.1, lambda_div=0.1, lambda_clus=0.2, lambda_l1=0.01)
    model = _random_model(rng)
    batch = _random_batch(rng, n=6, gh=2, gw=2)
    _, gP, gW = loss_and_grads(model, batch, cfg)

    for j in range(len(model.prototypes)):
        base = model.prototypes[j].vector.astype(np.float64).copy()

        def f(v, j=j):
            model.prototypes[j].vector = v
            out = compute_loss(model, batch, cfg).total
            return out

        fd = finite_diff_gradient(f, base.copy())
        model.prototypes[j].vector = base.astype(np.float32)
        scale = max(np.abs(fd).max(), 1e-6)
        assert np.abs(gP[j] - fd).max() / scale < 1e-4, f"prototype {j}"

    baseW = model.weights.astype(np.float64).copy()

    def fw(W):
        model.weights = W.astype(np.float32)
        out = compute_loss(model, batch, cfg).total
        model.weights = baseW.astype(np.float32)
        return out

    fdW = finite_diff_gradient(fw, baseW.copy())
    scale = max(np.abs(fdW).max(), 1e-6)
    assert np.abs(gW - fdW).max() / scale < 1e-4


# -- projection


def test_projection_fixed_point(rng):
    batch = _random_batch(rng, n=4)
    v = batch[1].latent.grid[2, 1].copy()
    protos = [
        Prototype(id="p0", class_name=batch[1].label, vector=v.copy()),
        Prototype(id="p1", class_name="pristine",
                  vector=rng.normal(size=DEPTH).astype(np.float32)),
    ]
    model = _toy_model(protos, [[0.0, 1.0], [1.0, 0.0]])
    out = project_prototypes(model, batch)
    np.testing.assert_array_equal(out.prototypes[0].vector, v)
    assert out.prototypes[0].source.sample_id == batch[1].sample_id
    assert out.prototypes[0].source.cell == (2, 1)


def test_projection_distance_zero_and_exhaustive(rng):
    batch = _random_batch(rng, n=6)
    model = _random_model(rng)
    out = project_prototypes(model, batch)
    for orig, proj in zip(model.prototypes, out.prototypes):
        own = [es for es in batch if es.label == proj.class_name]
        # exhaustive scan for the nearest own-class patch
        best = None
        for es in sorted(own, key=lambda e: e.sample_id):
            g = es.latent.grid.astype(np.float64)
            d = ((g - orig.vector.astype(np.float64)) ** 2).sum(axis=2)
            idx = int(np.argmin(d))
            h, w = divmod(idx, d.shape[1])
            if best is None or d[h, w] < best[0]:
                best = (d[h, w], es.sample_id, (h, w))
        assert proj.source.sample_id == best[1]
        assert tuple(proj.source.cell) == best[2]
        # distance to the cited patch is exactly zero
        src = next(es for es in batch if es.sample_id == proj.source.sample_id)
        h, w = proj.source.cell
        np.testing.assert_array_equal(proj.vector, src.latent.grid[h, w])


def test_projection_missing_class_rejected(rng):
    batch = [es for es in _random_batch(rng) if es.label == "pristine"]
    model = _random_model(rng)
    with pytest.raises(ValueError):
        project_prototypes(model, batch)


# -- last-layer optimization


def _separating_maxsims(rng, n=40):
    y = np.array([i % 2 for i in range(n)])
    S = rng.uniform(0.5, 1.5, size=(n, 2))
    S[y == 1, 1] += 4.0  # prototype 1 fires on manipulated
    S[y == 0, 0] += 4.0
    return S, y


def test_last_layer_sign_of_separating_prototype(rng):
    S, y = _separating_maxsims(rng)
    cross = np.array([[False, True], [True, False]])
    W = optimize_last_layer(S, y, 0.001, cross, np.zeros((2, 2)))
    assert W[1, 1] > W[1, 0]
    assert W[0, 0] > W[0, 1]


def test_last_layer_l1_dominance(rng):
    S, y = _separating_maxsims(rng)
    cross = np.array([[False, True], [True, False]])
    W = optimize_last_layer(S, y, 1e3, cross, rng.normal(size=(2, 2)))
    assert np.abs(W[cross]).max() < 1e-3


def test_last_layer_convexity_two_inits(rng):
    # overlapping classes: the optimum is interior and strongly determined
    S, y = _separating_maxsims(rng)
    S[::5] = rng.uniform(0.5, 5.5, size=S[::5].shape)
    cross = np.array([[False, True], [True, False]])
    Wa = optimize_last_layer(S, y, 0.01, cross, np.zeros((2, 2)))
    Wb = optimize_last_layer(S, y, 0.01, cross, rng.normal(size=(2, 2)))
    fa = last_layer_objective(S, y, 0.01, cross, Wa)
    fb = last_layer_objective(S, y, 0.01, cross, Wb)
    assert abs(fa - fb) < 1e-8
    assert np.abs(Wa - Wb).max() < 1e-4


def test_last_layer_requires_both_labels(rng):
    S = rng.uniform(size=(4, 2))
    with pytest.raises(ValueError):
        optimize_last_layer(S, np.zeros(4, dtype=int), 0.0,
                            np.zeros((2, 2), dtype=bool), np.zeros((2, 2)))


# -- init and training


def test_init_model_weight_convention(mini_encoded):
    enc_train, _ = mini_encoded
    cfg = TrainConfig(protos_per_class=2, seed=0)
    model = init_model(cfg, train_samples=enc_train)
    assert len(model.prototypes) == 4
    for j, p in enumerate(model.prototypes):
        assert model.weights[j, p.class_idx] == 1.0
        assert model.weights[j, 1 - p.class_idx] == -0.5
    assert model.id.startswith("m-")


def test_train_requires_both_labels(mini_encoded):
    enc_train, _ = mini_encoded
    only = [es for es in enc_train if es.label == "pristine"]
    with pytest.raises(ValueError):
        train(only, TrainConfig(epochs=1))


def test_train_deterministic(mini_encoded):
    enc_train, _ = mini_encoded
    cfg = TrainConfig(protos_per_class=2, epochs=5, seed=3)
    a = train(enc_train, cfg)
    b = train(enc_train, cfg)
    assert a.id == b.id
    assert a.weights.tobytes() == b.weights.tobytes()
    for pa, pb in zip(a.prototypes, b.prototypes):
        assert pa.vector.tobytes() == pb.vector.tobytes()
        assert pa.source.sample_id == pb.source.sample_id


def test_trained_model_is_projected(mini_model, mini_encoded):
    enc_train, _ = mini_encoded
    by_id = {es.sample_id: es for es in enc_train}
    for p in mini_model.prototypes:
        assert p.source is not None
        src = by_id[p.source.sample_id]
        h, w = p.source.cell
        np.testing.assert_array_equal(p.vector, src.latent.grid[h, w])


def test_maxsims_matrix_matches_forward(mini_model, mini_encoded):
    _, enc_test = mini_encoded
    S, y = maxsims_matrix(mini_model, enc_test[:5])
    for i, es in enumerate(enc_test[:5]):
        fwd = forward(mini_model, es.latent)
        np.testing.assert_array_equal(S[i], fwd.maxsims)
        assert y[i] == label_index(es.label)


# -- persistence


def test_model_round_trip(tmp_path, mini_model):
    save_model(mini_model, tmp_path / "m")
    back = load_model(tmp_path / "m")
    assert back.id == mini_model.id
    assert back.proto_ids == mini_model.proto_ids
    assert back.weights.tobytes() == mini_model.weights.tobytes()
    for pa, pb in zip(mini_model.prototypes, back.prototypes):
        assert pa.vector.tobytes() == pb.vector.tobytes()
        assert pa.source.bbox == pb.source.bbox
    assert back.content_id() == mini_model.content_id()


def test_model_bad_magic(tmp_path, mini_model):
    save_model(mini_model, tmp_path / "m")
    (tmp_path / "m" / "weights.bin").write_bytes(b"XXXX" + b"\x00" * 32)
    with pytest.raises(ValueError):
        load_model(tmp_path / "m")


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lambda_clus=-1.0)
    with pytest.raises(ValueError):
        TrainConfig(protos_per_class=0)
    with pytest.raises(ValueError):
        TrainConfig(projection_interval=0)


def test_model_shape_validation(rng):
    protos = [Prototype(id="p0", class_name="pristine",
                        vector=np.zeros(DEPTH, dtype=np.float32))]
    with pytest.raises(ValueError):
        _toy_model(protos, np.zeros((2, 2)))
    dup = protos + [Prototype(id="p0", class_name="manipulated",
                              vector=np.zeros(DEPTH, dtype=np.float32))]
    with pytest.raises(ValueError):
        _toy_model(dup, np.zeros((2, 2)))
