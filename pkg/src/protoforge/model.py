"""Prototype classifier: forward pass, four-term loss with hand-derived
gradients, prototype projection, and convex last-layer optimization.

Class convention everywhere: index 0 = pristine, index 1 = manipulated.
The class layer has no bias, so per-prototype contributions
weights[j][c] * maxsim[j] sum to the class logit exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import numerics
from .datagen import LABELS, MANIPULATED, PRISTINE, SampleSequence
from .encoder import EncoderConfig, LatentMap, encode
from .numerics import ShapeMismatchError, SimilarityConfig

MODEL_MAGIC = b"PFMD"
MODEL_FORMAT_VERSION = 1


def label_index(label: str) -> int:
    return LABELS.index(label)


class TrainingDivergedError(RuntimeError):
    """Training loss became non-finite; message carries the last breakdown."""


@dataclass(frozen=True)
class TrainConfig:
    lambda_clus: float = 0.2
    lambda_sep: float = 0.0
    lambda_div: float = 0.1
    lambda_l1: float = 0.001
    protos_per_class: int = 5
    projection_interval: int = 5
    lr_protos: float = 0.05
    lr_weights: float = 0.1
    epochs: int = 30
    batch_size: int = 0  # 0 = full batch
    diversity_margin: float = 0.3
    separation_margin: float = 4.0
    seed: int = 0
    init: str = "patch_seed"  # or "random"
    last_layer_tol: float = 1e-6
    last_layer_max_iter: int = 10_000

    def __post_init__(self):
        for name in ("lambda_clus", "lambda_sep", "lambda_div", "lambda_l1"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.protos_per_class < 1:
            raise ValueError("protos_per_class must be >= 1")
        if self.projection_interval < 1:
            raise ValueError("projection_interval must be >= 1")


@dataclass
class LossBreakdown:
    cross_entropy: float
    cluster: float
    separation: float
    diversity: float
    l1: float
    total: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class PrototypeSource:
    sample_id: str
    cell: tuple[int, int]  # (h, w)
    bbox: tuple[int, int, int, int]  # input pixels (x0, y0, x1, y1)
    frame_range: tuple[int, int]


@dataclass
class Prototype:
    id: str
    class_name: str
    vector: np.ndarray  # (D,)
    source: Optional[PrototypeSource] = None

    @property
    def class_idx(self) -> int:
        return label_index(self.class_name)


@dataclass
class ModelVersion:
    id: str
    parent_id: Optional[str]
    recipe_version: str
    sim_cfg: SimilarityConfig
    prototypes: list[Prototype]
    weights: np.ndarray  # (P, 2) float64
    train_config: TrainConfig
    note: str = ""

    def __post_init__(self):
        ids = [p.id for p in self.prototypes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate prototype ids")
        if self.weights.shape != (len(self.prototypes), 2):
            raise ShapeMismatchError(
                f"weights shape {self.weights.shape} for {len(self.prototypes)} prototypes"
            )

    @property
    def proto_ids(self) -> list[str]:
        return [p.id for p in self.prototypes]

    def proto_by_id(self, proto_id: str) -> Prototype:
        for p in self.prototypes:
            if p.id == proto_id:
                return p
        raise KeyError(f"unknown prototype {proto_id!r}")

    def class_indices(self) -> np.ndarray:
        return np.array([p.class_idx for p in self.prototypes])

    def cross_class_mask(self) -> np.ndarray:
        """(P, 2) boolean mask of the cross-class weight entries."""
        mask = np.zeros((len(self.prototypes), 2), dtype=bool)
        for j, p in enumerate(self.prototypes):
            mask[j, 1 - p.class_idx] = True
        return mask

    def content_id(self) -> str:
        h = hashlib.sha256()
        h.update((self.parent_id or "").encode())
        for p in self.prototypes:
            h.update(p.id.encode())
            h.update(p.class_name.encode())
            h.update(np.ascontiguousarray(p.vector, dtype="<f4").tobytes())
        h.update(np.ascontiguousarray(self.weights, dtype="<f8").tobytes())
        return "m-" + h.hexdigest()[:12]


@dataclass
class EncodedSample:
    sample_id: str
    label: str
    latent: LatentMap
    frame_index: int = 0
    k: int = 10


def encode_samples(
    samples: Sequence[SampleSequence], enc_cfg: EncoderConfig = EncoderConfig()
) -> list[EncodedSample]:
    return [
        EncodedSample(
            sample_id=s.sample_id,
            label=s.label,
            latent=encode(s, enc_cfg),
            frame_index=s.frame_index,
            k=s.k,
        )
        for s in samples
    ]


# ---------------------------------------------------------------------------
# forward pass


@dataclass
class ForwardResult:
    maxsims: np.ndarray  # (P,)
    argmax_cells: list[tuple[int, int]]
    min_dists: np.ndarray  # (P,) squared distances at the argmax cells
    logits: np.ndarray  # (2,)
    probs: np.ndarray  # (2,)


def softmax2(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def forward(model: ModelVersion, latent: LatentMap | np.ndarray) -> ForwardResult:
    grid = latent.grid if isinstance(latent, LatentMap) else latent
    P = len(model.prototypes)
    maxsims = np.empty(P)
    dists = np.empty(P)
    cells = []
    for j, proto in enumerate(model.prototypes):
        dmap = numerics.distance_map(grid, proto.vector)
        idx = int(np.argmin(dmap))
        h, w = divmod(idx, dmap.shape[1])
        dists[j] = dmap[h, w]
        cells.append((h, w))
        maxsims[j] = numerics.similarity(dists[j], model.sim_cfg)
    logits, probs = logits_from_maxsims(model.weights, maxsims)
    return ForwardResult(maxsims, cells, dists, logits, probs)


def logits_from_maxsims(weights: np.ndarray, maxsims: np.ndarray):
    contribs = weights.astype(np.float64) * maxsims[:, None]
    logits = contribs.sum(axis=0)
    return logits, softmax2(logits)


# ---------------------------------------------------------------------------
# loss and gradients


def _pairwise_diversity(protos: list[Prototype], margin: float, want_grads: bool):
    """Mean hinged cosine over same-class prototype pairs, plus gradients."""
    P = len(protos)
    vecs = [np.asarray(p.vector, dtype=np.float64) for p in protos]
    grads = [np.zeros_like(v) for v in vecs] if want_grads else None
    pairs = [
        (i, j)
        for i in range(P)
        for j in range(i + 1, P)
        if protos[i].class_name == protos[j].class_name
    ]
    if not pairs:
        return 0.0, grads
    total = 0.0
    for i, j in pairs:
        vi, vj = vecs[i], vecs[j]
        ni, nj = np.linalg.norm(vi), np.linalg.norm(vj)
        if ni == 0 or nj == 0:
            continue
        cos = float(vi @ vj / (ni * nj))
        t = cos - margin
        if t <= 0:
            continue
        total += t
        if want_grads:
            grads[i] += (vj / (ni * nj) - cos * vi / ni**2) / len(pairs)
            grads[j] += (vi / (ni * nj) - cos * vj / nj**2) / len(pairs)
    return total / len(pairs), grads


def loss_and_grads(
    model: ModelVersion,
    batch: Sequence[EncodedSample],
    cfg: TrainConfig,
    want_grads: bool = True,
):
    """Total training loss breakdown and its gradients.

    Returns (LossBreakdown, grad_protos list[(D,)], grad_weights (P,2)).
    Gradients are None when want_grads is False.
    """
    if not batch:
        raise ValueError("empty batch")
    P = len(model.prototypes)
    N = len(batch)
    cls = model.class_indices()
    W = model.weights.astype(np.float64)

    gP = [np.zeros(len(p.vector)) for p in model.prototypes] if want_grads else None
    gW = np.zeros((P, 2)) if want_grads else None

    ce_sum = 0.0
    clus_sum = 0.0
    sep_sum = 0.0
    for es in batch:
        grid = es.latent.grid
        y = label_index(es.label)
        fwd = forward(model, es.latent)
        p = fwd.probs
        ce_sum += -np.log(max(p[y], 1e-300))

        own = cls == y
        other = ~own
        if own.any():
            j_own = int(np.flatnonzero(own)[np.argmin(fwd.min_dists[own])])
            clus_sum += fwd.min_dists[j_own]
        else:
            j_own = None
        j_oth = None
        if other.any():
            j_oth = int(np.flatnonzero(other)[np.argmin(fwd.min_dists[other])])
            sep_sum += max(0.0, cfg.separation_margin - fwd.min_dists[j_oth])

        if want_grads:
            onehot = np.zeros(2)
            onehot[y] = 1.0
            delta = p - onehot  # (2,)
            gW += np.outer(fwd.maxsims, delta) / N
            simg = numerics.similarity_grad(fwd.min_dists, model.sim_cfg)
            coef = W @ delta  # (P,)
            for j in range(P):
                h, w = fwd.argmax_cells[j]
                z = grid[h, w].astype(np.float64)
                pv = np.asarray(model.prototypes[j].vector, dtype=np.float64)
                dpd = 2.0 * (pv - z)  # d d_j / d p_j at the argmin cell
                gP[j] += (coef[j] * simg[j] / N) * dpd
                if j == j_own:
                    gP[j] += (cfg.lambda_clus / N) * dpd
                if (
                    j == j_oth
                    and cfg.separation_margin - fwd.min_dists[j_oth] > 0
                ):
                    gP[j] -= (cfg.lambda_sep / N) * dpd

    div, div_grads = _pairwise_diversity(
        model.prototypes, cfg.diversity_margin, want_grads
    )
    cross = model.cross_class_mask()
    l1 = float(np.abs(W[cross]).sum())

    ce = ce_sum / N
    cluster = clus_sum / N
    sep = sep_sum / N
    total = (
        ce
        + cfg.lambda_clus * cluster
        + cfg.lambda_sep * sep
        + cfg.lambda_div * div
        + cfg.lambda_l1 * l1
    )
    breakdown = LossBreakdown(ce, cluster, sep, div, l1, total)

    if want_grads:
        for j in range(P):
            gP[j] += cfg.lambda_div * div_grads[j]
        gW += cfg.lambda_l1 * np.sign(W) * cross
    return breakdown, gP, gW


def compute_loss(
    model: ModelVersion, batch: Sequence[EncodedSample], cfg: TrainConfig
) -> LossBreakdown:
    breakdown, _, _ = loss_and_grads(model, batch, cfg, want_grads=False)
    return breakdown


# ---------------------------------------------------------------------------
# projection and last-layer optimization


def project_prototypes(
    model: ModelVersion, train_samples: Sequence[EncodedSample]
) -> ModelVersion:
    """Snap every prototype to its nearest own-class latent patch.

    Ties break by (sample_id, h, w) lexicographic order: samples are scanned
    in sorted id order and cells row-major, keeping the first strict minimum.
    """
    by_class: dict[str, list[EncodedSample]] = {c: [] for c in LABELS}
    for es in sorted(train_samples, key=lambda e: e.sample_id):
        by_class[es.label].append(es)
    new_protos = []
    for proto in model.prototypes:
        pool = by_class[proto.class_name]
        if not pool:
            raise ValueError(f"no training samples of class {proto.class_name!r}")
        best = None
        for es in pool:
            dmap = numerics.distance_map(es.latent.grid, proto.vector)
            idx = int(np.argmin(dmap))
            h, w = divmod(idx, dmap.shape[1])
            if best is None or dmap[h, w] < best[0]:
                best = (dmap[h, w], es, h, w)
        _, es, h, w = best
        bbox = es.latent.cell_bbox(h, w)
        new_protos.append(
            Prototype(
                id=proto.id,
                class_name=proto.class_name,
                vector=es.latent.grid[h, w].copy(),
                source=PrototypeSource(
                    sample_id=es.sample_id,
                    cell=(h, w),
                    bbox=bbox,
                    frame_range=(es.frame_index, es.frame_index + es.k - 1),
                ),
            )
        )
    out = ModelVersion(
        id=model.id,
        parent_id=model.parent_id,
        recipe_version=model.recipe_version,
        sim_cfg=model.sim_cfg,
        prototypes=new_protos,
        weights=model.weights.copy(),
        train_config=model.train_config,
        note=model.note,
    )
    return out


def optimize_last_layer(
    maxsims: np.ndarray,
    labels: np.ndarray,
    lambda_l1: float,
    cross_mask: np.ndarray,
    init_weights: np.ndarray,
    tol: float = 1e-6,
    max_iter: int = 10_000,
) -> np.ndarray:
    """Deterministic convex optimization of the class layer.

    Minimizes mean cross-entropy plus lambda_l1 * sum |cross-class weights|
    by accelerated proximal gradient descent (momentum with adaptive restart)
    at a Lipschitz step size; the L1 term is handled by soft-thresholding.
    Convergence is checked before stepping, so an input that is already a
    fixed point is returned unchanged. Stops when the generalized gradient
    max-norm drops below `tol` or after `max_iter` iterations. Returns
    (P, 2) float64 weights.
    """
    S = np.asarray(maxsims, dtype=np.float64)
    y = np.asarray(labels)
    if S.ndim != 2 or S.shape[0] != y.shape[0]:
        raise ShapeMismatchError(f"maxsims {S.shape} vs labels {y.shape}")
    if S.shape[0] < 2 or len(np.unique(y)) < 2:
        raise ValueError("need at least two samples with both labels present")
    N, P = S.shape
    Y = np.zeros((N, 2))
    Y[np.arange(N), y] = 1.0

    # CE Hessian spectral bound: 0.5 * lambda_max(S^T S / N)
    lip = 0.5 * (np.linalg.norm(S, 2) ** 2) / N
    lr = 1.0 / max(lip, 1e-12)

    def prox_step(A: np.ndarray) -> np.ndarray:
        logits = S @ A
        z = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        probs = e / e.sum(axis=1, keepdims=True)
        B = A - lr * (S.T @ (probs - Y) / N)
        if lambda_l1 > 0:
            t = lr * lambda_l1
            Bc = B[cross_mask]
            B[cross_mask] = np.sign(Bc) * np.maximum(np.abs(Bc) - t, 0.0)
        return B

    W = np.asarray(init_weights, dtype=np.float64).copy()
    V = W.copy()
    theta = 1.0
    for _ in range(max_iter):
        if np.max(np.abs(W - prox_step(W))) / lr < tol:
            break
        W_new = prox_step(V)
        theta_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * theta * theta))
        if float(np.sum((V - W_new) * (W_new - W))) > 0.0:
            # momentum points uphill: restart it
            theta, V = 1.0, W_new.copy()
        else:
            V = W_new + ((theta - 1.0) / theta_new) * (W_new - W)
            theta = theta_new
        W = W_new
    return W


def last_layer_objective(
    maxsims: np.ndarray, labels: np.ndarray, lambda_l1: float,
    cross_mask: np.ndarray, weights: np.ndarray,
) -> float:
    S = np.asarray(maxsims, dtype=np.float64)
    W = np.asarray(weights, dtype=np.float64)
    logits = S @ W
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    ce = -logp[np.arange(len(labels)), labels].mean()
    return float(ce + lambda_l1 * np.abs(W[cross_mask]).sum())


# ---------------------------------------------------------------------------
# training


def maxsims_matrix(model: ModelVersion, samples: Sequence[EncodedSample]):
    """(N, P) maxsims and (N,) label indices for a sample list."""
    S = np.empty((len(samples), len(model.prototypes)))
    y = np.empty(len(samples), dtype=np.int64)
    for i, es in enumerate(samples):
        fwd = forward(model, es.latent)
        S[i] = fwd.maxsims
        y[i] = label_index(es.label)
    return S, y


def _patch_pool(samples: Sequence[EncodedSample]) -> np.ndarray:
    return np.concatenate(
        [es.latent.grid.reshape(-1, es.latent.grid.shape[-1]) for es in samples]
    ).astype(np.float64)


def _min_dist_to(X: np.ndarray, Y: np.ndarray, chunk: int = 1024) -> np.ndarray:
    """Min squared distance from each row of X to any row of Y, chunked."""
    ynorm = (Y**2).sum(axis=1)
    out = np.empty(len(X))
    for i in range(0, len(X), chunk):
        blk = X[i : i + chunk]
        d2 = (blk**2).sum(axis=1)[:, None] + ynorm[None, :] - 2.0 * blk @ Y.T
        out[i : i + chunk] = np.maximum(d2, 0.0).min(axis=1)
    return out


def _sample_min_dists(
    X: np.ndarray, samples: Sequence[EncodedSample], chunk: int = 512
) -> np.ndarray:
    """(len(X), len(samples)) matrix of min squared cell distances per sample."""
    pools = [es.latent.grid.reshape(-1, X.shape[1]).astype(np.float64) for es in samples]
    Y = np.concatenate(pools)
    bounds = np.cumsum([0] + [len(p) for p in pools])[:-1]
    ynorm = (Y**2).sum(axis=1)
    out = np.empty((len(X), len(samples)))
    for i in range(0, len(X), chunk):
        blk = X[i : i + chunk]
        d2 = (blk**2).sum(axis=1)[:, None] + ynorm[None, :] - 2.0 * blk @ Y.T
        out[i : i + chunk] = np.minimum.reduceat(np.maximum(d2, 0.0), bounds, axis=1)
    return out


def _seed_class_patches(
    samples: Sequence[EncodedSample],
    n: int,
    opposite: Sequence[EncodedSample],
    sim_cfg: SimilarityConfig,
) -> list[np.ndarray]:
    """Coverage-greedy seeding over the class's latent patches.

    Each candidate patch is scored per own-class sample by the similarity
    margin it earns over its strongest response to any opposite-class sample,
    with the candidate's own source video masked out so seeds must generalize
    across videos. Seeds are then picked by facility-location greedy: each
    pick maximizes the total newly covered margin, which spreads seeds across
    the distinct structures of the class instead of piling onto one. When no
    margin is left, remaining slots fall back to farthest-point diversity.
    Fully deterministic, ties go to the lowest index in sample-id order.
    """
    X = _patch_pool(samples)
    src = [es.sample_id.rsplit("_f", 1)[0] for es in samples]
    row_src = np.concatenate(
        [
            np.full(es.latent.grid.shape[0] * es.latent.grid.shape[1], i)
            for i, es in enumerate(samples)
        ]
    )
    own_sims = numerics.similarity(_sample_min_dists(X, samples), sim_cfg)
    opp_best = numerics.similarity(
        _min_dist_to(X, _patch_pool(opposite)), sim_cfg
    )
    margin = np.maximum(own_sims - opp_best[:, None], 0.0)
    codes = np.unique(src, return_inverse=True)[1]
    margin[codes[row_src][:, None] == codes[None, :]] = 0.0

    out = []
    covered = np.zeros(len(samples))
    d2 = None
    for _ in range(n):
        gains = np.maximum(margin, covered[None, :]).sum(axis=1) - covered.sum()
        pick = int(np.argmax(gains))
        if gains[pick] <= 0.0:
            if d2 is None:
                d2 = _min_dist_to(X, _patch_pool(opposite))
                for v in out:
                    d2 = np.minimum(d2, ((X - v.astype(np.float64)) ** 2).sum(axis=1))
            pick = int(np.argmax(d2))
        covered = np.maximum(covered, margin[pick])
        if d2 is not None:
            d2 = np.minimum(d2, ((X - X[pick]) ** 2).sum(axis=1))
        out.append(X[pick].astype(np.float32))
    return out


def init_model(
    cfg: TrainConfig,
    sim_cfg: SimilarityConfig = SimilarityConfig(),
    enc_cfg: EncoderConfig = EncoderConfig(),
    train_samples: Optional[Sequence[EncodedSample]] = None,
) -> ModelVersion:
    """Prototype init (patch seeding by default, plain normals otherwise) and
    the conventional +1 own-class / -0.5 cross-class weight init."""
    rng = np.random.default_rng(cfg.seed)
    pools = {
        cname: sorted(
            (es for es in (train_samples or []) if es.label == cname),
            key=lambda e: e.sample_id,
        )
        for cname in LABELS
    }
    protos = []
    for ci, cname in enumerate(LABELS):
        if cfg.init == "patch_seed" and train_samples is not None:
            other = LABELS[1 - ci]
            vecs = _seed_class_patches(
                pools[cname], cfg.protos_per_class, pools[other], sim_cfg
            )
        else:
            vecs = [
                rng.standard_normal(enc_cfg.depth).astype(np.float32)
                for _ in range(cfg.protos_per_class)
            ]
        for k, vec in enumerate(vecs):
            protos.append(
                Prototype(id=f"p{ci * cfg.protos_per_class + k}", class_name=cname, vector=vec)
            )
    P = len(protos)
    weights = np.full((P, 2), -0.5, dtype=np.float64)
    for j, p in enumerate(protos):
        weights[j, p.class_idx] = 1.0
    model = ModelVersion(
        id="",
        parent_id=None,
        recipe_version=enc_cfg.recipe_version,
        sim_cfg=sim_cfg,
        prototypes=protos,
        weights=weights,
        train_config=cfg,
        note="initial",
    )
    model.id = model.content_id()
    return model


def train(
    train_samples: Sequence[EncodedSample],
    cfg: TrainConfig = TrainConfig(),
    sim_cfg: SimilarityConfig = SimilarityConfig(),
    enc_cfg: EncoderConfig = EncoderConfig(),
    log=None,
) -> ModelVersion:
    """Gradient descent on prototypes and class weights with periodic
    projection + last-layer optimization. Ends with a final projection so
    every prototype is grounded in a training patch."""
    labels_present = {es.label for es in train_samples}
    if labels_present != set(LABELS):
        raise ValueError("training split must contain both labels")
    model = init_model(cfg, sim_cfg, enc_cfg, train_samples)

    def run_last_layer(m: ModelVersion) -> ModelVersion:
        S, y = maxsims_matrix(m, train_samples)
        m.weights = optimize_last_layer(
            S, y, cfg.lambda_l1, m.cross_class_mask(), m.weights,
            tol=cfg.last_layer_tol, max_iter=cfg.last_layer_max_iter,
        )
        return m

    for epoch in range(1, cfg.epochs + 1):
        breakdown, gP, gW = loss_and_grads(model, train_samples, cfg)
        if not np.isfinite(breakdown.total):
            raise TrainingDivergedError(
                f"non-finite loss at epoch {epoch}: {breakdown.as_dict()}"
            )
        for j, proto in enumerate(model.prototypes):
            proto.vector = (
                proto.vector.astype(np.float64) - cfg.lr_protos * gP[j]
            ).astype(np.float32)
        model.weights = model.weights.astype(np.float64) - cfg.lr_weights * gW
        if log:
            log(f"epoch {epoch}: total={breakdown.total:.4f} ce={breakdown.cross_entropy:.4f}")
        if epoch % cfg.projection_interval == 0:
            model = project_prototypes(model, train_samples)
            model = run_last_layer(model)

    if cfg.epochs % cfg.projection_interval != 0 or cfg.epochs == 0:
        model = project_prototypes(model, train_samples)
        model = run_last_layer(model)
    model.id = model.content_id()
    model.note = "trained"
    return model


# ---------------------------------------------------------------------------
# persistence


def _write_matrix(path: Path, mat: np.ndarray, dtype: str = "<f4") -> None:
    mat = np.ascontiguousarray(mat, dtype=dtype)
    rows, cols = (mat.shape[0], mat.shape[1] if mat.ndim == 2 else 1)
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<HII", MODEL_FORMAT_VERSION, rows, cols))
        fh.write(mat.tobytes())


def _read_matrix(path: Path, dtype: str = "<f4") -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MODEL_MAGIC:
        raise ValueError(f"{path}: not a PFMD file")
    version, rows, cols = struct.unpack("<HII", raw[4:14])
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    data = np.frombuffer(raw[14:], dtype=dtype)
    if data.size != rows * cols:
        raise ValueError(f"{path}: truncated payload")
    return data.reshape(rows, cols).copy()


def save_model(model: ModelVersion, out_dir: Path | str) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "id": model.id,
        "parent_id": model.parent_id,
        "recipe_version": model.recipe_version,
        "epsilon": model.sim_cfg.epsilon,
        "note": model.note,
        "train_config": asdict(model.train_config),
        "prototypes": [
            {
                "id": p.id,
                "class": p.class_name,
                "source": None
                if p.source is None
                else {
                    "sample_id": p.source.sample_id,
                    "cell": list(p.source.cell),
                    "bbox": list(p.source.bbox),
                    "frame_range": list(p.source.frame_range),
                },
            }
            for p in model.prototypes
        ],
    }
    (out_dir / "model.json").write_text(json.dumps(doc, indent=1, sort_keys=True))
    _write_matrix(out_dir / "prototypes.bin", np.stack([p.vector for p in model.prototypes]))
    _write_matrix(out_dir / "weights.bin", model.weights, dtype="<f8")
    return out_dir


def load_model(model_dir: Path | str) -> ModelVersion:
    model_dir = Path(model_dir)
    doc = json.loads((model_dir / "model.json").read_text())
    vecs = _read_matrix(model_dir / "prototypes.bin")
    weights = _read_matrix(model_dir / "weights.bin", dtype="<f8")
    protos = []
    for row, meta in zip(vecs, doc["prototypes"]):
        src = meta["source"]
        protos.append(
            Prototype(
                id=meta["id"],
                class_name=meta["class"],
                vector=row.astype(np.float32),
                source=None
                if src is None
                else PrototypeSource(
                    sample_id=src["sample_id"],
                    cell=tuple(src["cell"]),
                    bbox=tuple(src["bbox"]),
                    frame_range=tuple(src["frame_range"]),
                ),
            )
        )
    return ModelVersion(
        id=doc["id"],
        parent_id=doc["parent_id"],
        recipe_version=doc["recipe_version"],
        sim_cfg=SimilarityConfig(doc["epsilon"]),
        prototypes=protos,
        weights=weights.astype(np.float64),
        train_config=TrainConfig(**doc["train_config"]),
        note=doc.get("note", ""),
    )
