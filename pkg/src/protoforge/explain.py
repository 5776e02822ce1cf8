"""Explanation stack: relevance maps, 2D embeddings, landmark density, radar.

Relevance propagation works on the handcrafted encoder by decomposing each
cell feature into non-negative per-pixel shares (see encoder.pixel_shares)
and distributing relevance with the z+ rule, so conservation holds exactly
at every layer boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import numerics
from .datagen import LANDMARK_NAMES, SampleSequence
from .encoder import EncoderConfig, LatentMap, pixel_shares
from .metrics import MetricsReport
from .model import ModelVersion, forward

_STAB = 1e-12

RADAR_AXES = (
    "prototype_count",
    "accuracy",
    "auc",
    "cross_entropy",
    "cluster",
    "separation",
    "diversity",
    "l1",
)


@dataclass
class RelevanceMap:
    proto_id: str
    sample_id: str
    rgb: np.ndarray  # (H, W) relevance on the rgb frame
    flows: np.ndarray  # (k-1, H, W) relevance per flow field
    total: float  # the propagated maxsim
    argmax_cell: tuple[int, int]

    def mass(self) -> float:
        return float(self.rgb.sum() + self.flows.sum())


def prp_map(
    model: ModelVersion,
    sample: SampleSequence,
    latent: LatentMap,
    proto_id: str,
    enc_cfg: EncoderConfig = EncoderConfig(),
) -> RelevanceMap:
    """Propagate a prototype's maxsim on one sample back to input pixels.

    Seeds the argmax cell with the maxsim, splits it over the cell's D
    features in proportion to each feature's contribution to the negated,
    max-shifted squared distance (features that match the prototype carry
    the similarity), then spreads each feature's relevance over its pixel
    shares. Everything outside the argmax cell's receptive field stays 0.
    """
    j = model.proto_ids.index(proto_id) if proto_id in model.proto_ids else None
    if j is None:
        raise KeyError(f"unknown prototype {proto_id!r}")
    fwd = forward(model, latent)
    h, w = fwd.argmax_cells[j]
    seed = float(fwd.maxsims[j])

    z = latent.grid[h, w].astype(np.float64)
    p = np.asarray(model.prototypes[j].vector, dtype=np.float64)
    dev2 = (z - p) ** 2
    q = dev2.max() - dev2  # negated, shifted: best-matching features dominate
    if q.sum() <= _STAB:
        r_feat = np.full(len(z), seed / len(z))
    else:
        r_feat = seed * q / q.sum()

    k1 = sample.flows.shape[0]
    H, W, _ = sample.rgb.shape
    rgb_rel = np.zeros((H, W))
    flow_rel = np.zeros((k1, H, W))
    c = enc_cfg.cell
    y0, x0 = h * c, w * c
    shares = pixel_shares(sample, (h, w), enc_cfg)
    for rd, (domain, share) in zip(r_feat, shares):
        total = share.sum()
        if total <= _STAB:
            # flat share: keep conservation by spreading uniformly
            share = np.ones_like(share)
            total = share.sum()
        block = rd * share / total
        if domain == "rgb":
            rgb_rel[y0 : y0 + c, x0 : x0 + c] += block
        else:
            flow_rel[:, y0 : y0 + c, x0 : x0 + c] += block
    return RelevanceMap(
        proto_id=proto_id,
        sample_id=sample.sample_id,
        rgb=rgb_rel,
        flows=flow_rel,
        total=seed,
        argmax_cell=(h, w),
    )


# ---------------------------------------------------------------------------
# 2D projection


def project_2d(vectors: Sequence[np.ndarray], method: str = "pca", seed: int = 0):
    """Project length-D vectors to 2D points.

    pca: exact top-2 principal components with a deterministic sign
    convention (the largest-magnitude loading of each axis is positive).
    neighbor_embed: seeded force-directed layout on the k-NN graph
    (k = min(10, n-1), 200 iterations), a rough stand-in for UMAP-style
    neighborhood embedding.
    """
    X = np.asarray([np.asarray(v, dtype=np.float64) for v in vectors])
    n = len(X)
    if n < 3:
        raise ValueError("need at least 3 vectors")
    if method == "pca":
        centered = X - X.mean(axis=0)
        if not np.any(centered):
            raise ValueError("zero-variance input")
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        comps = vt[:2]
        if comps.shape[0] < 2:
            comps = np.vstack([comps, np.zeros((2 - comps.shape[0], X.shape[1]))])
        for i in range(2):
            if np.any(comps[i]):
                lead = np.argmax(np.abs(comps[i]))
                if comps[i][lead] < 0:
                    comps[i] = -comps[i]
        return centered @ comps.T
    if method == "neighbor_embed":
        rng = np.random.default_rng(seed)
        k = min(10, n - 1)
        d2 = ((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=2)
        np.fill_diagonal(d2, np.inf)
        nbrs = np.argsort(d2, axis=1, kind="stable")[:, :k]
        pts = rng.standard_normal((n, 2)) * 0.1
        lr = 0.1
        for it in range(200):
            grad = np.zeros_like(pts)
            # attraction along the k-NN graph
            for i in range(n):
                diff = pts[i] - pts[nbrs[i]]
                grad[i] += diff.sum(axis=0)
                for jj, b in enumerate(nbrs[i]):
                    grad[b] -= diff[jj]
            # global repulsion
            delta = pts[:, None, :] - pts[None, :, :]
            dist2 = (delta**2).sum(axis=2) + 1e-6
            rep = delta / dist2[:, :, None]
            grad -= 0.05 * rep.sum(axis=1)
            pts = pts - lr * grad / max(k, 1)
        return pts
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# landmark density


@dataclass
class DensityHistogram:
    counts: dict  # landmark name -> {"pristine": n, "manipulated": n}

    def total(self) -> int:
        return sum(sum(v.values()) for v in self.counts.values())

    def as_dict(self) -> dict:
        return {k: dict(v) for k, v in self.counts.items()}


def landmark_density(
    model: ModelVersion, landmarks_by_sample: Mapping[str, Mapping[str, tuple]]
) -> DensityHistogram:
    """Histogram of prototypes over the landmark nearest each crop center.

    Ties break by the fixed landmark ordering. Every prototype must be
    projected (have a source) and its source sample must have landmarks.
    """
    counts = {name: {"pristine": 0, "manipulated": 0} for name in LANDMARK_NAMES}
    for p in model.prototypes:
        if p.source is None:
            raise ValueError(f"prototype {p.id} is not projected")
        marks = landmarks_by_sample.get(p.source.sample_id)
        if marks is None:
            raise KeyError(f"no landmarks for sample {p.source.sample_id!r}")
        x0, y0, x1, y1 = p.source.bbox
        cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
        best = None
        for name in LANDMARK_NAMES:
            lx, ly = marks[name]
            d = (lx - cx) ** 2 + (ly - cy) ** 2
            if best is None or d < best[0]:
                best = (d, name)
        counts[best[1]][p.class_name] += 1
    return DensityHistogram(counts)


# ---------------------------------------------------------------------------
# radar summary


@dataclass
class RadarSeries:
    axes: tuple
    initial: list  # all 100.0 (or absolute-flagged)
    current: list
    candidate: list
    absolute_axes: list  # axis names where initial was 0 and values are absolute
    deltas: dict  # candidate vs current relative change in percent per axis

    def as_dict(self) -> dict:
        return {
            "axes": list(self.axes),
            "initial": self.initial,
            "current": self.current,
            "candidate": self.candidate,
            "absolute_axes": self.absolute_axes,
            "deltas": self.deltas,
        }


def _axis_values(report: MetricsReport) -> list:
    return [
        float(report.prototype_count),
        report.accuracy,
        report.auc,
        report.loss.cross_entropy,
        report.loss.cluster,
        report.loss.separation,
        report.loss.diversity,
        report.loss.l1,
    ]


def radar_data(
    initial: MetricsReport, current: MetricsReport, candidate: MetricsReport
) -> RadarSeries:
    """Three radar series normalized to the initial model (initial = 100%).

    Axes whose initial value is 0 cannot be expressed as percentages; they
    are listed in absolute_axes and carried through unscaled.
    """
    vi = _axis_values(initial)
    vc = _axis_values(current)
    vn = _axis_values(candidate)
    init_s, cur_s, cand_s, absolute = [], [], [], []
    for name, a, b, c in zip(RADAR_AXES, vi, vc, vn):
        if a == 0.0:
            absolute.append(name)
            init_s.append(0.0)
            cur_s.append(b)
            cand_s.append(c)
        else:
            init_s.append(100.0)
            cur_s.append(100.0 * b / a)
            cand_s.append(100.0 * c / a)
    deltas = {}
    for name, b, c in zip(RADAR_AXES, vc, vn):
        deltas[name] = 100.0 * (c - b) / b if b != 0.0 else (c - b)
    return RadarSeries(
        axes=RADAR_AXES,
        initial=init_s,
        current=cur_s,
        candidate=cand_s,
        absolute_axes=absolute,
        deltas=deltas,
    )
