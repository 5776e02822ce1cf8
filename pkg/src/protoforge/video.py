"""Video-level inference: per-window predictions, per-prototype contribution
traces, and temporal-range aggregation.

A video is an ordered list of non-overlapping windows, each one sample (one
RGB frame plus its k-1 flow fields). Charts that plot per frame repeat each
window's values across its k frames; predictions only exist per window.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .encoder import EncoderConfig
from .datagen import SampleSequence
from .model import EncodedSample, ModelVersion, encode_samples, forward


@dataclass
class VideoRecord:
    id: str
    title: str
    fps: float
    windows: list  # ordered SampleSequences at stride k

    def __post_init__(self):
        if not self.windows:
            raise ValueError("video needs at least one window")
        shapes = {w.rgb.shape for w in self.windows}
        if len(shapes) != 1:
            raise ValueError("all windows must share dimensions")

    @property
    def k(self) -> int:
        return self.windows[0].k

    @property
    def frame_count(self) -> int:
        return len(self.windows) * self.k

    def frame_span(self, t: int) -> tuple:
        return (t * self.k, t * self.k + self.k - 1)

    @classmethod
    def from_samples(
        cls, video_id: str, samples: Sequence[SampleSequence],
        title: str = "", fps: float = 25.0,
    ) -> "VideoRecord":
        return cls(id=video_id, title=title or video_id, fps=fps, windows=list(samples))


@dataclass
class WindowResult:
    t: int
    frame_span: tuple
    maxsims: np.ndarray  # (P,)
    contributions: np.ndarray  # (P, 2)
    logits: np.ndarray  # (2,)
    probs: np.ndarray  # (2,)


@dataclass
class PredictionTrace:
    video_id: str
    model_version: str
    proto_ids: list
    windows: list  # WindowResult

    def as_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "model_version": self.model_version,
            "proto_ids": list(self.proto_ids),
            "windows": [
                {
                    "t": w.t,
                    "frame_span": list(w.frame_span),
                    "maxsims": [float(v) for v in w.maxsims],
                    "contributions": [[float(a), float(b)] for a, b in w.contributions],
                    "logits": [float(v) for v in w.logits],
                    "probs": [float(v) for v in w.probs],
                }
                for w in self.windows
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=1, sort_keys=True)


def predict_video(
    model: ModelVersion, video: VideoRecord, enc_cfg: EncoderConfig = EncoderConfig()
) -> PredictionTrace:
    """One forward pass per window; contributions sum to the logits exactly."""
    encoded = encode_samples(video.windows, enc_cfg)
    results = []
    for t, es in enumerate(encoded):
        fwd = forward(model, es.latent)
        contribs = model.weights.astype(np.float64) * fwd.maxsims[:, None]
        logits = contribs.sum(axis=0)  # bitwise identical to fwd.logits
        results.append(
            WindowResult(
                t=t,
                frame_span=video.frame_span(t),
                maxsims=fwd.maxsims,
                contributions=contribs,
                logits=logits,
                probs=fwd.probs,
            )
        )
    return PredictionTrace(
        video_id=video.id,
        model_version=model.id,
        proto_ids=list(model.proto_ids),
        windows=results,
    )


def _windows_in_range(trace: PredictionTrace, a: int, b: int) -> list:
    if a > b:
        raise ValueError(f"empty frame range [{a}, {b}]")
    hit = [
        w for w in trace.windows
        if not (w.frame_span[1] < a or w.frame_span[0] > b)
    ]
    if not hit:
        raise ValueError(f"frame range [{a}, {b}] intersects no window")
    return hit


def aggregate(trace: PredictionTrace, a: int, b: int) -> dict:
    """Unweighted mean over windows intersecting [a, b] (frame numbers).

    Partial windows count fully; window boundaries are surfaced so a UI can
    display the granularity.
    """
    hit = _windows_in_range(trace, a, b)
    probs = np.mean([w.probs for w in hit], axis=0)
    contribs = np.mean([w.contributions for w in hit], axis=0)
    order = sorted(hit, key=lambda w: (-w.probs[1], w.t))
    return {
        "frame_range": [a, b],
        "windows": [w.t for w in hit],
        "mean_probs": [float(v) for v in probs],
        "mean_contributions": [[float(x), float(y)] for x, y in contribs],
        "top_windows": [w.t for w in order[: min(3, len(order))]],
    }


def top_contributors(
    trace: PredictionTrace, a: int, b: int, class_idx: int, n: int
) -> list:
    """Prototypes by descending mean contribution to one class over a range.

    Ties break by prototype id; n larger than P clamps to P.
    """
    if class_idx not in (0, 1):
        raise ValueError("class_idx must be 0 or 1")
    hit = _windows_in_range(trace, a, b)
    means = np.mean([w.contributions[:, class_idx] for w in hit], axis=0)
    order = sorted(
        range(len(means)), key=lambda j: (-means[j], trace.proto_ids[j])
    )
    n = min(n, len(means))
    return [
        {"proto_id": trace.proto_ids[j], "mean_contribution": float(means[j])}
        for j in order[:n]
    ]


def save_trace(trace: PredictionTrace, path: Path | str) -> Path:
    path = Path(path)
    path.write_text(trace.to_json())
    return path
