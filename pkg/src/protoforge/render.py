"""PNG rendering: sample frames, flow fields, prototype strips, and
relevance overlays. Pillow only; all outputs deterministic."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .datagen import SampleSequence
from .explain import RelevanceMap
from .model import ModelVersion

_SCALE = 4  # upscale factor for 64 px desk samples


def _to_image(arr01: np.ndarray) -> Image.Image:
    a = np.clip(arr01, 0.0, 1.0)
    img = Image.fromarray((a * 255.0 + 0.5).astype(np.uint8))
    return img.resize((img.width * _SCALE, img.height * _SCALE), Image.NEAREST)


def render_rgb(sample: SampleSequence, bbox=None) -> Image.Image:
    """The sample's RGB frame, optionally with a highlighted patch outline."""
    img = _to_image(sample.rgb)
    if bbox is not None:
        x0, y0, x1, y1 = [v * _SCALE for v in bbox]
        draw = ImageDraw.Draw(img)
        draw.rectangle([x0, y0, x1 - 1, y1 - 1], outline=(255, 220, 0), width=2)
    return img


def render_flow(field: np.ndarray) -> Image.Image:
    """One flow field as an HSV wheel: hue = direction, value = magnitude."""
    dx, dy = field[..., 0].astype(np.float64), field[..., 1].astype(np.float64)
    mag = np.hypot(dx, dy)
    ang = np.mod(np.arctan2(dy, dx), 2 * np.pi)
    h = (ang / (2 * np.pi) * 255.0).astype(np.uint8)
    s = np.full_like(h, 255)
    vmax = max(mag.max(), 1e-9)
    v = (np.clip(mag / vmax, 0, 1) * 255.0).astype(np.uint8)
    hsv = np.stack([h, s, v], axis=-1)
    img = Image.fromarray(hsv, mode="HSV").convert("RGB")
    return img.resize((img.width * _SCALE, img.height * _SCALE), Image.NEAREST)


def prototype_strip(sample: SampleSequence, bbox) -> Image.Image:
    """RGB frame plus every flow field side by side, patch outlined."""
    tiles = [render_rgb(sample, bbox)]
    for f in range(sample.flows.shape[0]):
        tiles.append(render_flow(sample.flows[f]))
    w = sum(t.width for t in tiles)
    h = max(t.height for t in tiles)
    strip = Image.new("RGB", (w, h))
    x = 0
    for t in tiles:
        strip.paste(t, (x, 0))
        x += t.width
    return strip


def relevance_overlay(sample: SampleSequence, rel: RelevanceMap) -> Image.Image:
    """RGB frame with relevance as a red heat layer (alpha by relevance)."""
    base = np.clip(sample.rgb.astype(np.float64), 0, 1)
    total = rel.rgb + rel.flows.sum(axis=0)
    vmax = max(total.max(), 1e-12)
    alpha = (total / vmax)[..., None]
    heat = np.array([1.0, 0.1, 0.1])[None, None, :]
    mixed = (1 - 0.75 * alpha) * base + 0.75 * alpha * heat
    return _to_image(mixed)


def render_model(
    model: ModelVersion, samples_by_id: dict, out_dir: Path | str
) -> list:
    """Write one strip per projected prototype; returns written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for p in model.prototypes:
        if p.source is None:
            continue
        sample = samples_by_id.get(p.source.sample_id)
        if sample is None:
            continue
        img = prototype_strip(sample, p.source.bbox)
        path = out_dir / f"{p.id}.png"
        img.save(path)
        written.append(path)
    return written
