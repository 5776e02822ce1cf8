"""Deterministic synthetic dataset: face-like frames plus flow fields with
planted, landmark-localized manipulation artifacts.

Every sample is one RGB frame and k-1 flow fields. Pristine videos carry only
smooth global motion; manipulated videos carry exactly one artifact
(seam_edge, blur_patch or flow_flicker) centered near a facial landmark, so
artifact geometry is known ground truth.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

PRISTINE = "pristine"
MANIPULATED = "manipulated"
LABELS = (PRISTINE, MANIPULATED)

GENERATOR_VERSION = "datagen-v1"
SAMPLE_MAGIC = b"PFSQ"
SAMPLE_FORMAT_VERSION = 1

# Canonical landmark layout in relative (x, y) image coordinates. Order is
# fixed: it is the tie-break order for landmark assignment downstream.
LANDMARK_NAMES = (
    "left_eye",
    "right_eye",
    "nose",
    "mouth",
    "chin",
    "hairline",
    "left_cheek",
    "right_cheek",
)
_CANONICAL = {
    "left_eye": (0.35, 0.40),
    "right_eye": (0.65, 0.40),
    "nose": (0.50, 0.54),
    "mouth": (0.50, 0.70),
    "chin": (0.50, 0.86),
    "hairline": (0.50, 0.14),
    "left_cheek": (0.28, 0.60),
    "right_cheek": (0.72, 0.60),
}

ARTIFACT_KINDS = ("seam_edge", "blur_patch", "flow_flicker")
FLICKER_MAGNITUDE = 3.0
LANDMARK_TOLERANCE_PX = 6.0


class SampleFormatError(ValueError):
    """File is not a sample file (bad magic or corrupt header)."""


class SampleVersionError(ValueError):
    """Sample file written by an unsupported format version."""


class SampleTruncatedError(ValueError):
    """Sample payload shorter than the header promises."""


@dataclass
class Artifact:
    landmark_name: str
    patch_bbox: tuple[int, int, int, int]  # (x0, y0, x1, y1), exclusive end
    kind: str
    flicker_angle: float = 0.0  # flow direction, flow_flicker only


@dataclass
class SampleSequence:
    rgb: np.ndarray  # (H, W, 3) float32 in [0, 1]
    flows: np.ndarray  # (k-1, H, W, 2) float32
    label: str
    landmarks: dict[str, tuple[float, float]]
    source_id: str
    frame_index: int
    artifact: Optional[Artifact] = None

    @property
    def sample_id(self) -> str:
        return f"{self.source_id}_f{self.frame_index}"

    @property
    def k(self) -> int:
        return self.flows.shape[0] + 1

    def validate(self) -> None:
        h, w, _ = self.rgb.shape
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}")
        if (self.label == MANIPULATED) != (self.artifact is not None):
            raise ValueError("artifact present iff label is manipulated")
        for name, (x, y) in self.landmarks.items():
            if not (0 <= x < w and 0 <= y < h):
                raise ValueError(f"landmark {name} outside image: ({x}, {y})")


@dataclass
class DataConfig:
    height: int = 64
    width: int = 64
    k: int = 10
    train_samples: int = 200
    test_samples: int = 100
    manipulated_fraction: float = 0.5
    artifact_kinds: tuple[str, ...] = ARTIFACT_KINDS
    seed: int = 42
    frames_per_video: int = 2
    global_motion_bound: float = 1.0

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if self.height < 32 or self.width < 32:
            raise ValueError("image size must be at least 32x32")
        if not (0.0 < self.manipulated_fraction < 1.0):
            raise ValueError("manipulated_fraction must be in (0, 1)")
        bad = set(self.artifact_kinds) - set(ARTIFACT_KINDS)
        if bad:
            raise ValueError(f"unknown artifact kinds: {sorted(bad)}")


@dataclass
class ManifestEntry:
    sample_id: str
    path: str
    label: str
    source_id: str
    frame_index: int
    split: str


@dataclass
class DatasetManifest:
    seed: int
    k: int
    height: int
    width: int
    generator_version: str
    counts: dict
    samples: list[ManifestEntry] = field(default_factory=list)
    root: Optional[Path] = None

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.samples if e.split == name]


# ---------------------------------------------------------------------------
# rendering


def _landmarks_for_video(h: int, w: int, rng: np.random.Generator):
    marks = {}
    for name in LANDMARK_NAMES:
        cx, cy = _CANONICAL[name]
        x = cx * w + rng.uniform(-3.0, 3.0)
        y = cy * h + rng.uniform(-3.0, 3.0)
        marks[name] = (float(np.clip(x, 1, w - 2)), float(np.clip(y, 1, h - 2)))
    return marks


def _gaussian_blob(xs, ys, cx, cy, sigma):
    return np.exp(-(((xs - cx) ** 2) + ((ys - cy) ** 2)) / (2.0 * sigma**2))


def _render_face(h: int, w: int, marks: dict, rng: np.random.Generator) -> np.ndarray:
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.zeros((h, w, 3))
    base = np.array([0.30, 0.32, 0.36]) + rng.uniform(-0.04, 0.04, 3)
    for c in range(3):
        img[:, :, c] = base[c] + 0.08 * xs / w + 0.05 * ys / h

    # soft elliptical face
    cx, cy = 0.5 * w, 0.54 * h
    q = ((xs - cx) / (0.34 * w)) ** 2 + ((ys - cy) / (0.42 * h)) ** 2
    face = 1.0 / (1.0 + np.exp(8.0 * (q - 1.0)))
    skin = np.array([0.78, 0.62, 0.52]) + rng.uniform(-0.05, 0.05, 3)
    for c in range(3):
        img[:, :, c] = img[:, :, c] * (1 - face) + skin[c] * face

    for name, depth, sigma in (
        ("left_eye", 0.45, 1.8),
        ("right_eye", 0.45, 1.8),
        ("mouth", 0.35, 2.2),
    ):
        mx, my = marks[name]
        blob = _gaussian_blob(xs, ys, mx, my, sigma)
        for c in range(3):
            img[:, :, c] -= depth * blob
    nx, ny = marks["nose"]
    ridge = _gaussian_blob(xs, ys, nx, ny, 2.5)
    for c in range(3):
        img[:, :, c] += 0.10 * ridge

    # low-frequency per-video texture
    fx, fy = rng.uniform(1.0, 3.0, 2)
    px, py = rng.uniform(0, 2 * np.pi, 2)
    img += 0.02 * np.sin(2 * np.pi * fx * xs / w + px)[:, :, None]
    img += 0.02 * np.sin(2 * np.pi * fy * ys / h + py)[:, :, None]
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def _render_flows(h, w, k, rng: np.random.Generator, bound: float) -> np.ndarray:
    theta = rng.uniform(0, 2 * np.pi)
    mag = rng.uniform(0.2, 0.7 * bound)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    px, py = rng.uniform(0, 2 * np.pi, 2)
    ripple = 0.08 * np.sin(2 * np.pi * xs / w + px) * np.cos(2 * np.pi * ys / h + py)
    flows = np.zeros((k - 1, h, w, 2))
    for f in range(k - 1):
        a = theta + 0.1 * f
        flows[f, :, :, 0] = mag * np.cos(a) + ripple
        flows[f, :, :, 1] = mag * np.sin(a) - ripple
    return flows.astype(np.float32)


def _choose_artifact(kind, marks, rng: np.random.Generator, h, w) -> Artifact:
    # Patch corners snap to an 8 px grid: the snapped center stays within the
    # landmark tolerance, and aligned patches make the artifact footprint
    # independent of sub-cell placement.
    name = str(rng.choice(LANDMARK_NAMES))
    lx, ly = marks[name]
    size = int(rng.choice([8, 16]))
    half = size // 2
    x0 = int(np.clip(round((lx - half) / 8.0) * 8, 0, w - size))
    y0 = int(np.clip(round((ly - half) / 8.0) * 8, 0, h - size))
    art = Artifact(landmark_name=name, patch_bbox=(x0, y0, x0 + size, y0 + size), kind=kind)
    if kind == "flow_flicker":
        art.flicker_angle = float(rng.uniform(0, 2 * np.pi))
    return art


def _apply_artifact(rgb, flows, art: Artifact):
    x0, y0, x1, y1 = art.patch_bbox
    size = x1 - x0
    kind = art.kind

    if kind == "seam_edge":
        ys, xs = np.mgrid[y0:y1, x0:x1].astype(np.float64)
        r = np.hypot(xs - (x0 + x1 - 1) / 2.0, ys - (y0 + y1 - 1) / 2.0)
        ring = np.abs(r - (size / 2.0 - 2.0)) < 1.5
        checker = ((xs.astype(int) + ys.astype(int)) % 2).astype(np.float64)
        patch = rgb[y0:y1, x0:x1, :]
        for c in range(3):
            ch = patch[:, :, c]
            ch[ring] = np.where(checker[ring] > 0, 0.95, 0.05)
    elif kind == "blur_patch":
        patch = rgb[y0:y1, x0:x1, :]
        rgb[y0:y1, x0:x1, :] = patch.mean(axis=(0, 1), keepdims=True)
    elif kind == "flow_flicker":
        ang = art.flicker_angle
        vec = FLICKER_MAGNITUDE * np.array([np.cos(ang), np.sin(ang)])
        for f in range(flows.shape[0]):
            sign = 1.0 if f % 2 == 0 else -1.0
            flows[f, y0:y1, x0:x1, 0] = sign * vec[0]
            flows[f, y0:y1, x0:x1, 1] = sign * vec[1]
    else:
        raise ValueError(f"unknown artifact kind {kind!r}")


def _make_video(
    cfg: DataConfig, source_idx: int, label: str, rng: np.random.Generator
) -> list[SampleSequence]:
    h, w = cfg.height, cfg.width
    source_id = f"vid{source_idx:04d}"
    marks = _landmarks_for_video(h, w, rng)
    rgb = _render_face(h, w, marks, rng)
    kind = str(rng.choice(list(cfg.artifact_kinds))) if label == MANIPULATED else None

    artifact = (
        _choose_artifact(kind, marks, rng, h, w) if label == MANIPULATED else None
    )
    samples = []
    for fi in range(cfg.frames_per_video):
        frame_rgb = rgb.copy().astype(np.float64)
        # mild per-frame brightness drift so frames differ
        frame_rgb = np.clip(frame_rgb + 0.01 * fi, 0.0, 1.0)
        flows = _render_flows(h, w, cfg.k, rng, cfg.global_motion_bound).astype(
            np.float64
        )
        if artifact is not None:
            _apply_artifact(frame_rgb, flows, artifact)
        samples.append(
            SampleSequence(
                rgb=frame_rgb.astype(np.float32),
                flows=flows.astype(np.float32),
                label=label,
                landmarks=dict(marks),
                source_id=source_id,
                frame_index=fi * cfg.k,
                artifact=None
                if artifact is None
                else Artifact(
                    artifact.landmark_name,
                    artifact.patch_bbox,
                    artifact.kind,
                    artifact.flicker_angle,
                ),
            )
        )
    return samples


# ---------------------------------------------------------------------------
# persistence


def store_sample(sample: SampleSequence, path: Path | str) -> Path:
    """Write the PFSQ binary: magic, u16 version, u32 header length, JSON
    header, then little-endian float32 rgb and flow payloads."""
    sample.validate()
    path = Path(path)
    h, w, _ = sample.rgb.shape
    header = {
        "h": h,
        "w": w,
        "k": sample.k,
        "label": sample.label,
        "source_id": sample.source_id,
        "frame_index": sample.frame_index,
        "landmarks": {n: list(xy) for n, xy in sorted(sample.landmarks.items())},
        "artifact": None
        if sample.artifact is None
        else {
            "landmark_name": sample.artifact.landmark_name,
            "patch_bbox": list(sample.artifact.patch_bbox),
            "kind": sample.artifact.kind,
            "flicker_angle": sample.artifact.flicker_angle,
        },
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(SAMPLE_MAGIC)
        fh.write(struct.pack("<HI", SAMPLE_FORMAT_VERSION, len(hbytes)))
        fh.write(hbytes)
        fh.write(np.ascontiguousarray(sample.rgb, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(sample.flows, dtype="<f4").tobytes())
    return path


def load_sample_header(path: Path | str) -> dict:
    """Read only the JSON header of a PFSQ file (landmarks, label, artifact)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SAMPLE_MAGIC:
            raise SampleFormatError(f"{path}: not a PFSQ sample file")
        version, hlen = struct.unpack("<HI", fh.read(6))
        if version != SAMPLE_FORMAT_VERSION:
            raise SampleVersionError(f"{path}: unsupported version {version}")
        try:
            return json.loads(fh.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise SampleFormatError(f"{path}: corrupt header") from exc


def load_sample(path: Path | str) -> SampleSequence:
    raw = Path(path).read_bytes()
    if len(raw) < 10 or raw[:4] != SAMPLE_MAGIC:
        raise SampleFormatError(f"{path}: not a PFSQ sample file")
    version, hlen = struct.unpack("<HI", raw[4:10])
    if version != SAMPLE_FORMAT_VERSION:
        raise SampleVersionError(f"{path}: unsupported version {version}")
    try:
        header = json.loads(raw[10 : 10 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SampleFormatError(f"{path}: corrupt header") from exc
    h, w, k = header["h"], header["w"], header["k"]
    n_rgb = h * w * 3
    n_flow = (k - 1) * h * w * 2
    payload = raw[10 + hlen :]
    if len(payload) < 4 * (n_rgb + n_flow):
        raise SampleTruncatedError(
            f"{path}: payload {len(payload)} bytes, expected {4 * (n_rgb + n_flow)}"
        )
    rgb = np.frombuffer(payload[: 4 * n_rgb], dtype="<f4").reshape(h, w, 3)
    flows = np.frombuffer(payload[4 * n_rgb : 4 * (n_rgb + n_flow)], dtype="<f4")
    flows = flows.reshape(k - 1, h, w, 2)
    art = header["artifact"]
    return SampleSequence(
        rgb=rgb.copy(),
        flows=flows.copy(),
        label=header["label"],
        landmarks={n: (xy[0], xy[1]) for n, xy in header["landmarks"].items()},
        source_id=header["source_id"],
        frame_index=header["frame_index"],
        artifact=None
        if art is None
        else Artifact(
            art["landmark_name"],
            tuple(art["patch_bbox"]),
            art["kind"],
            art.get("flicker_angle", 0.0),
        ),
    )


def generate_dataset(cfg: DataConfig, out_dir: Path | str) -> DatasetManifest:
    """Generate both splits under `out_dir` and write manifest.json.

    Deterministic for a fixed config: all randomness flows from cfg.seed.
    Splits are disjoint by source_id.
    """
    out_dir = Path(out_dir)
    sample_dir = out_dir / "samples"
    sample_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)

    manifest = DatasetManifest(
        seed=cfg.seed,
        k=cfg.k,
        height=cfg.height,
        width=cfg.width,
        generator_version=GENERATOR_VERSION,
        counts={},
        root=out_dir,
    )
    source_idx = 0
    for split, n_samples in (("train", cfg.train_samples), ("test", cfg.test_samples)):
        n_sources = -(-n_samples // cfg.frames_per_video)
        n_manip = int(round(cfg.manipulated_fraction * n_sources))
        labels = [MANIPULATED] * n_manip + [PRISTINE] * (n_sources - n_manip)
        emitted = 0
        counts = {PRISTINE: 0, MANIPULATED: 0}
        for label in labels:
            for sample in _make_video(cfg, source_idx, label, rng):
                if emitted >= n_samples:
                    break
                rel = f"samples/{sample.sample_id}.pfsq"
                store_sample(sample, out_dir / rel)
                manifest.samples.append(
                    ManifestEntry(
                        sample_id=sample.sample_id,
                        path=rel,
                        label=label,
                        source_id=sample.source_id,
                        frame_index=sample.frame_index,
                        split=split,
                    )
                )
                counts[label] += 1
                emitted += 1
            source_idx += 1
        manifest.counts[split] = counts

    save_manifest(manifest, out_dir / "manifest.json")
    return manifest


def save_manifest(manifest: DatasetManifest, path: Path | str) -> None:
    doc = {
        "seed": manifest.seed,
        "k": manifest.k,
        "height": manifest.height,
        "width": manifest.width,
        "generator_version": manifest.generator_version,
        "counts": manifest.counts,
        "samples": [
            {
                "sample_id": e.sample_id,
                "path": e.path,
                "label": e.label,
                "source_id": e.source_id,
                "frame_index": e.frame_index,
                "split": e.split,
            }
            for e in manifest.samples
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def load_manifest(path: Path | str) -> DatasetManifest:
    path = Path(path)
    doc = json.loads(path.read_text())
    manifest = DatasetManifest(
        seed=doc["seed"],
        k=doc["k"],
        height=doc["height"],
        width=doc["width"],
        generator_version=doc["generator_version"],
        counts=doc["counts"],
        root=path.parent,
    )
    manifest.samples = [ManifestEntry(**e) for e in doc["samples"]]
    return manifest


def load_split(manifest: DatasetManifest, split: str) -> list[SampleSequence]:
    return [load_sample(manifest.root / e.path) for e in manifest.split(split)]


def mean_abs_flow_in_patch(sample: SampleSequence, bbox=None) -> float:
    """Oracle feature: mean |flow| inside a patch (artifact bbox by default).

    A threshold on this alone separates flow_flicker samples from pristine
    ones, which is what makes the dataset separable by construction.
    """
    if bbox is None:
        if sample.artifact is None:
            raise ValueError("sample has no artifact and no bbox given")
        bbox = sample.artifact.patch_bbox
    x0, y0, x1, y1 = bbox
    return float(np.abs(sample.flows[:, y0:y1, x0:x1, :]).mean())
