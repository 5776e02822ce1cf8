"""Activation caching and fast prototype refinement.

The central trick: during (re)training only the class layer moves, so the
per-sample max-similarity matrix is a sufficient statistic. Deleting a
prototype is dropping columns from that matrix; replacing one costs a single
distance pass per cached latent map. Both end in the same convex last-layer
optimization as full training, which makes the fast path not an
approximation but the exact computation with the redundant work removed.

Refinement follows a dry-run/commit protocol: every operation produces an
ImpactReport with a staleness token; committing applies the candidate model
and invalidates all outstanding tokens.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from . import metrics, numerics
from .datagen import LABELS
from .explain import DensityHistogram, RadarSeries, landmark_density, radar_data
from .metrics import MetricsReport, report_from_maxsims
from .model import (
    EncodedSample,
    ModelVersion,
    Prototype,
    PrototypeSource,
    forward,
    label_index,
    optimize_last_layer,
    save_model,
    load_model,
)

CACHE_MAGIC = b"PFAC"
CACHE_FORMAT_VERSION = 1


class StaleCacheError(ValueError):
    """Cache alignment or recipe does not match the model in use."""


class StaleReportError(ValueError):
    """Commit attempted with a token that is no longer valid."""


class EmptyClassError(ValueError):
    """Operation would leave a class without prototypes."""


# ---------------------------------------------------------------------------
# activation cache


@dataclass
class CacheEntry:
    sample_id: str
    label: str
    latent: np.ndarray  # (H', W', D) float32
    maxsims: np.ndarray  # (P,) float64, aligned to the cache's proto_ids
    frame_index: int = 0
    k: int = 10


@dataclass
class ActivationCache:
    split: str
    recipe_version: str
    model_id: str
    proto_ids: list
    cell: int
    entries: list

    @property
    def labels(self) -> list:
        return [e.label for e in self.entries]

    @property
    def sample_ids(self) -> list:
        return [e.sample_id for e in self.entries]

    def maxsims_matrix(self) -> np.ndarray:
        return np.stack([e.maxsims for e in self.entries])

    def maxsims_for(self, model: ModelVersion) -> np.ndarray:
        if self.proto_ids != model.proto_ids or self.model_id != model.id:
            raise StaleCacheError(
                f"cache built for model {self.model_id} / {self.proto_ids}, "
                f"got {model.id} / {model.proto_ids}"
            )
        if self.recipe_version != model.recipe_version:
            raise StaleCacheError(
                f"cache recipe {self.recipe_version} != model {model.recipe_version}"
            )
        return self.maxsims_matrix()

    def entry_by_id(self, sample_id: str) -> CacheEntry:
        for e in self.entries:
            if e.sample_id == sample_id:
                return e
        raise KeyError(f"sample {sample_id!r} not in cache")


def build_cache(
    model: ModelVersion, samples: Sequence[EncodedSample], split: str
) -> ActivationCache:
    """Cache latent maps and exact forward maxsims for one split."""
    entries = []
    for es in samples:
        if es.latent.recipe_version != model.recipe_version:
            raise StaleCacheError(
                f"sample {es.sample_id} encoded with {es.latent.recipe_version}, "
                f"model wants {model.recipe_version}"
            )
        fwd = forward(model, es.latent)
        entries.append(
            CacheEntry(
                sample_id=es.sample_id,
                label=es.label,
                latent=np.asarray(es.latent.grid, dtype=np.float32),
                maxsims=np.asarray(fwd.maxsims, dtype=np.float64),
                frame_index=es.frame_index,
                k=es.k,
            )
        )
    return ActivationCache(
        split=split,
        recipe_version=model.recipe_version,
        model_id=model.id,
        proto_ids=list(model.proto_ids),
        cell=samples[0].latent.cell if samples else 8,
        entries=entries,
    )


def save_cache(cache: ActivationCache, path: Path | str) -> Path:
    """PFAC binary: magic, u16 version, u32 header length, JSON header, then
    per entry the float32 latent block and float64 maxsims block."""
    path = Path(path)
    header = {
        "split": cache.split,
        "recipe_version": cache.recipe_version,
        "model_id": cache.model_id,
        "proto_ids": cache.proto_ids,
        "cell": cache.cell,
        "entries": [
            {
                "sample_id": e.sample_id,
                "label": e.label,
                "shape": list(e.latent.shape),
                "frame_index": e.frame_index,
                "k": e.k,
            }
            for e in cache.entries
        ],
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<HI", CACHE_FORMAT_VERSION, len(hbytes)))
        fh.write(hbytes)
        for e in cache.entries:
            fh.write(np.ascontiguousarray(e.latent, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(e.maxsims, dtype="<f8").tobytes())
    return path


def load_cache(path: Path | str, verify_with: Optional[ModelVersion] = None) -> ActivationCache:
    raw = Path(path).read_bytes()
    if raw[:4] != CACHE_MAGIC:
        raise StaleCacheError(f"{path}: not a PFAC cache file")
    version, hlen = struct.unpack("<HI", raw[4:10])
    if version != CACHE_FORMAT_VERSION:
        raise StaleCacheError(f"{path}: unsupported cache version {version}")
    header = json.loads(raw[10 : 10 + hlen].decode("utf-8"))
    off = 10 + hlen
    entries = []
    P = len(header["proto_ids"])
    for meta in header["entries"]:
        shape = tuple(meta["shape"])
        n_lat = int(np.prod(shape))
        latent = np.frombuffer(raw[off : off + 4 * n_lat], dtype="<f4").reshape(shape).copy()
        off += 4 * n_lat
        maxsims = np.frombuffer(raw[off : off + 8 * P], dtype="<f8").copy()
        off += 8 * P
        entries.append(
            CacheEntry(
                sample_id=meta["sample_id"],
                label=meta["label"],
                latent=latent,
                maxsims=maxsims,
                frame_index=meta.get("frame_index", 0),
                k=meta.get("k", 10),
            )
        )
    cache = ActivationCache(
        split=header["split"],
        recipe_version=header["recipe_version"],
        model_id=header["model_id"],
        proto_ids=list(header["proto_ids"]),
        cell=header["cell"],
        entries=entries,
    )
    if verify_with is not None and entries:
        # spot-check: recompute maxsims for the first, middle and last sample
        picks = sorted({0, len(entries) // 2, len(entries) - 1})
        for i in picks:
            fwd = forward(verify_with, entries[i].latent)
            if not np.array_equal(fwd.maxsims, entries[i].maxsims):
                raise StaleCacheError(
                    f"{path}: stored maxsims for {entries[i].sample_id} do not "
                    "match recomputation"
                )
    return cache


# ---------------------------------------------------------------------------
# patch index and candidates


@dataclass(frozen=True)
class CandidateEntry:
    sample_id: str
    cell: tuple  # (h, w)
    label: str
    vector: tuple  # latent features, tuple for hashability
    bbox: tuple  # input-pixel (x0, y0, x1, y1)
    frame_range: tuple

    def vector_array(self) -> np.ndarray:
        return np.asarray(self.vector, dtype=np.float32)

    def as_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "cell": list(self.cell),
            "label": self.label,
            "bbox": list(self.bbox),
            "frame_range": list(self.frame_range),
        }


@dataclass
class PatchIndex:
    entries: list

    @classmethod
    def from_cache(cls, cache: ActivationCache) -> "PatchIndex":
        entries = []
        for e in sorted(cache.entries, key=lambda e: e.sample_id):
            gh, gw, _ = e.latent.shape
            for h in range(gh):
                for w in range(gw):
                    c = cache.cell
                    entries.append(
                        CandidateEntry(
                            sample_id=e.sample_id,
                            cell=(h, w),
                            label=e.label,
                            vector=tuple(float(v) for v in e.latent[h, w]),
                            bbox=(w * c, h * c, (w + 1) * c, (h + 1) * c),
                            frame_range=(e.frame_index, e.frame_index + e.k - 1),
                        )
                    )
        return cls(entries)

    def find(self, sample_id: str, cell: tuple) -> CandidateEntry:
        for e in self.entries:
            if e.sample_id == sample_id and tuple(e.cell) == tuple(cell):
                return e
        raise KeyError(f"no candidate at {sample_id!r} {cell}")


# ---------------------------------------------------------------------------
# refinement ops and reports


@dataclass
class RefinementOp:
    kind: str  # "delete" | "replace"
    delete_ids: tuple = ()
    proto_id: Optional[str] = None  # replace target; None appends a new slot
    candidate: Optional[CandidateEntry] = None

    def __post_init__(self):
        if self.kind not in ("delete", "replace"):
            raise ValueError(f"unknown op kind {self.kind!r}")
        if self.kind == "delete" and not self.delete_ids:
            raise ValueError("delete op needs at least one prototype id")
        if self.kind == "replace" and self.candidate is None:
            raise ValueError("replace op needs a candidate")

    def describe(self) -> str:
        if self.kind == "delete":
            return "deleted " + ",".join(self.delete_ids)
        target = self.proto_id if self.proto_id else "new slot"
        return (
            f"replaced {target} with {self.candidate.sample_id}"
            f"@{self.candidate.cell}"
        )


@dataclass
class ImpactReport:
    op: RefinementOp
    model: ModelVersion  # candidate, uncommitted
    before: MetricsReport
    after: MetricsReport
    radar: RadarSeries
    density_before: DensityHistogram
    density_after: DensityHistogram
    elapsed_ms: float
    token: str
    # cached maxsims for the candidate model, applied verbatim on commit
    train_maxsims: np.ndarray = field(repr=False, default=None)
    test_maxsims: np.ndarray = field(repr=False, default=None)

    def as_dict(self) -> dict:
        return {
            "op": {
                "kind": self.op.kind,
                "delete_ids": list(self.op.delete_ids),
                "proto_id": self.op.proto_id,
                "candidate": self.op.candidate.as_dict() if self.op.candidate else None,
            },
            "candidate_model_id": self.model.id,
            "before": self.before.as_dict(),
            "after": self.after.as_dict(),
            "radar": self.radar.as_dict(),
            "density_before": self.density_before.as_dict(),
            "density_after": self.density_after.as_dict(),
            "elapsed_ms": self.elapsed_ms,
            "token": self.token,
        }


# ---------------------------------------------------------------------------
# version store


class VersionStore:
    """Directory of persisted model versions plus a lineage file.

    The version graph is a tree rooted at the initial model; persisted
    versions are never mutated or deleted.
    """

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.lineage_path = self.root / "lineage.json"
        if self.lineage_path.exists():
            self.lineage = json.loads(self.lineage_path.read_text())
        else:
            self.lineage = {"initial": None, "versions": []}

    def add(self, model: ModelVersion) -> None:
        save_model(model, self.root / model.id)
        if self.lineage["initial"] is None:
            self.lineage["initial"] = model.id
        if model.id not in [v["id"] for v in self.lineage["versions"]]:
            self.lineage["versions"].append(
                {"id": model.id, "parent_id": model.parent_id, "note": model.note}
            )
        self.lineage_path.write_text(json.dumps(self.lineage, indent=1, sort_keys=True))

    def load(self, model_id: str) -> ModelVersion:
        return load_model(self.root / model_id)

    def ids(self) -> list:
        return [v["id"] for v in self.lineage["versions"]]

    def initial_id(self) -> Optional[str]:
        return self.lineage["initial"]


# ---------------------------------------------------------------------------
# session


class Session:
    """One refinement session: a current model version, its aligned caches,
    the candidate patch index, and pending dry-run reports."""

    def __init__(
        self,
        model: ModelVersion,
        train_cache: ActivationCache,
        test_cache: ActivationCache,
        landmarks_by_sample: Mapping[str, Mapping[str, tuple]],
        store: Optional[VersionStore] = None,
    ):
        train_cache.maxsims_for(model)  # alignment check
        test_cache.maxsims_for(model)
        self.model = model
        self.train_cache = train_cache
        self.test_cache = test_cache
        self.landmarks = dict(landmarks_by_sample)
        self.store = store
        self.patch_index = PatchIndex.from_cache(train_cache)
        self.initial_model = model
        self.initial_report = report_from_maxsims(
            test_cache.maxsims_matrix(), test_cache.labels, model
        )
        self.current_report = self.initial_report
        self._pending: dict = {}
        self._op_counter = 0
        if store is not None:
            store.add(model)

    # -- helpers

    def _train_labels(self) -> np.ndarray:
        return np.array([label_index(lb) for lb in self.train_cache.labels])

    def _density(self, model: ModelVersion) -> DensityHistogram:
        return landmark_density(model, self.landmarks)

    def _new_token(self) -> str:
        self._op_counter += 1
        return f"{self.model.id}:{self._op_counter}"

    def _finish(
        self,
        op: RefinementOp,
        candidate: ModelVersion,
        train_S: np.ndarray,
        test_S: np.ndarray,
        t0: float,
        dry_run: bool,
    ) -> ImpactReport:
        after = report_from_maxsims(test_S, self.test_cache.labels, candidate)
        radar = radar_data(self.initial_report, self.current_report, after)
        report = ImpactReport(
            op=op,
            model=candidate,
            before=self.current_report,
            after=after,
            radar=radar,
            density_before=self._density(self.model),
            density_after=self._density(candidate),
            elapsed_ms=(time.perf_counter() - t0) * 1000.0,
            token=self._new_token(),
            train_maxsims=train_S,
            test_maxsims=test_S,
        )
        self._pending[report.token] = report
        if not dry_run:
            self.commit(report)
        return report

    def _retrain(
        self, S: np.ndarray, candidate: ModelVersion, init_weights: np.ndarray
    ) -> np.ndarray:
        cfg = candidate.train_config
        return optimize_last_layer(
            S,
            self._train_labels(),
            cfg.lambda_l1,
            candidate.cross_class_mask(),
            init_weights,
            tol=cfg.last_layer_tol,
            max_iter=cfg.last_layer_max_iter,
        )

    # -- operations

    def delete_prototypes(self, ids: Sequence[str], dry_run: bool = True) -> ImpactReport:
        """Fast deletion: drop maxsim columns and retrain the class layer.

        Touches neither the encoder nor the distance kernel.
        """
        t0 = time.perf_counter()
        ids = tuple(ids)
        known = set(self.model.proto_ids)
        for pid in ids:
            if pid not in known:
                raise KeyError(f"unknown prototype {pid!r}")
        keep = [j for j, p in enumerate(self.model.prototypes) if p.id not in ids]
        survivors = [self.model.prototypes[j] for j in keep]
        for cname in LABELS:
            if not any(p.class_name == cname for p in survivors):
                raise EmptyClassError(f"deletion would leave no {cname} prototypes")
        op = RefinementOp(kind="delete", delete_ids=ids)

        train_S = self.train_cache.maxsims_matrix()[:, keep]
        test_S = self.test_cache.maxsims_matrix()[:, keep]
        candidate = ModelVersion(
            id="",
            parent_id=self.model.id,
            recipe_version=self.model.recipe_version,
            sim_cfg=self.model.sim_cfg,
            prototypes=[
                Prototype(p.id, p.class_name, p.vector.copy(), p.source)
                for p in survivors
            ],
            weights=self.model.weights[keep].copy(),
            train_config=self.model.train_config,
            note=op.describe(),
        )
        candidate.weights = self._retrain(train_S, candidate, candidate.weights)
        candidate.id = candidate.content_id()
        return self._finish(op, candidate, train_S, test_S, t0, dry_run)

    def replace_prototype(
        self,
        proto_id: Optional[str],
        candidate_entry: CandidateEntry,
        dry_run: bool = True,
    ) -> ImpactReport:
        """Fast replacement (or addition with proto_id=None): one distance
        pass per cached latent map computes the new maxsim column, then the
        class layer is retrained."""
        t0 = time.perf_counter()
        op = RefinementOp(kind="replace", proto_id=proto_id, candidate=candidate_entry)
        vec = candidate_entry.vector_array()
        if proto_id is not None:
            target = self.model.proto_by_id(proto_id)
            if target.class_name != candidate_entry.label:
                raise ValueError(
                    f"candidate class {candidate_entry.label!r} does not match "
                    f"prototype class {target.class_name!r}"
                )

        def new_column(cache: ActivationCache) -> np.ndarray:
            col = np.empty(len(cache.entries))
            for i, e in enumerate(cache.entries):
                dmap = numerics.distance_map(e.latent, vec)
                col[i] = numerics.similarity(dmap.min(), self.model.sim_cfg)
            return col

        source = PrototypeSource(
            sample_id=candidate_entry.sample_id,
            cell=tuple(candidate_entry.cell),
            bbox=tuple(candidate_entry.bbox),
            frame_range=tuple(candidate_entry.frame_range),
        )
        protos = [
            Prototype(p.id, p.class_name, p.vector.copy(), p.source)
            for p in self.model.prototypes
        ]
        train_S = self.train_cache.maxsims_matrix()
        test_S = self.test_cache.maxsims_matrix()
        if proto_id is None:
            # addition: append a fresh zero-weight slot
            n = 0
            existing = set(self.model.proto_ids)
            while f"p{n}" in existing:
                n += 1
            protos.append(Prototype(f"p{n}", candidate_entry.label, vec, source))
            weights = np.vstack(
                [self.model.weights, np.zeros((1, 2), dtype=np.float64)]
            )
            train_S = np.column_stack([train_S, new_column(self.train_cache)])
            test_S = np.column_stack([test_S, new_column(self.test_cache)])
        else:
            j = self.model.proto_ids.index(proto_id)
            protos[j] = Prototype(proto_id, target.class_name, vec, source)
            weights = self.model.weights.copy()
            train_S = train_S.copy()
            test_S = test_S.copy()
            train_S[:, j] = new_column(self.train_cache)
            test_S[:, j] = new_column(self.test_cache)

        candidate = ModelVersion(
            id="",
            parent_id=self.model.id,
            recipe_version=self.model.recipe_version,
            sim_cfg=self.model.sim_cfg,
            prototypes=protos,
            weights=np.asarray(weights, dtype=np.float64),
            train_config=self.model.train_config,
            note=op.describe(),
        )
        candidate.weights = self._retrain(train_S, candidate, candidate.weights)
        candidate.id = candidate.content_id()
        return self._finish(op, candidate, train_S, test_S, t0, dry_run)

    def candidates_near(self, proto_id: str, count: int = 10) -> list:
        """Same-class patch-index entries by ascending distance; entries that
        duplicate an existing prototype's citation are excluded."""
        proto = self.model.proto_by_id(proto_id)
        taken = {
            (p.source.sample_id, tuple(p.source.cell))
            for p in self.model.prototypes
            if p.source is not None
        }
        pv = np.asarray(proto.vector, dtype=np.float64)
        scored = []
        for e in self.patch_index.entries:
            if e.label != proto.class_name:
                continue
            if (e.sample_id, tuple(e.cell)) in taken:
                continue
            d = float(((np.asarray(e.vector, dtype=np.float64) - pv) ** 2).sum())
            scored.append((d, e.sample_id, e.cell, e))
        scored.sort(key=lambda t: (t[0], t[1], t[2]))
        return [e for _, _, _, e in scored[:count]]

    def commit(self, report: ImpactReport) -> str:
        """Apply a dry-run report; the new version becomes current and all
        outstanding tokens die. The initial version is always retained."""
        if report.token not in self._pending:
            raise StaleReportError(f"token {report.token!r} is not pending")
        if report.model.parent_id != self.model.id:
            raise StaleReportError(
                f"report was produced against {report.model.parent_id}, "
                f"current version is {self.model.id}"
            )
        self._pending.clear()
        new_model = report.model
        self.model = new_model
        self.train_cache = ActivationCache(
            split=self.train_cache.split,
            recipe_version=new_model.recipe_version,
            model_id=new_model.id,
            proto_ids=list(new_model.proto_ids),
            cell=self.train_cache.cell,
            entries=[
                CacheEntry(e.sample_id, e.label, e.latent, report.train_maxsims[i].copy(),
                           e.frame_index, e.k)
                for i, e in enumerate(self.train_cache.entries)
            ],
        )
        self.test_cache = ActivationCache(
            split=self.test_cache.split,
            recipe_version=new_model.recipe_version,
            model_id=new_model.id,
            proto_ids=list(new_model.proto_ids),
            cell=self.test_cache.cell,
            entries=[
                CacheEntry(e.sample_id, e.label, e.latent, report.test_maxsims[i].copy(),
                           e.frame_index, e.k)
                for i, e in enumerate(self.test_cache.entries)
            ],
        )
        self.current_report = report.after
        if self.store is not None:
            self.store.add(new_model)
        return new_model.id


def full_recompute_oracle(
    candidate: ModelVersion,
    train_samples: Sequence[EncodedSample],
    test_samples: Sequence[EncodedSample],
    init_weights: Optional[np.ndarray] = None,
):
    """Slow path for equivalence tests: re-forward everything from latents,
    retrain the class layer from the given init, evaluate from scratch."""
    from .model import maxsims_matrix

    S, y = maxsims_matrix(candidate, train_samples)
    cfg = candidate.train_config
    weights = optimize_last_layer(
        S,
        y,
        cfg.lambda_l1,
        candidate.cross_class_mask(),
        candidate.weights if init_weights is None else init_weights,
        tol=cfg.last_layer_tol,
        max_iter=cfg.last_layer_max_iter,
    )
    rebuilt = ModelVersion(
        id="",
        parent_id=candidate.parent_id,
        recipe_version=candidate.recipe_version,
        sim_cfg=candidate.sim_cfg,
        prototypes=candidate.prototypes,
        weights=weights,
        train_config=candidate.train_config,
        note=candidate.note,
    )
    rebuilt.id = rebuilt.content_id()
    report = metrics.evaluate(rebuilt, test_samples)
    return rebuilt, report
