"""HTTP/JSON service exposing models, videos, refinement, and explanations.

One process owns a refinement session (current model version, caches, patch
index) plus the registered videos. Reads are side-effect free; the only
mutating endpoints are /refine (dry-run by default) and /commit, which
follows the dry-run/commit token protocol: a commit with a token that is no
longer pending is answered with 409.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import FileResponse
from fastapi.middleware.cors import CORSMiddleware

from . import explain, render, schemas, video as videomod
from .metrics import report_from_maxsims
from .model import ModelVersion, forward
from .refinery import (
    EmptyClassError,
    Session,
    StaleReportError,
)


class AppState:
    def __init__(
        self,
        session: Session,
        videos: dict,
        samples_by_id: dict,
        render_dir: Path,
    ):
        self.session = session
        self.videos = videos
        self.samples_by_id = samples_by_id
        self.render_dir = Path(render_dir)
        self.render_dir.mkdir(parents=True, exist_ok=True)

    # -- model lookup helpers

    def model_for(self, model_id: str) -> ModelVersion:
        if model_id in ("current", self.session.model.id):
            return self.session.model
        if self.session.store is not None and model_id in self.session.store.ids():
            return self.session.store.load(model_id)
        if model_id == self.session.initial_model.id:
            return self.session.initial_model
        raise HTTPException(status_code=404, detail=f"unknown model {model_id!r}")

    def metrics_for(self, model: ModelVersion) -> dict:
        sess = self.session
        if model.id == sess.model.id:
            return sess.current_report.as_dict()
        if model.id == sess.initial_model.id:
            return sess.initial_report.as_dict()
        # non-current version: recompute maxsims from cached latents
        S = np.stack(
            [forward(model, e.latent).maxsims for e in sess.test_cache.entries]
        )
        return report_from_maxsims(S, sess.test_cache.labels, model).as_dict()

    def ensure_strip(self, model: ModelVersion, proto_id: str) -> Optional[str]:
        proto = model.proto_by_id(proto_id)
        if proto.source is None:
            return None
        sample = self.samples_by_id.get(proto.source.sample_id)
        if sample is None:
            return None
        name = f"strip_{model.id}_{proto_id}.png"
        path = self.render_dir / name
        if not path.exists():
            render.prototype_strip(sample, proto.source.bbox).save(path)
        return f"/v1/renders/{name}"

    def ensure_prp(self, model: ModelVersion, proto_id: str) -> Optional[str]:
        proto = model.proto_by_id(proto_id)
        if proto.source is None:
            return None
        sample = self.samples_by_id.get(proto.source.sample_id)
        if sample is None:
            return None
        name = f"prp_{model.id}_{proto_id}.png"
        path = self.render_dir / name
        if not path.exists():
            try:
                entry = self.session.train_cache.entry_by_id(proto.source.sample_id)
                latent = _entry_latent(entry, self.session.train_cache.cell)
            except KeyError:
                entry = self.session.test_cache.entry_by_id(proto.source.sample_id)
                latent = _entry_latent(entry, self.session.test_cache.cell)
            rel = explain.prp_map(model, sample, latent, proto_id)
            render.relevance_overlay(sample, rel).save(path)
        return f"/v1/renders/{name}"


def _entry_latent(entry, cell):
    from .encoder import LatentMap

    return LatentMap(grid=entry.latent, sample_id=entry.sample_id, cell=cell)


def _proto_info(state: AppState, model: ModelVersion, proto_id: str) -> dict:
    p = model.proto_by_id(proto_id)
    j = model.proto_ids.index(proto_id)
    w = model.weights[j]
    info = {
        "id": p.id,
        "class_name": p.class_name,
        "weight_own": float(w[p.class_idx]),
        "weights": [float(w[0]), float(w[1])],
        "source": None,
        "strip_url": state.ensure_strip(model, proto_id),
    }
    if p.source is not None:
        info["source"] = {
            "sample_id": p.source.sample_id,
            "cell": list(p.source.cell),
            "bbox": list(p.source.bbox),
            "frame_range": list(p.source.frame_range),
        }
    return info


def create_app(state: AppState) -> FastAPI:
    app = FastAPI(title="protoforge", version="1")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse()

    @app.get("/v1/models")
    def list_models():
        sess = state.session
        ids = sess.store.ids() if sess.store is not None else []
        if sess.initial_model.id not in ids:
            ids.insert(0, sess.initial_model.id)
        if sess.model.id not in ids:
            ids.append(sess.model.id)
        out = []
        for mid in ids:
            m = state.model_for(mid)
            out.append(
                schemas.ModelSummary(
                    id=m.id,
                    parent_id=m.parent_id,
                    note=m.note,
                    prototype_count=len(m.prototypes),
                    current=m.id == sess.model.id,
                    initial=m.id == sess.initial_model.id,
                ).model_dump()
            )
        return out

    @app.get("/v1/models/{model_id}/metrics")
    def model_metrics(model_id: str):
        return state.metrics_for(state.model_for(model_id))

    @app.get("/v1/models/{model_id}/prototypes")
    def model_prototypes(model_id: str):
        model = state.model_for(model_id)
        infos = [_proto_info(state, model, pid) for pid in model.proto_ids]
        infos.sort(key=lambda i: (-i["weight_own"], i["id"]))
        return infos

    @app.get("/v1/models/{model_id}/landmark_density")
    def model_density(model_id: str):
        model = state.model_for(model_id)
        try:
            return explain.landmark_density(model, state.session.landmarks).as_dict()
        except (ValueError, KeyError) as exc:
            raise HTTPException(status_code=409, detail=str(exc))

    @app.get("/v1/prototypes/{proto_id}/detail")
    def prototype_detail(proto_id: str, model: str = Query("current")):
        m = state.model_for(model)
        try:
            info = _proto_info(state, m, proto_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown prototype {proto_id!r}")
        info["prp_url"] = state.ensure_prp(m, proto_id)
        p = m.proto_by_id(proto_id)
        info["landmark"] = None
        if p.source is not None:
            marks = state.session.landmarks.get(p.source.sample_id)
            if marks:
                x0, y0, x1, y1 = p.source.bbox
                cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
                info["landmark"] = min(
                    marks, key=lambda n: (marks[n][0] - cx) ** 2 + (marks[n][1] - cy) ** 2
                )
        return info

    @app.get("/v1/prototypes/{proto_id}/candidates")
    def prototype_candidates(proto_id: str, count: int = Query(10, ge=1, le=200)):
        sess = state.session
        try:
            cands = sess.candidates_near(proto_id, count)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown prototype {proto_id!r}")
        proto = sess.model.proto_by_id(proto_id)
        pv = np.asarray(proto.vector, dtype=np.float64)
        out = []
        for c in cands:
            d = float(((np.asarray(c.vector, dtype=np.float64) - pv) ** 2).sum())
            entry = c.as_dict()
            entry["distance"] = d
            out.append(entry)
        return out

    @app.get("/v1/embedding")
    def embedding(
        model: str = Query("current"),
        include: str = Query("prototypes,candidates"),
        method: str = Query("pca"),
        proto_id: Optional[str] = Query(None),
        count: int = Query(30, ge=3, le=500),
    ):
        m = state.model_for(model)
        wanted = {part.strip() for part in include.split(",") if part.strip()}
        vectors, meta = [], []
        if "prototypes" in wanted:
            for p in m.prototypes:
                vectors.append(np.asarray(p.vector, dtype=np.float64))
                meta.append(("prototype", p.id, p.class_name))
        if "candidates" in wanted:
            pid = proto_id or m.proto_ids[0]
            for c in state.session.candidates_near(pid, count):
                vectors.append(np.asarray(c.vector, dtype=np.float64))
                meta.append(("candidate", f"{c.sample_id}@{c.cell[0]},{c.cell[1]}", c.label))
        if len(vectors) < 3:
            raise HTTPException(status_code=422, detail="need at least 3 vectors")
        try:
            pts = explain.project_2d(vectors, method=method)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        points = [
            {"kind": k, "id": i, "class_name": c, "x": float(x), "y": float(y)}
            for (k, i, c), (x, y) in zip(meta, pts)
        ]
        return {"method": method, "points": points}

    @app.post("/v1/models/{model_id}/refine")
    def refine(model_id: str, req: schemas.RefineRequest):
        sess = state.session
        if state.model_for(model_id).id != sess.model.id:
            raise HTTPException(
                status_code=409, detail="refinement only applies to the current version"
            )
        op = req.op
        try:
            if op.kind == "delete":
                report = sess.delete_prototypes(tuple(op.delete_ids), dry_run=req.dry_run)
            elif op.kind in ("replace", "add"):
                if op.candidate is None:
                    raise HTTPException(status_code=422, detail="candidate required")
                entry = sess.patch_index.find(
                    op.candidate.sample_id, tuple(op.candidate.cell)
                )
                target = None if op.kind == "add" else op.proto_id
                report = sess.replace_prototype(target, entry, dry_run=req.dry_run)
            else:
                raise HTTPException(status_code=422, detail=f"unknown op kind {op.kind!r}")
        except (KeyError, EmptyClassError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return report.as_dict()

    @app.post("/v1/models/{model_id}/commit", response_model=schemas.CommitResponse)
    def commit(model_id: str, req: schemas.CommitRequest):
        sess = state.session
        report = sess._pending.get(req.token)
        if report is None:
            raise HTTPException(status_code=409, detail="stale or unknown token")
        try:
            new_id = sess.commit(report)
        except StaleReportError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return schemas.CommitResponse(model_id=new_id)

    @app.get("/v1/videos")
    def list_videos():
        out = []
        for v in state.videos.values():
            label = None
            labels = {w.label for w in v.windows}
            if len(labels) == 1:
                label = labels.pop()
            out.append(
                schemas.VideoSummary(
                    id=v.id,
                    title=v.title,
                    fps=v.fps,
                    frame_count=v.frame_count,
                    window_count=len(v.windows),
                    label=label,
                ).model_dump()
            )
        return out

    def _video(video_id: str) -> videomod.VideoRecord:
        v = state.videos.get(video_id)
        if v is None:
            raise HTTPException(status_code=404, detail=f"unknown video {video_id!r}")
        return v

    @app.get("/v1/videos/{video_id}/trace")
    def video_trace(video_id: str, model: str = Query("current")):
        m = state.model_for(model)
        return videomod.predict_video(m, _video(video_id)).as_dict()

    @app.get("/v1/videos/{video_id}/aggregate")
    def video_aggregate(
        video_id: str,
        start: int = Query(0, ge=0),
        end: int = Query(10**9, ge=0),
        model: str = Query("current"),
    ):
        m = state.model_for(model)
        v = _video(video_id)
        trace = videomod.predict_video(m, v)
        try:
            return videomod.aggregate(trace, start, min(end, v.frame_count - 1))
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.get("/v1/renders/{name}")
    def get_render(name: str):
        path = state.render_dir / Path(name).name
        if not path.exists():
            raise HTTPException(status_code=404, detail="no such render")
        return FileResponse(path, media_type="image/png")

    return app


def serve(state: AppState, host: str = "127.0.0.1", port: int = 8080):
    import uvicorn

    uvicorn.run(create_app(state), host=host, port=port, log_level="warning")
