"""Pydantic request/response models for the /v1 HTTP surface."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str = "ok"


class ModelSummary(BaseModel):
    id: str
    parent_id: Optional[str] = None
    note: str = ""
    prototype_count: int
    current: bool = False
    initial: bool = False


class SourceCitation(BaseModel):
    sample_id: str
    cell: list
    bbox: list
    frame_range: list


class PrototypeInfo(BaseModel):
    id: str
    class_name: str
    weight_own: float
    weights: list
    source: Optional[SourceCitation] = None
    strip_url: Optional[str] = None


class PrototypeDetail(PrototypeInfo):
    flow_urls: list = Field(default_factory=list)
    prp_url: Optional[str] = None
    landmark: Optional[str] = None


class CandidateInfo(BaseModel):
    sample_id: str
    cell: list
    label: str
    bbox: list
    frame_range: list
    distance: float


class EmbeddingPoint(BaseModel):
    kind: str  # "prototype" | "candidate"
    id: str
    class_name: str
    x: float
    y: float


class EmbeddingResponse(BaseModel):
    method: str
    points: list


class CandidateRef(BaseModel):
    sample_id: str
    cell: list


class RefineOpRequest(BaseModel):
    kind: str  # "delete" | "replace" | "add"
    delete_ids: list = Field(default_factory=list)
    proto_id: Optional[str] = None
    candidate: Optional[CandidateRef] = None


class RefineRequest(BaseModel):
    op: RefineOpRequest
    dry_run: bool = True


class CommitRequest(BaseModel):
    token: str


class CommitResponse(BaseModel):
    model_id: str


class VideoSummary(BaseModel):
    id: str
    title: str
    fps: float
    frame_count: int
    window_count: int
    label: Optional[str] = None
