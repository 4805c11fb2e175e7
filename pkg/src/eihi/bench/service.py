"""JSON-over-HTTP service backing the guidance UI.

The service owns one desk-scale run: a dataset, its split, a trained
feature network, and a discriminator. Mask uploads accumulate guidance
pairs; /prune votes on them; /retrain rebuilds the discriminator without
the eliminated dimensions on a background worker (single job at a time).
"""

from __future__ import annotations

import base64
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from ..diffcore.backbone import BackboneParams
from ..errors import EihiError, PpmParseError
from ..ppm import decode_pgm_bytes, encode_pgm_bytes, encode_ppm_bytes
from ..pruning import (
    GuidancePair,
    build_guidance_pairs,
    compute_prune_indicator,
    save_guidance_pairs,
    saliency_map,
)
from ..synthdata import Sample, SplitResult
from ..trainer import (
    Discriminator,
    EmbeddingCache,
    TrainConfig,
    evaluate,
    train_discriminator,
)


@dataclass
class RetrainJob:
    job_id: str
    status: str = "queued"  # queued | running | done | error
    accuracy_before: float | None = None
    accuracy_after: float | None = None
    eliminated_count: int | None = None
    error: str | None = None


@dataclass
class ServiceState:
    """Single-owner mutable state; mutations serialize through `lock`."""

    samples: list[Sample]
    split: SplitResult
    backbone: BackboneParams
    disc: Discriminator
    disc_config: TrainConfig
    guidance_dir: Path
    candidates_per_class: int = 3
    guidance_fill: float = 0.0
    pairs: list[GuidancePair] = field(default_factory=list)
    indicator_votes: np.ndarray | None = None
    keep_mask: np.ndarray | None = None
    jobs: dict[str, RetrainJob] = field(default_factory=dict)
    active_job: str | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)
    cache: EmbeddingCache = field(default_factory=EmbeddingCache)

    def candidates(self) -> list[Sample]:
        by_class: dict[int, list[Sample]] = {}
        for s in sorted(self.split.train, key=lambda s: s.sample_id):
            by_class.setdefault(s.class_label, []).append(s)
        out = []
        for c in sorted(by_class):
            out.extend(by_class[c][: self.candidates_per_class])
        return out

    def find_sample(self, sample_id: str) -> Sample:
        for s in self.samples:
            if s.sample_id == sample_id:
                return s
        raise KeyError(sample_id)


class GuidanceUpload(BaseModel):
    sample_id: str
    mask_pgm_base64: str
    fill: float | None = None


class PruneRequest(BaseModel):
    mass_fraction: float = 0.9


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="guidance service")

    @app.get("/samples")
    def get_samples():
        items = []
        for s in state.candidates():
            items.append({
                "id": s.sample_id,
                "class_label": s.class_label,
                "domain_label": s.domain_label,
                "height": s.image.shape[1],
                "width": s.image.shape[2],
                "raster_ppm_base64": _b64(encode_ppm_bytes(s.image)),
            })
        return {"samples": items, "embedding_dim": state.backbone.embedding_dim,
                "fill": state.guidance_fill}

    @app.post("/guidance")
    def post_guidance(upload: GuidanceUpload):
        try:
            sample = state.find_sample(upload.sample_id)
        except KeyError:
            raise HTTPException(status_code=404,
                                detail={"field": "sample_id",
                                        "message": f"unknown sample {upload.sample_id!r}"})
        try:
            raw = base64.b64decode(upload.mask_pgm_base64, validate=True)
        except Exception:
            raise HTTPException(status_code=400,
                                detail={"field": "mask_pgm_base64",
                                        "message": "payload is not valid base64"})
        try:
            mask_u8 = decode_pgm_bytes(raw, source="mask upload")
        except PpmParseError as exc:
            raise HTTPException(status_code=400,
                                detail={"field": "mask_pgm_base64", "message": str(exc)})
        if mask_u8.shape != sample.image.shape[1:]:
            raise HTTPException(status_code=400, detail={
                "field": "mask_pgm_base64",
                "message": f"mask is {mask_u8.shape}, sample raster is {sample.image.shape[1:]}",
            })
        mask = mask_u8 >= 128
        if not mask.any():
            raise HTTPException(status_code=400, detail={
                "field": "mask_pgm_base64", "message": "mask has no object pixels"})
        fill = state.guidance_fill if upload.fill is None else upload.fill
        with state.lock:
            (pair,) = build_guidance_pairs([sample], [mask], fill=fill)
            state.pairs = [p for p in state.pairs if p.pair_id != pair.pair_id] + [pair]
            save_guidance_pairs(state.guidance_dir, state.pairs)
        return {"pair_id": pair.pair_id, "num_pairs": len(state.pairs),
                "obj_ppm_base64": _b64(encode_ppm_bytes(pair.obj_image))}

    @app.get("/guidance/{pair_id}/mask")
    def get_guidance_mask(pair_id: str):
        with state.lock:
            for p in state.pairs:
                if p.pair_id == pair_id:
                    data = encode_pgm_bytes(p.mask.astype(np.uint8) * 255)
                    return {"pair_id": pair_id, "mask_pgm_base64": _b64(data)}
        raise HTTPException(status_code=404,
                            detail={"field": "pair_id", "message": f"no pair {pair_id!r}"})

    @app.post("/prune")
    def post_prune(req: PruneRequest | None = None):
        mass = req.mass_fraction if req else 0.9
        with state.lock:
            if not state.pairs:
                raise HTTPException(status_code=400, detail={
                    "field": "pairs", "message": "no guidance pairs stored yet"})
            indicator, sensitivities = compute_prune_indicator(
                state.backbone, state.pairs, mass_fraction=mass)
            state.indicator_votes = indicator.votes
            state.keep_mask = indicator.keep_mask()
            per_pair = []
            for pair, p_vec in zip(state.pairs, sensitivities):
                top = np.argsort(-p_vec)[:5]
                per_pair.append({
                    "pair_id": pair.pair_id,
                    "top_dimensions": [int(j) for j in top],
                    "top_magnitudes": [float(p_vec[j]) for j in top],
                })
        return {
            "votes": [int(v) for v in indicator.votes],
            "eliminated": indicator.eliminated_dims(),
            "num_pairs": indicator.num_pairs,
            "per_pair": per_pair,
        }

    def _run_retrain(job: RetrainJob):
        job.status = "running"
        try:
            before = evaluate(state.backbone, state.disc, None, state.split.test,
                              cache=state.cache).accuracy
            keep = state.keep_mask
            disc2, _ = train_discriminator(state.backbone, state.split.train,
                                           state.split.validation, state.disc_config,
                                           keep_dims=keep, cache=state.cache)
            after = evaluate(state.backbone, disc2, keep, state.split.test,
                             cache=state.cache).accuracy
            job.accuracy_before = before
            job.accuracy_after = after
            job.eliminated_count = int(np.sum(keep == 0)) if keep is not None else 0
            job.status = "done"
        except EihiError as exc:
            job.status = "error"
            job.error = f"{type(exc).__name__}: {exc}"
        finally:
            with state.lock:
                state.active_job = None

    @app.post("/retrain")
    def post_retrain():
        with state.lock:
            if state.active_job is not None:
                raise HTTPException(status_code=409, detail={
                    "field": "job", "message": f"job {state.active_job} is still running"})
            if state.keep_mask is None:
                raise HTTPException(status_code=400, detail={
                    "field": "indicator", "message": "run /prune before /retrain"})
            job = RetrainJob(job_id=uuid.uuid4().hex[:12])
            state.jobs[job.job_id] = job
            state.active_job = job.job_id
        threading.Thread(target=_run_retrain, args=(job,), daemon=True).start()
        return {"job_id": job.job_id}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        job = state.jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404,
                                detail={"field": "job_id", "message": f"no job {job_id!r}"})
        return {
            "job_id": job.job_id,
            "status": job.status,
            "accuracy_before": job.accuracy_before,
            "accuracy_after": job.accuracy_after,
            "eliminated_count": job.eliminated_count,
            "error": job.error,
        }

    @app.get("/saliency/{sample_id}")
    def get_saliency(sample_id: str):
        try:
            sample = state.find_sample(sample_id)
        except KeyError:
            raise HTTPException(status_code=404, detail={
                "field": "sample_id", "message": f"unknown sample {sample_id!r}"})
        raster = saliency_map(state.backbone, state.disc, None, sample.image)
        quantized = np.clip(np.rint(raster * 255.0), 0, 255).astype(np.uint8)
        return {
            "id": sample_id,
            "height": raster.shape[0],
            "width": raster.shape[1],
            "saliency_pgm_base64": _b64(encode_pgm_bytes(quantized)),
        }

    return app
