"""Human-guided elimination of background-sensitive embedding dimensions.

A guidance pair is a sample and its background-erased twin. Per pair, the
percent change magnitude of each embedding dimension is computed, the
dimensions carrying the top 90% of the change mass are flagged, and a
dimension is eliminated only when every pair flags it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .trainer import embed_samples

from .diffcore.backbone import BackboneParams, forward_backbone
from .diffcore.tensor import Tensor, backward, select_columns, tsum, mul
from .errors import ContractError, DegeneratePairError
from .ppm import read_pgm, read_ppm, write_pgm, write_ppm
from .synthdata import Sample
from .trainer import Discriminator, forward_discriminator, keep_indices

DEFAULT_MASS_FRACTION = 0.9


@dataclass
class GuidancePair:
    pair_id: str
    sel: Sample
    obj_image: np.ndarray  # derived: sel image with background filled
    mask: np.ndarray  # (h, w) bool, True = object pixel
    fill: float


@dataclass
class PruneIndicator:
    """Per-dimension vote sum over guidance pairs; zero means every pair
    flagged the dimension as background-sensitive and it is eliminated."""

    votes: np.ndarray  # (d,) nonnegative ints
    num_pairs: int

    @property
    def dim(self) -> int:
        return int(self.votes.size)

    def keep_mask(self) -> np.ndarray:
        return (self.votes > 0).astype(np.int64)

    def eliminated_dims(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.votes == 0)]

    def to_json_dict(self) -> dict:
        return {
            "votes": [int(v) for v in self.votes],
            "eliminated": self.eliminated_dims(),
            "num_pairs": self.num_pairs,
        }


def change_magnitude(z_sel: np.ndarray, z_obj: np.ndarray) -> np.ndarray:
    """Percent change of each dimension relative to the reference norm:
    p[j] = |z_sel[j] - z_obj[j]| / ||z_sel|| * 100."""
    z_sel = np.asarray(z_sel, dtype=np.float64).reshape(-1)
    z_obj = np.asarray(z_obj, dtype=np.float64).reshape(-1)
    if z_sel.shape != z_obj.shape:
        raise ContractError(f"dimension mismatch: {z_sel.shape} vs {z_obj.shape}")
    norm = float(np.linalg.norm(z_sel))
    if norm == 0.0:
        raise DegeneratePairError("reference embedding has zero norm")
    return np.abs(z_sel - z_obj) / norm * 100.0


def sensitivity_indicator(p: np.ndarray, mass_fraction: float = DEFAULT_MASS_FRACTION,
                          rule: str = "mass") -> np.ndarray:
    """Binary keep vector: 0 for the minimal descending-sorted prefix whose
    cumulative change reaches `mass_fraction` of the total, 1 elsewhere.

    `rule="count"` flags the top ceil(mass_fraction * d) dimensions by value
    instead (an alternative reading, not the default). Ties break toward
    the lower dimension index. An all-zero p keeps every dimension.
    """
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    if np.any(p < 0):
        raise ContractError("change magnitudes must be nonnegative")
    d = p.size
    keep = np.ones(d, dtype=np.int64)
    order = np.lexsort((np.arange(d), -p))  # descending p, ascending index on ties
    if rule == "count":
        k = int(np.ceil(mass_fraction * d))
        keep[order[:k]] = 0
        return keep
    if rule != "mass":
        raise ContractError(f"unknown sensitivity rule {rule!r}")
    total = float(p.sum())
    if total == 0.0:
        return keep
    cum = 0.0
    for j in order:
        cum += p[j]
        keep[j] = 0
        if cum >= mass_fraction * total:
            break
    return keep


def guidance_vote(indicators: Sequence[np.ndarray]) -> PruneIndicator:
    """Elementwise sum of per-pair keep vectors; a dimension is eliminated
    iff the sum is zero (unanimous background sensitivity)."""
    if not indicators:
        raise ContractError("guidance_vote needs at least one indicator")
    mats = [np.asarray(ind, dtype=np.int64).reshape(-1) for ind in indicators]
    d = mats[0].size
    for m in mats[1:]:
        if m.size != d:
            raise ContractError(f"indicator lengths differ: {m.size} vs {d}")
    votes = np.sum(mats, axis=0)
    return PruneIndicator(votes=votes, num_pairs=len(mats))


def build_guidance_pairs(samples: Sequence[Sample], masks: Sequence[np.ndarray],
                         fill: float = 0.0) -> list[GuidancePair]:
    """Bind each sample to its background-erased twin:
    obj = sel * mask + fill * (1 - mask), per channel."""
    if len(samples) != len(masks):
        raise ContractError(f"{len(samples)} samples but {len(masks)} masks")
    pairs = []
    for s, mask in zip(samples, masks):
        mask = np.asarray(mask).astype(bool)
        if mask.shape != s.image.shape[1:]:
            raise ContractError(
                f"mask {mask.shape} does not match raster {s.image.shape[1:]} "
                f"for sample {s.sample_id}"
            )
        if not mask.any():
            raise ContractError(f"all-zero mask for sample {s.sample_id}: no object pixels")
        obj = np.where(mask[None, :, :], s.image, fill)
        pairs.append(GuidancePair(pair_id=s.sample_id, sel=s, obj_image=obj,
                                  mask=mask, fill=fill))
    return pairs


def pair_embeddings(backbone: BackboneParams, pairs: Sequence[GuidancePair]
                    ) -> tuple[np.ndarray, np.ndarray]:
    """(K, d) frozen embeddings of the sel and obj sides of each pair."""
    sel_batch = [p.sel for p in pairs]
    obj_samples = [
        Sample(image=p.obj_image, class_label=p.sel.class_label,
               domain_label=p.sel.domain_label, background_factor=None,
               sample_id=f"{p.pair_id}::obj")
        for p in pairs
    ]
    return embed_samples(backbone, sel_batch), embed_samples(backbone, obj_samples)


def compute_prune_indicator(backbone: BackboneParams, pairs: Sequence[GuidancePair],
                            mass_fraction: float = DEFAULT_MASS_FRACTION,
                            rule: str = "mass"
                            ) -> tuple[PruneIndicator, list[np.ndarray]]:
    """Full per-pair pipeline: change magnitudes, top-mass indicators,
    unanimous vote. A degenerate (zero-norm) pair contributes an all-keep
    indicator instead of forcing eliminations through the unanimity rule."""
    if not pairs:
        raise ContractError("no guidance pairs supplied")
    z_sel, z_obj = pair_embeddings(backbone, pairs)
    d = backbone.embedding_dim
    sensitivities: list[np.ndarray] = []
    indicators: list[np.ndarray] = []
    for a, b in zip(z_sel, z_obj):
        try:
            p_vec = change_magnitude(a, b)
        except DegeneratePairError:
            sensitivities.append(np.zeros(d))
            indicators.append(np.ones(d, dtype=np.int64))
            continue
        sensitivities.append(p_vec)
        indicators.append(sensitivity_indicator(p_vec, mass_fraction, rule))
    return guidance_vote(indicators), sensitivities


# --------------------------------------------------------------------------
# saliency

def saliency_map(backbone: BackboneParams, disc: Discriminator,
                 keep_dims: np.ndarray | None, image: np.ndarray) -> np.ndarray:
    """Input-gradient saliency of the predicted-class logit: channel-max of
    absolute pixel gradients, normalized so the maximum is 1."""
    x = Tensor(np.asarray(image)[None, :, :, :], requires_grad=True)
    z = forward_backbone(backbone, x)
    idx = keep_indices(keep_dims, backbone.embedding_dim)
    logits = forward_discriminator(disc, select_columns(z, idx))
    pred = int(np.argmax(logits.values[0]))
    onehot = np.zeros((1, disc.num_classes))
    onehot[0, pred] = 1.0
    backward(tsum(mul(logits, onehot)))
    g = np.abs(x.grad[0]).max(axis=0)
    for p in backbone.params + disc.params:  # stray grads from this pass
        p.zero_grad()
    peak = g.max()
    return g / peak if peak > 0 else g


# --------------------------------------------------------------------------
# file formats

def save_guidance_pairs(out_dir: str | Path, pairs: Sequence[GuidancePair]) -> Path:
    """Store pairs as JSON + P6 sel rasters + P5 masks (0/255). The erased
    twin is derived from (sel, mask, fill) and never stored."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, p in enumerate(pairs):
        sel_rel = f"pair_{i:03d}_sel.ppm"
        mask_rel = f"pair_{i:03d}_mask.pgm"
        write_ppm(out_dir / sel_rel, p.sel.image)
        write_pgm(out_dir / mask_rel, p.mask.astype(np.uint8) * 255)
        entries.append({
            "id": p.pair_id,
            "sel_raster": sel_rel,
            "mask_raster": mask_rel,
            "fill": p.fill,
            "class": p.sel.class_label,
            "domain": p.sel.domain_label,
        })
    path = out_dir / "pairs.json"
    path.write_text(json.dumps({"format": "eihi-guidance", "version": 1,
                                "pairs": entries}, indent=2), encoding="utf-8")
    return path


def load_guidance_pairs(pairs_file: str | Path) -> list[GuidancePair]:
    pairs_file = Path(pairs_file)
    base = pairs_file.parent
    doc = json.loads(pairs_file.read_text(encoding="utf-8"))
    if doc.get("format") != "eihi-guidance":
        raise ContractError(f"{pairs_file}: not a guidance-pair file")
    out = []
    for e in doc["pairs"]:
        image = read_ppm(base / e["sel_raster"])
        mask = read_pgm(base / e["mask_raster"]) >= 128
        sel = Sample(image=image, class_label=int(e["class"]),
                     domain_label=int(e["domain"]), background_factor=None,
                     sample_id=e["id"])
        fill = float(e["fill"])
        out.extend(build_guidance_pairs([sel], [mask], fill))
    return out


def save_indicator(path: str | Path, indicator: PruneIndicator) -> None:
    Path(path).write_text(json.dumps(indicator.to_json_dict(), indent=2), encoding="utf-8")


def load_indicator(path: str | Path) -> PruneIndicator:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return PruneIndicator(votes=np.array(doc["votes"], dtype=np.int64),
                          num_pairs=int(doc["num_pairs"]))
