import sys
import numpy as np
from dataclasses import replace
from eihi.bench.experiments import (desk_grid, desk_dataset_spec, desk_backbone,
                                    _build_samples, _split,
                                    _method_stream, _ground_truth_pairs,
                                    _background_correlations)
from eihi.pruning import compute_prune_indicator
from eihi.synthdata import DatasetSpec
from eihi.trainer import (derive_seed, evaluate, train_stage_one, train_discriminator,
                          EmbeddingCache)

per_cell, epochs, lam, fill = (int(sys.argv[1]), int(sys.argv[2]),
                               float(sys.argv[3]), float(sys.argv[4]))
seeds = [int(s) for s in sys.argv[6:]] or [0, 1, 2]
grid = {c.name: c for c in desk_grid()}
cfg = grid["eihi_full_5_1"]
cfg = replace(cfg, backbone=desk_backbone(embedding_dim=int(sys.argv[5])),
              dataset=replace(desk_dataset_spec(), samples_per_cell=per_cell),
              train=replace(cfg.train, epochs=epochs,
                            loss=replace(cfg.train.loss, info_nce_weight=lam)))

deltas, aligns = [], []
for seed in seeds:
    samples = _build_samples(cfg, seed)
    split = _split(cfg, samples, seed)
    tc = replace(cfg.train, seed=derive_seed(seed, _method_stream(cfg.method)))
    params, _ = train_stage_one(split.train, split.validation, tc, backbone_spec=cfg.backbone)
    cache = EmbeddingCache()
    dc = replace(cfg.disc, seed=derive_seed(seed, 0xD15C))
    disc, _ = train_discriminator(params, split.train, split.validation, dc, cache=cache)
    pre = evaluate(params, disc, None, split.test, cache=cache).accuracy
    pairs = _ground_truth_pairs(split.train, fill)
    ind, _ = compute_prune_indicator(params, pairs)
    keep = ind.keep_mask()
    elim = np.array(ind.eliminated_dims()); kept = np.flatnonzero(keep)
    corr = _background_correlations(cache.get(params, samples), samples)
    ce = np.mean(np.abs(corr[elim])) if elim.size else float("nan")
    ck = np.mean(np.abs(corr[kept])) if kept.size else float("nan")
    disc2, _ = train_discriminator(params, split.train, split.validation, dc,
                                   keep_dims=keep, cache=cache)
    post = evaluate(params, disc2, keep, split.test, cache=cache).accuracy
    deltas.append(post - pre); aligns.append(ce > ck)
    print(f"seed {seed}: pre={pre:.3f} post={post:.3f} d={100*(post-pre):+.1f} "
          f"elim={len(elim)} corrE={ce:.3f} corrK={ck:.3f} align={ce>ck}", flush=True)
print(f"per_cell={per_cell} ep={epochs} lam={lam} fill={fill} d={sys.argv[5]}: mean delta {100*np.mean(deltas):+.2f} pts, "
      f"align {sum(aligns)}/{len(aligns)}")
