import numpy as np
from dataclasses import replace
from eihi.bench.experiments import (desk_grid, _build_samples, _split, _method_stream,
                                    _ground_truth_pairs, _background_correlations)
from eihi.pruning import compute_prune_indicator
from eihi.trainer import (derive_seed, evaluate, train_stage_one, train_discriminator,
                          EmbeddingCache)

grid = {c.name: c for c in desk_grid()}
cfg = grid["eihi_full_5_1"]
for seed in (1, 0):
    samples = _build_samples(cfg, seed)
    split = _split(cfg, samples, seed)
    tc = replace(cfg.train, seed=derive_seed(seed, _method_stream(cfg.method)))
    params, _ = train_stage_one(split.train, split.validation, tc, backbone_spec=cfg.backbone)
    cache = EmbeddingCache()
    dc = replace(cfg.disc, seed=derive_seed(seed, 0xD15C))
    disc, _ = train_discriminator(params, split.train, split.validation, dc, cache=cache)
    pre = evaluate(params, disc, None, split.test, cache=cache).accuracy
    pairs = _ground_truth_pairs(split.train, 0.0)
    ind, sens = compute_prune_indicator(params, pairs)
    keep = ind.keep_mask()
    elim = np.array(ind.eliminated_dims())
    kept = np.flatnonzero(keep)
    print(f"seed {seed}: pre={pre:.3f} elim {len(elim)}/32")
    for label, sample_set in (("train", split.train), ("all", samples)):
        z = cache.get(params, sample_set)
        corr = _background_correlations(z, sample_set)
        print(f"  corr[{label}]: elim={np.mean(np.abs(corr[elim])):.3f} kept={np.mean(np.abs(corr[kept])):.3f}")
    # per-pair indicator sizes
    sizes = [int((np.array(s) > 0).sum()) for s in sens]
    zero_sizes = [int((ind_ == 0).sum()) for ind_ in
                  [__import__('eihi.pruning', fromlist=['sensitivity_indicator']).sensitivity_indicator(s) for s in sens]]
    print(f"  per-pair flagged sizes: {zero_sizes}")
    disc2, _ = train_discriminator(params, split.train, split.validation, dc, keep_dims=keep, cache=cache)
    post = evaluate(params, disc2, keep, split.test, cache=cache).accuracy
    print(f"  post={post:.3f} (delta {100*(post-pre):+.1f})")
