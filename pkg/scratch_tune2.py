import sys, time
import numpy as np
import eihi.synthdata as sd
from dataclasses import replace
from eihi.bench.experiments import desk_grid, _build_samples, _split, _method_stream
from eihi.trainer import (TrainConfig, derive_seed, evaluate, train_erm,
                          train_stage_one, train_discriminator, EmbeddingCache)


def run(name, seed, grid, s1_epochs):
    cfg = grid[name]
    samples = _build_samples(cfg, seed)
    split = _split(cfg, samples, seed)
    tc = replace(cfg.train, seed=derive_seed(seed, _method_stream(cfg.method)))
    cache = EmbeddingCache()
    if cfg.method == "erm":
        params, disc, _ = train_erm(split.train, split.validation, tc, backbone_spec=cfg.backbone)
    else:
        tc = replace(tc, epochs=s1_epochs)
        params, _ = train_stage_one(split.train, split.validation, tc, backbone_spec=cfg.backbone)
        dc = replace(cfg.disc, seed=derive_seed(seed, 0xD15C))
        disc, _ = train_discriminator(params, split.train, split.validation, dc, cache=cache)
    return evaluate(params, disc, None, split.test, cache=cache).accuracy


if __name__ == "__main__":
    opacity, amp, stripe, s1_epochs = (float(sys.argv[1]), float(sys.argv[2]),
                                       float(sys.argv[3]), int(sys.argv[4]))
    seeds = [int(s) for s in sys.argv[5:]] or [0, 1, 2]
    sd.GLYPH_OPACITY = opacity
    sd._SPOT_AMP = amp
    sd._STRIPE_AMP = stripe
    grid = {c.name: c for c in desk_grid()}
    t0 = time.time()
    for name in ("erm_mixed", "erm_8_2", "eihi_stage_one_8_2"):
        accs = [run(name, s, grid, s1_epochs) for s in seeds]
        print(f"op={opacity} amp={amp} st={stripe} s1ep={s1_epochs} {name}: "
              f"mean={np.mean(accs):.3f} {[round(a,3) for a in accs]}", flush=True)
    print(f"({time.time()-t0:.0f}s)")
