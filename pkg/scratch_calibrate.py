"""Scratch calibration: measure method accuracies on candidate desk grids."""
import sys
import time

import numpy as np

from eihi.diffcore.backbone import BackboneSpec, ConvBlockSpec
from eihi.losses import LossConfig
from eihi.synthdata import DatasetSpec, ShiftConfig, generate_dataset, split_domains, split_mixed
from eihi.trainer import (TrainConfig, derive_seed, evaluate, train_discriminator,
                          train_erm, train_stage_one, EmbeddingCache)

HW = 16
BACKBONE = BackboneSpec(in_channels=3, image_hw=(HW, HW),
                        blocks=(ConvBlockSpec(6), ConvBlockSpec(12), ConvBlockSpec(24)),
                        head="flatten", dense=(32,))

def data_spec(seed):
    return DatasetSpec(num_classes=4, num_domains=10, samples_per_cell=20,
                       height=HW, width=HW, noise_sigma=0.02, seed=seed)

ERM_CFG = dict(epochs=25, batch_size=32, learning_rate=0.05, optimizer="momentum")
S1_CFG = dict(epochs=18, batch_size=32, num_negatives=9, learning_rate=0.02,
              optimizer="momentum", probe_every=6,
              loss=LossConfig(temperature=0.01))
DISC_CFG = dict(epochs=60, batch_size=64, learning_rate=0.1, optimizer="momentum")


def run_seed(seed, mode):
    dspec = data_spec(derive_seed(7, seed))
    data = generate_dataset(dspec)
    split_seed = derive_seed(seed, 0x5117)
    if mode == "mixed":
        split = split_mixed(data, test_fraction=0.2, seed=split_seed)
    else:
        split = split_domains(data, ShiftConfig.make(range(8), {8, 9}), seed=split_seed)
    t0 = time.time()
    if mode in ("mixed", "erm"):
        cfg = TrainConfig(seed=derive_seed(seed, 1), **ERM_CFG)
        params, disc, tr = train_erm(split.train, split.validation, cfg, backbone_spec=BACKBONE)
        acc = evaluate(params, disc, None, split.test).accuracy
    elif mode in ("s1", "nocov"):
        loss = S1_CFG["loss"] if mode == "s1" else LossConfig(temperature=0.01, include_covariance=False)
        kw = dict(S1_CFG); kw["loss"] = loss
        cfg = TrainConfig(seed=derive_seed(seed, 2), **kw)
        params, tr = train_stage_one(split.train, split.validation, cfg, backbone_spec=BACKBONE)
        cache = EmbeddingCache()
        dcfg = TrainConfig(seed=derive_seed(seed, 3), **DISC_CFG)
        disc, _ = train_discriminator(params, split.train, split.validation, dcfg, cache=cache)
        acc = evaluate(params, disc, None, split.test, cache=cache).accuracy
    return acc, time.time() - t0


if __name__ == "__main__":
    modes = sys.argv[1:] or ["mixed", "erm", "s1"]
    seeds = [0, 1, 2]
    for mode in modes:
        accs = []
        for s in seeds:
            acc, dt = run_seed(s, mode)
            accs.append(acc)
            print(f"  {mode} seed {s}: acc={acc:.3f}  ({dt:.1f}s)", flush=True)
        print(f"{mode}: mean={np.mean(accs):.3f} +- {np.std(accs, ddof=1):.3f}")
