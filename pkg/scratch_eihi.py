import sys, time
import numpy as np
from eihi.diffcore.backbone import BackboneSpec, ConvBlockSpec
from eihi.losses import LossConfig
from eihi.synthdata import DatasetSpec, ShiftConfig, generate_dataset, split_domains
from eihi.trainer import (TrainConfig, derive_seed, evaluate, train_discriminator,
                          train_stage_one, train_erm, EmbeddingCache)

HW = 16
BACKBONE = BackboneSpec(in_channels=3, image_hw=(HW, HW),
                        blocks=(ConvBlockSpec(6), ConvBlockSpec(12), ConvBlockSpec(24)),
                        head="flatten", dense=(32,))

def make_split(seed):
    dspec = DatasetSpec(num_classes=4, num_domains=10, samples_per_cell=30,
                        height=HW, width=HW, noise_sigma=0.02, seed=derive_seed(7, seed))
    return split_domains(generate_dataset(dspec), ShiftConfig.make(range(8),{8,9}),
                         seed=derive_seed(seed, 0x5117))

def eihi(seed, lr, epochs, M=9, t=0.01, include_cov=True):
    split = make_split(seed)
    t0=time.time()
    cfg = TrainConfig(seed=derive_seed(seed,2), epochs=epochs, batch_size=32, num_negatives=M,
                      learning_rate=lr, optimizer="adam", probe_every=5,
                      loss=LossConfig(temperature=t, include_covariance=include_cov))
    params, tr = train_stage_one(split.train, split.validation, cfg, backbone_spec=BACKBONE)
    cache = EmbeddingCache()
    dcfg = TrainConfig(seed=derive_seed(seed,3), epochs=60, batch_size=64,
                       learning_rate=0.003, optimizer="adam")
    disc, _ = train_discriminator(params, split.train, split.validation, dcfg, cache=cache)
    acc = evaluate(params, disc, None, split.test, cache=cache).accuracy
    return acc, time.time()-t0, tr

def erm(seed):
    split = make_split(seed)
    cfg = TrainConfig(seed=derive_seed(seed,1), epochs=25, batch_size=32,
                      learning_rate=0.003, optimizer="adam")
    params, disc, tr = train_erm(split.train, split.validation, cfg, backbone_spec=BACKBONE)
    return evaluate(params, disc, None, split.test).accuracy

if __name__ == "__main__":
    mode = sys.argv[1] if len(sys.argv)>1 else "both"
    if mode in ("erm","both"):
        accs=[erm(s) for s in (0,1,2)]
        print(f"erm 8:2: {np.mean(accs):.3f} {[round(a,2) for a in accs]}", flush=True)
    if mode in ("eihi","both"):
        for lr, ep in [(0.003, 15), (0.001, 15)]:
            out=[eihi(s, lr, ep) for s in (0,1,2)]
            accs=[o[0] for o in out]
            print(f"eihi lr={lr} ep={ep}: {np.mean(accs):.3f} {[round(a,2) for a in accs]} ({out[0][1]:.0f}s/seed; loss {out[0][2].losses[0]:.2f}->{out[0][2].losses[-1]:.2f})", flush=True)
