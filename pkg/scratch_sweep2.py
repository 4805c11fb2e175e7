import time
import numpy as np
import eihi.synthdata as sd
from eihi.diffcore.backbone import BackboneSpec, ConvBlockSpec
from eihi.synthdata import DatasetSpec, ShiftConfig, generate_dataset, split_domains, split_mixed
from eihi.trainer import TrainConfig, derive_seed, evaluate, train_erm

HW = 16
BACKBONE = BackboneSpec(in_channels=3, image_hw=(HW, HW),
                        blocks=(ConvBlockSpec(6), ConvBlockSpec(12), ConvBlockSpec(24)),
                        head="flatten", dense=(32,))

def run(seed, mode, epochs, per_cell):
    dspec = DatasetSpec(num_classes=4, num_domains=10, samples_per_cell=per_cell,
                        height=HW, width=HW, noise_sigma=0.02, seed=derive_seed(7, seed))
    data = generate_dataset(dspec)
    ss = derive_seed(seed, 0x5117)
    split = split_mixed(data, 0.2, seed=ss) if mode=="mixed" else split_domains(data, ShiftConfig.make(range(8),{8,9}), seed=ss)
    cfg = TrainConfig(seed=derive_seed(seed,1), epochs=epochs, batch_size=32,
                      learning_rate=0.003, optimizer="adam")
    params, disc, tr = train_erm(split.train, split.validation, cfg, backbone_spec=BACKBONE)
    test_acc = evaluate(params, disc, None, split.test).accuracy
    train_acc = evaluate(params, disc, None, split.train).accuracy
    return test_acc, train_acc

for fg, stripe in [(0.70, 0.10), (0.80, 0.15)]:
    sd.GLYPH_FG = fg; sd._STRIPE_AMP = stripe
    t0=time.time()
    for mode in ("mixed","shift"):
        res = [run(s, mode, 30, 30) for s in (0,1,2)]
        te = [r[0] for r in res]; tr = [r[1] for r in res]
        print(f"fg={fg} st={stripe} {mode}: test={np.mean(te):.3f} {[round(x,2) for x in te]} trainfit={np.mean(tr):.2f}", flush=True)
    print(f"  ({time.time()-t0:.0f}s)")
