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

def run(seed, mode, epochs=30, per_cell=30, sigma=0.02):
    dspec = DatasetSpec(num_classes=4, num_domains=10, samples_per_cell=per_cell,
                        height=HW, width=HW, noise_sigma=sigma, seed=derive_seed(7, seed))
    data = generate_dataset(dspec)
    ss = derive_seed(seed, 0x5117)
    split = split_mixed(data, 0.2, seed=ss) if mode=="mixed" else split_domains(data, ShiftConfig.make(range(8),{8,9}), seed=ss)
    cfg = TrainConfig(seed=derive_seed(seed,1), epochs=epochs, batch_size=32,
                      learning_rate=0.003, optimizer="adam")
    params, disc, tr = train_erm(split.train, split.validation, cfg, backbone_spec=BACKBONE)
    return evaluate(params, disc, None, split.test).accuracy, evaluate(params, disc, None, split.train).accuracy

for op, stripe, sigma in [(0.55, 0.12, 0.02), (0.45, 0.12, 0.03), (0.40, 0.15, 0.03)]:
    sd.GLYPH_OPACITY = op; sd._STRIPE_AMP = stripe
    t0=time.time()
    line = f"op={op} st={stripe} sig={sigma}:"
    for mode in ("mixed","shift"):
        res = [run(s, mode, sigma=sigma) for s in (0,1,2)]
        te = [r[0] for r in res]; tr=[r[1] for r in res]
        line += f" {mode}={np.mean(te):.3f} {[round(x,2) for x in te]} (fit {np.mean(tr):.2f})"
    print(line + f" ({time.time()-t0:.0f}s)", flush=True)
