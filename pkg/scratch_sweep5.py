import time
import numpy as np
import eihi.synthdata as sd
from eihi.diffcore.backbone import BackboneSpec, ConvBlockSpec
from eihi.synthdata import DatasetSpec, ShiftConfig, generate_dataset, split_domains, split_mixed
from eihi.trainer import TrainConfig, derive_seed, evaluate, train_erm

HW = 16
def backbone(ch=(6,12,24), d=32):
    return BackboneSpec(in_channels=3, image_hw=(HW, HW),
                        blocks=tuple(ConvBlockSpec(c) for c in ch), head="flatten", dense=(d,))

def run(seed, mode, epochs=25, per_cell=30, sigma=0.02, bb=None):
    dspec = DatasetSpec(num_classes=4, num_domains=10, samples_per_cell=per_cell,
                        height=HW, width=HW, noise_sigma=sigma, seed=derive_seed(7, seed))
    data = generate_dataset(dspec)
    ss = derive_seed(seed, 0x5117)
    split = split_mixed(data, 0.2, seed=ss) if mode=="mixed" else split_domains(data, ShiftConfig.make(range(8),{8,9}), seed=ss)
    cfg = TrainConfig(seed=derive_seed(seed,1), epochs=epochs, batch_size=32,
                      learning_rate=0.003, optimizer="adam")
    params, disc, tr = train_erm(split.train, split.validation, cfg, backbone_spec=bb or backbone())
    return evaluate(params, disc, None, split.test).accuracy, evaluate(params, disc, None, split.train).accuracy

t0=time.time(); line = ""
for mode in ("mixed","shift"):
    res = [run(s, mode) for s in (0,1,2)]
    te=[r[0] for r in res]; tr=[r[1] for r in res]
    line += f" {mode}={np.mean(te):.3f} {[round(x,2) for x in te]} (fit {np.mean(tr):.2f})"
print(line + f" ({time.time()-t0:.0f}s)", flush=True)
