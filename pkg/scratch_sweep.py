import itertools, time
import numpy as np
import eihi.synthdata as sd
from eihi.diffcore.backbone import BackboneSpec, ConvBlockSpec
from eihi.losses import LossConfig
from eihi.synthdata import DatasetSpec, ShiftConfig, generate_dataset, split_domains, split_mixed
from eihi.trainer import TrainConfig, derive_seed, evaluate, train_erm

HW = 16
BACKBONE = BackboneSpec(in_channels=3, image_hw=(HW, HW),
                        blocks=(ConvBlockSpec(6), ConvBlockSpec(12), ConvBlockSpec(24)),
                        head="flatten", dense=(32,))

def run(seed, mode, epochs=30):
    dspec = DatasetSpec(num_classes=4, num_domains=10, samples_per_cell=20,
                        height=HW, width=HW, noise_sigma=0.02, seed=derive_seed(7, seed))
    data = generate_dataset(dspec)
    ss = derive_seed(seed, 0x5117)
    split = split_mixed(data, 0.2, seed=ss) if mode=="mixed" else split_domains(data, ShiftConfig.make(range(8),{8,9}), seed=ss)
    cfg = TrainConfig(seed=derive_seed(seed,1), epochs=epochs, batch_size=32,
                      learning_rate=0.05, optimizer="momentum")
    params, disc, tr = train_erm(split.train, split.validation, cfg, backbone_spec=BACKBONE)
    return evaluate(params, disc, None, split.test).accuracy

for fg, stripe in [(0.70, 0.08), (0.62, 0.08), (0.70, 0.12), (0.78, 0.10)]:
    sd.GLYPH_FG = fg; sd._STRIPE_AMP = stripe
    t0=time.time()
    mixed = [run(s, "mixed") for s in (0,1)]
    shift = [run(s, "shift") for s in (0,1)]
    print(f"fg={fg} stripe={stripe}: mixed={np.mean(mixed):.3f} {mixed}  shifted={np.mean(shift):.3f} {shift}  ({time.time()-t0:.0f}s)", flush=True)
