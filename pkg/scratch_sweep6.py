import time
import numpy as np
import eihi.synthdata as sd
from scratch_sweep5 import run

for stripe, tint, amp in [(0.18, 0.28, 0.30), (0.18, 0.28, 0.34), (0.22, 0.32, 0.30)]:
    sd._STRIPE_AMP = stripe; sd._TINT_AMP = tint; sd._SPOT_AMP = amp
    t0=time.time(); line = f"st={stripe} tint={tint} amp={amp}:"
    for mode in ("mixed","shift"):
        res = [run(s, mode) for s in (0,1,2)]
        te=[r[0] for r in res]; tr=[r[1] for r in res]
        line += f" {mode}={np.mean(te):.3f}{[round(x,2) for x in te]}(fit {np.mean(tr):.2f})"
    print(line + f" ({time.time()-t0:.0f}s)", flush=True)
