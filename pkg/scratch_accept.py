"""5-seed verification of every heavy acceptance criterion."""
import time
import numpy as np
from eihi.bench.experiments import desk_grid, run_experiment

t_all = time.time()
grid = {c.name: c for c in desk_grid(seeds=(0, 1, 2, 3, 4))}
want = ["erm_mixed", "erm_8_2", "eihi_stage_one_8_2", "eihi_no_cov_8_2",
        "eihi_stage_one_5_1", "eihi_full_5_1"]
reports = {}
for name in want:
    t0 = time.time()
    rep = run_experiment(grid[name], workers=2)
    reports[name] = rep
    accs = [round(a, 3) for a in rep.accuracies]
    print(f"{name}: {accs} mean={rep.mean_accuracy:.4f} ({time.time()-t0:.0f}s)", flush=True)
    for s in rep.seed_results:
        if s.error: print(f"  !! seed {s.seed}: {s.error}", flush=True)

m, e = reports["erm_mixed"].mean_accuracy, reports["erm_8_2"].mean_accuracy
print(f"\nC4 diversity direction: mixed {m:.3f} - shifted {e:.3f} = {100*(m-e):.1f} pts (need >= 5)")
s1 = reports["eihi_stage_one_8_2"].mean_accuracy
print(f"C5 stage-one benefit: s1 {s1:.3f} vs erm+0.03 {e+0.03:.3f} -> {'PASS' if s1 >= e+0.03 else 'FAIL'}")
nc = reports["eihi_no_cov_8_2"].mean_accuracy
print(f"C6 cov ablation: s1 {s1:.3f} >= no_cov {nc:.3f} -> {'PASS' if s1 >= nc else 'FAIL'}")
f51 = reports["eihi_full_5_1"].mean_accuracy
s51 = reports["eihi_stage_one_5_1"].mean_accuracy
print(f"C7 pruning benefit 5:1: full {f51:.3f} >= s1 {s51:.3f} -> {'PASS' if f51 >= s51 else 'FAIL'}")
full = reports["eihi_full_5_1"].seed_results
pre = [s.pre_prune_accuracy for s in full]
s1_51accs = [s.accuracy for s in reports["eihi_stage_one_5_1"].seed_results]
print(f"   paired pre: {[round(p,3) for p in pre]} == s1_51 {[round(a,3) for a in s1_51accs]}: {pre == s1_51accs}")
align = sum(1 for s in full if s.corr_eliminated is not None and s.corr_retained is not None
            and s.corr_eliminated > s.corr_retained)
print(f"C8 alignment: corrE>corrR in {align}/5 seeds (need >= 4)")
print(f"   elim counts: {[s.eliminated_count for s in full]}")
print(f"total: {time.time()-t_all:.0f}s")
