"""Re-derive the published conflict table from its summary statistics.

Only means, standard deviations and sample sizes are public.  Welch's t and
the equivalence test need nothing more, so the conflict decisions can be
recomputed exactly and compared with the verdicts reported alongside them.

    python3 demos/04_published_verdicts.py
"""
from conflictbench.published import DATASETS, replay_verdicts

verdicts = replay_verdicts()
names = {"dp": "DP-SGD", "adv": "ADV", "wm": "WM", "rad": "RAD", "di": "DI"}
print(f"{'pair':<12s}" + "".join(f"{d:>18s}" for d in DATASETS))
for base in ("dp", "adv"):
    for own in ("wm", "rad", "di"):
        cells = []
        for ds in DATASETS:
            v = verdicts[(base, own, ds)]
            cells.append(f"conflict ({','.join(v.failing)})" if v.conflict else "ok")
        print(f"{names[own] + ' + ' + names[base]:<12s}" + "".join(f"{c:>18s}" for c in cells))

v = verdicts[("dp", "wm", "MNIST")]
d = v.delta("wm")
print()
print(f"WM + DP-SGD on MNIST: trigger accuracy {d.baseline_mean:.2f} -> {d.combined_mean:.2f}, "
      f"Welch t = {d.t_test.t:.1f}, p = {d.t_test.p:.1e}, equivalent: {d.tost.equivalent}")
print(f"rule: {d.rule}")
