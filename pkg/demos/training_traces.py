"""Train the 10-layer baseline and its topology-rescaled twin on a
synthetic block graph and look at the per-layer traces.

    python demos/training_traces.py [out_dir]
"""
import sys

from gcnenergy import PatchConfig, TrainConfig, train_run
from gcnenergy.data import SyntheticSpec, resolve_dataset

ds = resolve_dataset(SyntheticSpec.parse("hard"))
out = sys.argv[1] if len(sys.argv) > 1 else None
cfg = TrainConfig(runs=1)

runs = {}
for name, patches in (("baseline", PatchConfig()), ("tr1", PatchConfig(resolution=1.0))):
    rec = train_run(cfg.replace(patches=patches), ds, seed=0, out_dir=out, run_id=name)
    runs[name] = rec
    s = rec.summary
    print(f"{name}: {s['epochs_run']} epochs, best epoch {s['best_epoch']}, "
          f"train loss {s['train_loss']:.3f}, test acc {s['test_acc']:.3f}")

for name, rec in runs.items():
    print(f"\n{name}: layer-wise weight-gradient norm at epochs 0 / 50 / 150")
    for layer in (1, 5, 9):
        g = rec.series("gnorm", layer)
        picks = [g[min(e, len(g) - 1)] for e in (0, 50, 150)]
        print(f"  layer {layer}: " + "  ".join(f"{v:.2e}" for v in picks))

base, tr = runs["baseline"].series("gnorm", 1), runs["tr1"].series("gnorm", 1)
n = min(len(base), len(tr))
share = (tr[:n] > base[:n]).mean()
print(f"\nlayer-1 gradients larger under TR at {100 * share:.0f}% of {n} matched epochs")
