"""A few rows of the ablation matrix on the synthetic block graph.

    python demos/ablation.py [runs]
"""
import sys

from gcnenergy import TrainConfig, ablate
from gcnenergy.data import SyntheticSpec, resolve_dataset
from gcnenergy.harness import TABLE1_REPORTED, TABLE1_VARIANTS

runs = int(sys.argv[1]) if len(sys.argv) > 1 else 2
names = ["baseline", "tr1", "tr1_skip", "skip_wnorm7"]
ds = resolve_dataset(SyntheticSpec.parse("hard"))
rows = ablate(ds, TrainConfig(runs=runs), {k: TABLE1_VARIANTS[k] for k in names})

print(f"{'variant':<14}{'train loss':>11}{'train acc':>11}{'test acc':>10}   citation-graph figures")
for s in rows:
    ref = TABLE1_REPORTED[s.variant]
    print(f"{s.variant:<14}{s.mean('train_loss'):>11.3f}{s.mean('train_acc'):>11.3f}"
          f"{s.mean('test_acc'):>10.3f}   {ref[0]:.3f} / {ref[1]:.3f} / {ref[3]:.3f}")
