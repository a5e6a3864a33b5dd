"""Sweep the suppression weight beta on a small dataset, a few seeds each.

beta=1 is the plain network. The same sweep at full toy scale is
`hesup ablate-beta --data DIR --betas 1.0,0.9,0.7,0.5,0.3 --seeds 3`.
"""
import tempfile

import numpy as np

from hesup import BackboneConfig, HEConfig, TrainConfig, build_model, train_loop
from hesup.data import generate_dataset, split_dataset

out = tempfile.mkdtemp(prefix="hesup-sweep-")
m = split_dataset(generate_dataset(8, size=32, seed=1, out_dir=out), holdout_k=6, seed=1)

betas = (1.0, 0.7, 0.5, 0.3)
seeds = (0, 1)
print(f"{'beta':>5}  " + "  ".join(f"seed{s}" for s in seeds) + "   mean")
for beta in betas:
    accs = []
    for seed in seeds:
        model = build_model(BackboneConfig((8, 16, 32), num_classes=8, input_size=32), seed=seed)
        cfg = TrainConfig(lr0=0.05, batch_size=16, epochs=8, he=HEConfig(beta=beta), seed=seed)
        accs.append(train_loop(model, m, cfg).history[-1]["test_top1"])
    print(f"{beta:>5.1f}  " + "  ".join(f"{a:5.2f}" for a in accs) + f"   {np.mean(accs):.3f}")
