"""Render a small synthetic font dataset, train with the HE block, evaluate and predict.

Runs in well under a minute on one core. The full desk-scale setting
(20 fonts, 64 px) is exercised by the acceptance suite and by the CLI.
"""
import tempfile
from pathlib import Path

import numpy as np

from hesup import BackboneConfig, HEConfig, TrainConfig, build_model, evaluate, load_checkpoint, predict, train_loop
from hesup.data import generate_dataset, load_batch, split_dataset

out = Path(tempfile.mkdtemp(prefix="hesup-demo-"))

# 6 fonts x 36 glyphs at 32 px; 6 glyphs of every font are held out for testing
m = generate_dataset(6, size=32, seed=0, out_dir=out)
m = split_dataset(m, holdout_k=6, seed=0)
m.save(out)
print(f"{len(m.samples)} images in {out}")
for f in m.fonts:
    print(f"  font {f.font_id}: width {f.stroke_width:.3f}  slant {f.slant:+6.2f}  serif {f.serif_len:.3f}")

model = build_model(BackboneConfig((8, 16, 32), num_classes=len(m.fonts), input_size=32), seed=0)
cfg = TrainConfig(lr0=0.05, batch_size=16, epochs=12, he=HEConfig(beta=0.5))
print("untrained test top-1/top-5:", evaluate(model, m, "test"))

ckpt = train_loop(model, m, cfg, out_path=out / "model.ckpt")
for row in ckpt.history[::3] + ckpt.history[-1:]:
    print(f"  epoch {row['epoch']:>2}  lr {row['lr']:.4f}  loss {row['train_loss']:.3f}  test top-1 {row['test_top1']:.2f}")

# the checkpoint rebuilds the same network
again = load_checkpoint(out / "model.ckpt").model()
x, y = load_batch(m, m.split["test"][::9][:4])  # a few different fonts
top, scores = predict(again, x, k=3)
for label, ranked in zip(y, top):
    print(f"  true font {label}: ranked {ranked.tolist()}")
assert np.array_equal(top, predict(model, x, k=3)[0])
