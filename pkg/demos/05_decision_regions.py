"""Render the neural demapper's per-bit decision regions of a trained model.

Trains a quick model, then evaluates the demapper on a dense complex grid
and draws one clipped-LLR panel per bit.

Usage: python demos/05_decision_regions.py [outdir]
"""

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from phaseshape.demapper import decision_region_grid
from phaseshape.models import model_constellation, model_demapper
from phaseshape.trainer import TrainConfig, train

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo_out")
out.mkdir(parents=True, exist_ok=True)

cfg = TrainConfig(
    mode="gcs", m=4, epochs=30, batches_per_epoch=10, batch_size=1000,
    num_test_phases=60, half_window=128,
    snr_db_range=(14.0, 14.0), linewidth_hz_range=(100e3, 100e3),
    seed=3, validation_symbols=4096, validation_every=10,
)
print("training a 16-point model for the demapper panels ...")
ckpt = train(cfg)

sn, sp = cfg.validation_point()
net = model_demapper(ckpt.spec, ckpt.params.leaves(False))
points_t, _, _ = model_constellation(ckpt.spec, ckpt.params.leaves(False), sn, sp)
points = points_t.data

bounds = (-1.8, 1.8, -1.8, 1.8)
res = 161
fig, axes = plt.subplots(1, cfg.m, figsize=(3.2 * cfg.m, 3.4))
for bit, ax in enumerate(axes):
    grid = decision_region_grid(net, bit, bounds, res, sn, sp)
    im = ax.imshow(grid, origin="lower", extent=bounds, cmap="RdBu", vmin=-5, vmax=5)
    ax.scatter(points.real, points.imag, s=8, c="k")
    ax.set_title(f"bit {bit + 1} (MSB first)", fontsize=9)
    signs = np.sign(grid)
    print(f"bit {bit + 1}: {np.mean(signs > 0) * 100:.1f}% of the grid decides 0")
fig.colorbar(im, ax=axes.ravel().tolist(), label="LLR (clipped to [-5, 5])")
fig.savefig(out / "decision_regions.png", dpi=150)
print(f"wrote {out / 'decision_regions.png'}")
