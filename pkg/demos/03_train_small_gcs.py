"""Train a small geometric shaping model end to end and look at what it
learned: loss curve, validation BMI, and the constellation with bit labels.

Scaled down (m = 4, a few minutes of CPU); the acceptance suite runs the
full desk-scale m = 6 comparison.

Usage: python demos/03_train_small_gcs.py [outdir]
"""

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from phaseshape.models import model_constellation
from phaseshape.shaping import Constellation
from phaseshape.trainer import TrainConfig, evaluate, train

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo_out")
out.mkdir(parents=True, exist_ok=True)

cfg = TrainConfig(
    mode="gcs", m=4, epochs=40, batches_per_epoch=10, batch_size=1000,
    num_test_phases=60, half_window=128,
    snr_db_range=(14.0, 14.0), linewidth_hz_range=(100e3, 100e3),
    seed=1, validation_symbols=4096, validation_every=5,
)
print("training 16-point geometric shaping at 14 dB / 100 kHz ...")
ckpt = train(cfg)

epochs = [h["epoch"] for h in ckpt.history]
losses = [h["loss"] for h in ckpt.history]
vals = [(h["epoch"], h["val_bmi"]) for h in ckpt.history if h["val_bmi"] is not None]

sn, sp = cfg.validation_point()
est = evaluate(ckpt.spec, ckpt.params, cfg, sn, sp, 20000)
print(f"final BMI {est.value:.4f} bit/symbol on {est.valid_symbols} symbols")

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
ax1.plot(epochs, losses, label="training loss")
ax1.plot(*zip(*vals), "o-", ms=3, label="validation BMI (regular BPS)")
ax1.set_xlabel("epoch")
ax1.legend(fontsize=8)

points_t, probs_t, _ = model_constellation(ckpt.spec, ckpt.params.leaves(False), sn, sp)
const = Constellation(points_t.data, probs_t.data, m=cfg.m)
ax2.scatter(const.points.real, const.points.imag, s=30)
for i, c in enumerate(const.points):
    ax2.annotate(const.hex_label(i), (c.real, c.imag), fontsize=7,
                 textcoords="offset points", xytext=(4, 2))
ax2.set_aspect("equal")
ax2.set_title("learned constellation (hex labels)")
fig.tight_layout()
fig.savefig(out / "gcs_training.png", dpi=150)
print(f"wrote {out / 'gcs_training.png'}")
