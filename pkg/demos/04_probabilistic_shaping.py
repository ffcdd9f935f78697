"""Joint geometric + probabilistic shaping at a small scale, then fit the
learned symbol distribution with the exponential-in-energy family.

Shows the learned probabilities over symbol energy, the fitted lambda, and
the effect of the s-fold symmetry hook on the bit marginals.

Usage: python demos/04_probabilistic_shaping.py [outdir]
"""

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from phaseshape.metrics import entropy_bits, fit_mb_lambda
from phaseshape.models import model_constellation
from phaseshape.shaping import index_to_bits, mb_pmf
from phaseshape.trainer import TrainConfig, evaluate, train

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo_out")
out.mkdir(parents=True, exist_ok=True)

cfg = TrainConfig(
    mode="geopcs", m=4, symmetry=1, epochs=40, batches_per_epoch=10, batch_size=1000,
    num_test_phases=60, half_window=128,
    snr_db_range=(11.0, 11.0), linewidth_hz_range=(100e3, 100e3),
    seed=2, validation_symbols=4096, validation_every=5,
)
print("training joint shaping (s = 1 symmetry) at 11 dB / 100 kHz ...")
ckpt = train(cfg)

sn, sp = cfg.validation_point()
points_t, probs_t, _ = model_constellation(ckpt.spec, ckpt.params.leaves(False), sn, sp)
points, probs = points_t.data, probs_t.data
est = evaluate(ckpt.spec, ckpt.params, cfg, sn, sp, 20000)
print(f"entropy {entropy_bits(probs):.4f} bit, BMI {est.value:.4f} bit/symbol")

bits = index_to_bits(np.arange(2 ** cfg.m), cfg.m)
msb_marginal = probs[bits[:, 0] == 1].sum()
print(f"MSB marginal with s=1 symmetry: {msb_marginal:.12f} (should be 0.5)")

lam, kl = fit_mb_lambda(points, probs)
print(f"exponential fit: lambda = {lam:.4f}, KL = {kl:.2e} bit")

energy = np.abs(points) ** 2
fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
order = np.argsort(energy)
ax1.plot(energy[order], probs[order], "o", ms=4, label="learned")
ax1.plot(energy[order], mb_pmf(points, lam)[order], "x", ms=5,
         label=f"exp fit (lambda {lam:.3f})")
ax1.set_xlabel("|c|^2")
ax1.set_ylabel("probability")
ax1.legend(fontsize=8)
sc = ax2.scatter(points.real, points.imag, s=600 * probs, c=probs, cmap="viridis")
fig.colorbar(sc, ax=ax2, label="probability")
ax2.set_aspect("equal")
ax2.set_title("point size = occurrence probability")
fig.tight_layout()
fig.savefig(out / "geopcs_shaping.png", dpi=150)
print(f"wrote {out / 'geopcs_shaping.png'}")
