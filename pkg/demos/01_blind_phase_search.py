"""Walk through the blind phase search on a noisy 16-QAM burst.

Generates a Wiener phase trace, runs the regular and the differentiable
(softmin) estimator side by side, and saves a comparison plot plus the
constellation before/after correction.

Usage: python demos/01_blind_phase_search.py [outdir]
"""

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from phaseshape.bps import BpsConfig, bps
from phaseshape.channel import (
    apply_channel,
    sigma_n_from_snr,
    sigma_phi_from_linewidth,
    substream,
    wiener_phase_trace,
)
from phaseshape.shaping import square_qam

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo_out")
out.mkdir(parents=True, exist_ok=True)

K, L, N = 4000, 60, 128
snr_db, linewidth = 17.0, 100e3
sigma_n = sigma_n_from_snr(snr_db)
sigma_phi = sigma_phi_from_linewidth(linewidth, 32e9)
print(f"SNR {snr_db} dB -> sigma_n = {sigma_n:.4f}; "
      f"linewidth {linewidth/1e3:.0f} kHz -> sigma_phi = {sigma_phi:.2e} rad/symbol")

qam = square_qam(4)
idx = substream(1, "data_bits", 0).integers(0, 16, K)
trace = wiener_phase_trace(K, sigma_phi, substream(1, "phase", 0), random_start=False)
z = apply_channel(qam[idx], sigma_n, trace, substream(1, "noise", 0))

# square QAM is pi/2-ambiguous, so the search spans one quadrant
regular = bps(z, qam, BpsConfig(num_test_phases=L, half_window=N, mode="regular",
                                phase_span="quadrant"))
soft = bps(z, qam, BpsConfig(num_test_phases=L, half_window=N, mode="differentiable",
                             temperature=0.001, phase_span="quadrant"))
sl = regular.valid_slice

fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
ax1.plot(trace.phases % (np.pi / 2), lw=0.8, label="true phase mod pi/2")
ax1.plot(np.arange(K)[sl], regular.phase.data[sl] % (np.pi / 2), lw=0.8, label="regular BPS")
ax1.set_ylabel("phase (rad)")
ax1.legend(loc="upper right", fontsize=8)
ax2.plot(np.arange(K)[sl],
         np.abs(regular.phase.data[sl] - soft.phase.data[sl]), lw=0.8, color="tab:red")
ax2.set_ylabel("|soft - regular| (rad)")
ax2.set_xlabel("symbol index")
fig.tight_layout()
fig.savefig(out / "bps_tracking.png", dpi=150)

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 4))
ax1.scatter(z.real[sl], z.imag[sl], s=2, alpha=0.3)
ax1.set_title("received")
ax2.scatter(regular.corrected.data.real[sl], regular.corrected.data.imag[sl],
            s=2, alpha=0.3)
ax2.set_title("after carrier recovery")
for ax in (ax1, ax2):
    ax.set_aspect("equal")
    ax.set_xlim(-1.8, 1.8)
    ax.set_ylim(-1.8, 1.8)
fig.tight_layout()
fig.savefig(out / "bps_constellations.png", dpi=150)

err = np.abs((regular.phase.data[sl] - trace.phases[sl] + np.pi / 4) % (np.pi / 2) - np.pi / 4)
print(f"mean |phase error| (regular): {err.mean():.4f} rad "
      f"(test-phase spacing {np.pi/2/L:.4f} rad)")
print(f"wrote {out / 'bps_tracking.png'} and {out / 'bps_constellations.png'}")
