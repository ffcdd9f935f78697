"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s`.  The desk-scale training
criteria (6, 7, 9) train several models and take tens of minutes on a
laptop-class CPU; everything else finishes in seconds to a couple of
minutes.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from phaseshape.bps import BpsConfig, bps, temperature_from_raw
from phaseshape.channel import (
    apply_channel,
    sigma_n_from_snr,
    sigma_phi_from_linewidth,
    substream,
    wiener_phase_trace,
)
from phaseshape.cli import main
from phaseshape.demapper import gaussian_reference_demap
from phaseshape.metrics import LlrBatch, bmi, entropy_bits, fit_mb_lambda, gcs_loss, geopcs_loss
from phaseshape.models import model_constellation
from phaseshape.shaping import Constellation, index_to_bits, mb_pmf, square_qam
from phaseshape.trainer import TrainConfig, evaluate, full_loss_gradient_check, train


def _report(criterion: int, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {criterion:2d} {'PASS' if ok else 'FAIL'} - {detail}")


def circ_dist(a, b, period):
    return np.abs((np.asarray(a) - np.asarray(b) + period / 2) % period - period / 2)


# -- shared desk-scale trainings (criteria 6, 7, 8) ----------------------------


SEEDS = (1, 2, 3)


def _desk_cfg(mode: str, seed: int, **kw) -> TrainConfig:
    base = dict(
        mode=mode,
        m=6,
        epochs=50,
        batches_per_epoch=10,
        batch_size=2000,
        num_test_phases=60,
        half_window=128,
        snr_db_range=(17.0, 17.0),
        linewidth_hz_range=(100e3, 100e3),
        seed=seed,
        validation_symbols=4096,
        validation_every=10,
    )
    base.update(kw)
    return TrainConfig(**base)


def _train_and_score(cfg: TrainConfig, seed: int):
    ckpt = train(cfg)
    assert not ckpt.diverged
    sn, sp = cfg.validation_point()
    est = evaluate(ckpt.spec, ckpt.params, cfg, sn, sp, 20000, seed_context=("eval", seed))
    return ckpt, est.value


@pytest.fixture(scope="module")
def desk_runs():
    """GCS, square-QAM baseline, GeoPCS: 3 seeds each at SNR 17 dB / 100 kHz."""
    runs = {}
    # The QAM baseline has no trainable mapper, so its training needs none of
    # the warm softmin exploration; a cold fixed temperature is its strongest
    # honest configuration (verified: the warm anneal only hurts it).
    for label, mode, kw in (
        ("gcs", "gcs", {}),
        ("qam", "qam_pcs", dict(fixed_lambda=0.0, phase_span="quadrant",
                                random_start_phase=False, t_start=0.001, t_end=0.001)),
        ("geopcs", "geopcs", {}),
    ):
        ckpts, scores = [], []
        for seed in SEEDS:
            ckpt, value = _train_and_score(_desk_cfg(mode, seed, **kw), seed)
            ckpts.append(ckpt)
            scores.append(value)
        runs[label] = (ckpts, np.asarray(scores))
    return runs


# -- criterion 1: gradient integrity --------------------------------------------


def test_criterion_1_gradient_integrity():
    t0 = time.time()
    worst = 0.0
    ok = True
    for mode in ("gcs", "geopcs"):
        for t in (1.0, 0.1, 0.001):
            report = full_loss_gradient_check(
                mode=mode, temperature=t, m=4, batch_size=256,
                num_test_phases=16, half_window=16, tol=1e-3,
            )
            worst = max(worst, float(np.max(report.rel_err)))
            if not report.ok:
                ok = False
                print(report.summary())
    runtime = time.time() - t0
    _report(1, ok and runtime <= 120,
            f"full GCS+GeoPCS losses at t in (1, 0.1, 0.001): max rel err {worst:.2e}, "
            f"{runtime:.0f}s")
    assert ok
    assert runtime <= 120


# -- criterion 2: differentiable vs regular BPS ----------------------------------


def test_criterion_2_soft_matches_regular_bps():
    # 16-QAM runs the span-limited BPS (square QAM is ambiguous under pi/2
    # rotations, full-span distance rows tie exactly); the boundary exclusion
    # applies at the span wrap where the softmin mixes both edges.
    t0 = time.time()
    qam = square_qam(4)
    K, L, N = 10_000, 60, 128
    sn = sigma_n_from_snr(17.0)
    sp = sigma_phi_from_linewidth(100e3, 32e9)
    idx = substream(0, "data_bits", 0).integers(0, 16, K)
    trace = wiener_phase_trace(K, sp, substream(0, "phase", 0), random_start=False)
    z = apply_channel(qam[idx], sn, trace, substream(0, "noise", 0))
    reg = bps(z, qam, BpsConfig(num_test_phases=L, half_window=N, mode="regular",
                                phase_span="quadrant"))
    soft = bps(z, qam, BpsConfig(num_test_phases=L, half_window=N, mode="differentiable",
                                 temperature=0.001, phase_span="quadrant"))
    span = np.pi / 2
    margin = 2 * np.pi / 60
    sl = reg.valid_slice
    disagree = circ_dist(soft.phase.data[sl], reg.phase.data[sl], span)
    true_mod = trace.phases[sl] % span
    eligible = (true_mod >= margin) & (true_mod <= span - margin)
    agreement = float(np.mean(disagree[eligible] <= margin))
    runtime = time.time() - t0
    ok = agreement >= 0.99 and runtime <= 60
    _report(2, ok, f"soft/regular agreement {agreement * 100:.2f}% on "
                   f"{int(eligible.sum())} boundary-free symbols, {runtime:.0f}s")
    assert agreement >= 0.99
    assert runtime <= 60


# -- criterion 3: exact rotation recovery ------------------------------------------


def test_criterion_3_regular_bps_exact_recovery():
    t0 = time.time()
    rng = np.random.default_rng(42)
    pts = rng.normal(size=16) + 1j * rng.normal(size=16)
    pts /= np.sqrt(np.mean(np.abs(pts) ** 2))
    sym = pts[rng.integers(0, 16, 1000)]
    worst = 0.0
    for L in (4, 16, 60):
        for theta in np.arange(L) / L * 2 * np.pi:
            res = bps(sym * np.exp(1j * theta), pts,
                      BpsConfig(num_test_phases=L, half_window=8, mode="regular"))
            est = res.phase.data[res.valid_slice]
            worst = max(worst, float(np.max(circ_dist(est, theta, 2 * np.pi))))
    runtime = time.time() - t0
    ok = worst < 1e-12 and runtime <= 10
    _report(3, ok, f"rotation recovery for L in (4, 16, 60): worst error {worst:.1e}, "
                   f"{runtime:.1f}s")
    assert worst < 1e-12
    assert runtime <= 10


# -- criterion 4: metric identities ---------------------------------------------------


def test_criterion_4_metric_identities():
    t0 = time.time()
    rng = np.random.default_rng(7)
    worst_g, worst_p = 0.0, 0.0
    for _ in range(100):
        m = int(rng.integers(1, 7))
        P = int(rng.integers(4, 200))
        bits = rng.integers(0, 2, (P, m))
        llrs = rng.normal(scale=4.0, size=(P, m))
        probs = rng.dirichlet(np.ones(2**m))
        batch = LlrBatch(llrs, bits)
        h = entropy_bits(probs)
        worst_g = max(worst_g, abs(gcs_loss(llrs, bits) - (m - bmi(batch, float(m)).value)))
        worst_p = max(worst_p, abs(geopcs_loss(llrs, bits, probs) - (-bmi(batch, h).value)))
        assert bmi(batch, h).value <= h + 1e-9
    runtime = time.time() - t0
    ok = worst_g < 1e-12 and worst_p < 1e-12 and runtime <= 10
    _report(4, ok, f"loss identities on 100 random batches: max dev "
                   f"{max(worst_g, worst_p):.2e}, {runtime:.1f}s")
    assert worst_g < 1e-12 and worst_p < 1e-12


# -- criterion 5: AWGN sanity against numerical integration ------------------------------


def _bmi_by_integration(points, probs, m, sigma_n):
    sig = sigma_n / np.sqrt(2.0)
    lim = np.max(np.abs(points)) + 6.0 * sig
    h = 0.125 * sig
    axis = np.arange(-lim, lim + h, h)
    y = (axis[None, :] + 1j * axis[:, None]).ravel()
    dens = np.empty((y.size, len(points)))
    for j, c in enumerate(points):
        dens[:, j] = probs[j] / (np.pi * sigma_n**2) * np.exp(-np.abs(y - c) ** 2 / sigma_n**2)
    py = dens.sum(axis=1)
    labels = np.arange(len(points))
    eps = 1e-300
    total = 0.0
    for i in range(m):
        ones = ((labels >> (m - 1 - i)) & 1).astype(bool)
        p1 = probs[ones].sum()
        h_prior = -sum(q * np.log2(q) for q in (p1, 1 - p1) if q > 0)
        p1y = dens[:, ones].sum(axis=1) / py
        h_cond = -(p1y * np.log2(np.maximum(p1y, eps))
                   + (1 - p1y) * np.log2(np.maximum(1 - p1y, eps)))
        total += h_prior - h**2 * np.sum(py * h_cond)
    return total


def test_criterion_5_awgn_reference_bmi_vs_integration():
    t0 = time.time()
    qam = square_qam(4)
    const = Constellation(qam, np.full(16, 1 / 16), m=4)
    sigma_n = sigma_n_from_snr(12.0)
    n = 1_000_000
    rng = np.random.default_rng(11)
    idx = rng.integers(0, 16, n)
    z = qam[idx] + sigma_n / np.sqrt(2) * (rng.normal(size=n) + 1j * rng.normal(size=n))
    llrs = gaussian_reference_demap(z, const, sigma_n)
    mc = bmi(LlrBatch(llrs, index_to_bits(idx, 4)), 4.0).value
    truth = _bmi_by_integration(qam, np.full(16, 1 / 16), 4, sigma_n)
    runtime = time.time() - t0
    ok = abs(mc - truth) < 0.02 and runtime <= 120
    _report(5, ok, f"16-QAM @ 12 dB: Monte-Carlo {mc:.4f} vs quadrature {truth:.4f} "
                   f"(|diff| {abs(mc - truth):.4f} bit), {runtime:.0f}s")
    assert abs(mc - truth) < 0.02
    assert runtime <= 120


# -- criteria 6 + 7: desk-scale shaping gains ----------------------------------------------


def test_criterion_6_gcs_beats_square_qam(desk_runs):
    gcs = np.median(desk_runs["gcs"][1])
    qam = np.median(desk_runs["qam"][1])
    gain = gcs - qam
    ok = gain >= 0.03
    _report(6, ok, f"median BMI: GCS {gcs:.4f} vs square-QAM baseline {qam:.4f} "
                   f"(gain {gain:+.4f} bit/symbol, threshold 0.03)")
    assert gain >= 0.03


def test_criterion_7_geopcs_not_worse_than_gcs(desk_runs):
    gcs = np.median(desk_runs["gcs"][1])
    geo = np.median(desk_runs["geopcs"][1])
    gap = geo - gcs
    ok = gap >= -0.01
    _report(7, ok, f"median BMI: GeoPCS {geo:.4f} vs GCS {gcs:.4f} (gap {gap:+.4f} "
                   f"bit/symbol, floor -0.01)")
    assert gap >= -0.01


# -- criterion 8: exponential-family fit --------------------------------------------------


def test_criterion_8_mb_fit(desk_runs):
    t0 = time.time()
    rng = np.random.default_rng(5)
    pts = rng.normal(size=64) + 1j * rng.normal(size=64)
    pts /= np.sqrt(np.mean(np.abs(pts) ** 2))
    lam_planted = 0.37
    lam, kl = fit_mb_lambda(pts, mb_pmf(pts, lam_planted))
    oracle_ok = abs(lam - lam_planted) < 1e-6 and kl <= 1e-12 and time.time() - t0 <= 1.0

    fits = []
    for ckpt in desk_runs["geopcs"][0]:
        sn, sp = ckpt.config.validation_point()
        points_t, probs_t, _ = model_constellation(ckpt.spec, ckpt.params.leaves(False), sn, sp)
        fits.append(fit_mb_lambda(points_t.data, probs_t.data))
    best = min(f[1] for f in fits)
    trained_ok = best <= 1e-3
    _report(8, oracle_ok and trained_ok,
            f"planted fit: lambda {lam:.6f} (true 0.37), KL {kl:.1e}; trained GeoPCS "
            f"shapers: " + ", ".join(f"lambda {l:.3f}/KL {k:.2e}" for l, k in fits)
            + " bit (limit 1e-3 on the best seed)")
    assert oracle_ok
    # Known red at desk scale: the shaper's stationary point is exactly the
    # exponential family, but within the budget pinned by criteria 6/7
    # (500 Adam steps at the fixed 1e-3 learning rate) the per-logit jitter
    # floor leaves KL at 2e-3..6e-3.  See the decisions ledger.
    assert trained_ok, f"best trained-shaper KL {best:.2e} bit exceeds 1e-3"


# -- criterion 9: trainable temperature comparison ------------------------------------------


@pytest.fixture(scope="module")
def trainable_t_runs():
    # per seed, the validation BMI is averaged over 3 independent blocks so
    # the across-seed variance reflects model quality, not Monte-Carlo noise
    out = {}
    for L in (30, 60):
        for trainable in (False, True):
            scores = []
            temps = []
            for seed in SEEDS:
                cfg = TrainConfig(
                    mode="gcs", m=4, epochs=50, batches_per_epoch=10, batch_size=1000,
                    num_test_phases=L, half_window=128,
                    snr_db_range=(17.0, 17.0), linewidth_hz_range=(100e3, 100e3),
                    seed=seed, trainable_temperature=trainable,
                    validation_symbols=4096, validation_every=10,
                )
                ckpt = train(cfg)
                assert not ckpt.diverged
                sn, sp = cfg.validation_point()
                blocks = []
                for r in range(3):
                    if trainable:
                        t_learned = temperature_from_raw(float(ckpt.params.block("t_raw")[0]))
                        est = evaluate(ckpt.spec, ckpt.params, cfg, sn, sp, 20000,
                                       bps_mode="differentiable", temperature=t_learned,
                                       seed_context=("eval", 10 * seed + r))
                    else:
                        est = evaluate(ckpt.spec, ckpt.params, cfg, sn, sp, 20000,
                                       seed_context=("eval", 10 * seed + r))
                    blocks.append(est.value)
                if trainable:
                    temps.append(t_learned)
                scores.append(float(np.mean(blocks)))
            out[(L, "trainable" if trainable else "regular")] = (np.asarray(scores), temps)
    return out


def test_criterion_9_regular_beats_trainable_soft_at_l60(trainable_t_runs):
    reg, _ = trainable_t_runs[(60, "regular")]
    soft, temps = trainable_t_runs[(60, "trainable")]
    mean_ok = reg.mean() >= soft.mean()
    var_ok = soft.var(ddof=1) > reg.var(ddof=1)
    reg30, _ = trainable_t_runs[(30, "regular")]
    soft30, _ = trainable_t_runs[(30, "trainable")]
    _report(9, mean_ok and var_ok,
            f"L=60: regular {reg.mean():.4f} (var {reg.var(ddof=1):.2e}) vs trainable-soft "
            f"{soft.mean():.4f} (var {soft.var(ddof=1):.2e}, learned t {np.mean(temps):.3f}); "
            f"L=30: regular {reg30.mean():.4f} vs trainable-soft {soft30.mean():.4f}")
    assert mean_ok
    assert var_ok


# -- trained-model decision regions (supports the grid-export examples) -----------------------


def test_trained_model_decision_regions_have_both_signs(desk_runs):
    from phaseshape.demapper import decision_region_grid
    from phaseshape.models import model_demapper

    ckpt = desk_runs["gcs"][0][0]
    sn, sp = ckpt.config.validation_point()
    net = model_demapper(ckpt.spec, ckpt.params.leaves(False))
    for bit in range(ckpt.spec.m):
        grid = decision_region_grid(net, bit, (-1.8, 1.8, -1.8, 1.8), 65, sn, sp)
        assert np.any(grid > 0) and np.any(grid < 0), f"bit {bit} region is one-sided"


# -- criterion 10: command determinism --------------------------------------------------------


def test_criterion_10_cli_byte_determinism(tmp_path):
    t0 = time.time()
    cfg_text = """
mode = gcs
bits_per_symbol = 2
epochs = 3
batches_per_epoch = 2
batch_size = 400
bps.num_test_phases = 8
bps.half_window = 8
demapper.hidden = 16,16
channel.snr_db = 14
channel.linewidth_hz = 100e3
validation.num_symbols = 600
evaluation.num_symbols = 800
seed = 21
"""
    cfg = tmp_path / "cfg.txt"
    cfg.write_text(cfg_text)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
        outs.append(out)
    same_csv = (outs[0] / "history.csv").read_bytes() == (outs[1] / "history.csv").read_bytes()
    same_ckpt = (outs[0] / "checkpoint.psc").read_bytes() == (outs[1] / "checkpoint.psc").read_bytes()
    runtime = time.time() - t0
    ok = same_csv and same_ckpt and runtime <= 600
    _report(10, ok, f"repeated cmd_train: history byte-equal {same_csv}, checkpoint "
                    f"byte-equal {same_ckpt}, {runtime:.0f}s")
    assert same_csv and same_ckpt
