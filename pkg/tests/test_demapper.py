"""Demapper tests: Glorot init, reference-demapper closed forms, grids, and
a trained-QPSK sign agreement against the Gaussian oracle."""

import numpy as np
import pytest

from phaseshape.autodiff import Tensor
from phaseshape.channel import sigma_n_from_snr, substream, wiener_phase_trace, apply_channel
from phaseshape.demapper import (
    DemapperNet,
    decision_region_grid,
    demap,
    gaussian_reference_demap,
    init_glorot,
)
from phaseshape.metrics import LlrBatch, bmi
from phaseshape.optim import ParamVector, finite_difference_check
from phaseshape.shaping import Constellation, index_to_bits, square_qam
from phaseshape.trainer import TrainConfig, train
from phaseshape.models import model_demapper


def test_init_glorot_bounds_and_variance():
    rng = substream(0, "init")
    w = init_glorot((2, 2), rng)
    assert np.all(np.abs(w) <= np.sqrt(6.0 / 4.0))
    big = init_glorot((4, 6), np.random.default_rng(0))
    draws = np.concatenate([init_glorot((4, 6), np.random.default_rng(i)).ravel() for i in range(4200)])
    target = 2.0 / (4 + 6)
    assert abs(np.var(draws) / target - 1.0) < 0.05
    a = init_glorot((3, 3), np.random.default_rng(1))
    b = init_glorot((3, 3), np.random.default_rng(2))
    assert not np.allclose(a, b)
    assert big.shape == (4, 6)
    with pytest.raises(ValueError):
        init_glorot((0, 3), rng)


def _zero_net(m=2, hidden=(8,), parameterized=False):
    widths = ((4 if parameterized else 2), *hidden, m)
    layers = [(np.zeros((widths[i], widths[i + 1])), np.zeros(widths[i + 1]))
              for i in range(len(widths) - 1)]
    return DemapperNet(layers, parameterized)


def test_zero_weight_net_gives_zero_llrs_and_is_deterministic():
    net = _zero_net()
    x = np.array([0.3 + 0.2j, -1.0 + 0.5j])
    out = demap(x, net)
    assert np.array_equal(out.data, np.zeros((2, 2)))
    rng = np.random.default_rng(3)
    net2 = DemapperNet(
        [(init_glorot((2, 8), rng), np.zeros(8)), (init_glorot((8, 2), rng), np.zeros(2))],
        parameterized=False,
    )
    a = demap(x, net2).data
    b = demap(x, net2).data
    assert np.array_equal(a, b)


def test_parameterized_net_needs_sigmas():
    net = _zero_net(parameterized=True)
    with pytest.raises(ValueError):
        demap(np.array([1 + 1j]), net)
    out = demap(np.array([1 + 1j]), net, sigma_n=0.1, sigma_phi=0.004)
    assert out.data.shape == (1, 2)


def test_demap_gradient_wrt_weights():
    rng = np.random.default_rng(4)
    for _ in range(10):
        x = rng.normal(size=5) + 1j * rng.normal(size=5)
        coeff = rng.normal(size=(5, 2))
        w0 = init_glorot((2, 6), rng)
        w1 = init_glorot((6, 2), rng)

        def loss(lv):
            net = DemapperNet([(lv["w0"], lv["b0"]), (lv["w1"], lv["b1"])], parameterized=False)
            return (demap(x, net) * coeff).sum()

        blocks = {"w0": w0, "b0": rng.normal(scale=0.1, size=6), "w1": w1, "b1": np.zeros(2)}
        report = finite_difference_check(loss, ParamVector(blocks), tol=1e-5)
        assert report.ok, report.summary()


def test_reference_demapper_bpsk_closed_form():
    const = Constellation(np.array([1.0 + 0j, -1.0 + 0j]), np.array([0.5, 0.5]), m=1)
    assert abs(gaussian_reference_demap(0.0 + 0j, const, 1.0)[0]) < 1e-15
    # sigma_n^2 = 1, x = 0.5: L = 4*Re(x)/N0 = 2; also check the direct sums
    llr = gaussian_reference_demap(0.5 + 0j, const, 1.0)[0]
    assert abs(llr - 2.0) < 1e-12
    direct = np.log(np.exp(-abs(0.5 - 1) ** 2)) - np.log(np.exp(-abs(0.5 + 1) ** 2))
    assert abs(llr - direct) < 1e-12


def test_reference_demapper_high_snr_matches_nearest_neighbor():
    qam = square_qam(4)
    const = Constellation(qam, np.full(16, 1 / 16), m=4)
    rng = np.random.default_rng(5)
    idx = rng.integers(0, 16, 500)
    x = qam[idx] + 0.01 * (rng.normal(size=500) + 1j * rng.normal(size=500))
    llrs = gaussian_reference_demap(x, const, sigma_n=0.05)
    hard_bits = (llrs < 0).astype(int)
    nn = np.argmin(np.abs(x[:, None] - qam[None, :]) ** 2, axis=1)
    assert np.array_equal(hard_bits, index_to_bits(nn, 4))


def test_reference_demapper_antisymmetric_under_label_swap():
    qam = square_qam(4)
    const = Constellation(qam, np.full(16, 1 / 16), m=4)
    rng = np.random.default_rng(6)
    x = rng.normal(size=40) + 1j * rng.normal(size=40)
    llrs = gaussian_reference_demap(x, const, sigma_n=0.3)
    for bit in range(4):
        flip = np.arange(16) ^ (1 << (4 - 1 - bit))
        const_flipped = Constellation(qam[flip], np.full(16, 1 / 16), m=4)
        flipped = gaussian_reference_demap(x, const_flipped, sigma_n=0.3)
        assert np.allclose(flipped[:, bit], -llrs[:, bit], atol=1e-10)


def test_reference_demapper_respects_priors():
    const = Constellation(np.array([1.0 + 0j, -1.0 + 0j]), np.array([0.9, 0.1]), m=1)
    llr = gaussian_reference_demap(0.0 + 0j, const, 1.0)[0]
    assert abs(llr - np.log(0.9 / 0.1)) < 1e-12


def test_decision_region_grid():
    net = _zero_net()
    grid = decision_region_grid(net, 0, (-1, 1, -1, 1), 2)
    assert grid.shape == (2, 2) and np.array_equal(grid, np.zeros((2, 2)))
    rng = np.random.default_rng(7)
    net2 = DemapperNet(
        [(40 * init_glorot((2, 8), rng), np.zeros(8)), (40 * init_glorot((8, 2), rng), np.zeros(2))],
        parameterized=False,
    )
    grid2 = decision_region_grid(net2, 1, (-1.5, 1.5, -1.5, 1.5), 17)
    assert np.all(grid2 <= 5.0) and np.all(grid2 >= -5.0)
    assert np.any(np.abs(grid2) == 5.0)  # clipping engaged for this loud net
    with pytest.raises(ValueError):
        decision_region_grid(net, 0, (-1, 1, -1, 1), 1)
    with pytest.raises(ValueError):
        decision_region_grid(net, 5, (-1, 1, -1, 1), 4)


def test_trained_qpsk_demapper_matches_reference_signs():
    # QPSK at 10 dB: train the demapper on fixed uniform QAM (lambda frozen
    # to 0), then compare hard decisions against the Gaussian oracle.
    cfg = TrainConfig(
        mode="qam_pcs", m=2, parameterized=False, epochs=25, batches_per_epoch=5,
        batch_size=600, num_test_phases=16, half_window=16, phase_span="quadrant",
        snr_db_range=(10.0, 10.0), linewidth_hz_range=(0.0, 0.0),
        random_start_phase=False, fixed_lambda=0.0, demapper_hidden=(32, 32),
        seed=11, validation_every=100,
    )
    ckpt = train(cfg)
    assert not ckpt.diverged
    qam = square_qam(2)
    const = Constellation(qam, np.full(4, 0.25), m=2)
    sigma_n = sigma_n_from_snr(10.0)
    rng = np.random.default_rng(12)
    idx = rng.integers(0, 4, 10_000)
    trace = wiener_phase_trace(10_000, 0.0, substream(12, "phase", 0), random_start=False)
    z = apply_channel(qam[idx], sigma_n, trace, substream(12, "noise", 0))
    net = model_demapper(ckpt.spec, ckpt.params.leaves(requires_grad=False))
    llrs_net = demap(z, net).data
    llrs_ref = gaussian_reference_demap(z, const, sigma_n)
    agreement = np.mean(np.sign(llrs_net) == np.sign(llrs_ref))
    assert agreement >= 0.99, f"sign agreement {agreement:.4f}"


def test_reference_demapper_bmi_matches_fine_grid_integration_qpsk():
    # Monte-Carlo BMI from oracle LLRs vs direct 2-D numerical integration
    qam = square_qam(2)
    const = Constellation(qam, np.full(4, 0.25), m=2)
    sigma_n = sigma_n_from_snr(7.0)
    rng = np.random.default_rng(13)
    n = 200_000
    idx = rng.integers(0, 4, n)
    z = qam[idx] + sigma_n / np.sqrt(2) * (rng.normal(size=n) + 1j * rng.normal(size=n))
    llrs = gaussian_reference_demap(z, const, sigma_n)
    est = bmi(LlrBatch(llrs, index_to_bits(idx, 2)), 2.0)
    truth = _bmi_by_integration(qam, np.full(4, 0.25), 2, sigma_n)
    assert abs(est.value - truth) < 0.02


def _bmi_by_integration(points, probs, m, sigma_n, half_width_sigmas=6.0, step_frac=0.125):
    """Brute-force fine-grid quadrature of the bit-metric rate."""
    sig = sigma_n / np.sqrt(2.0)  # per-quadrature std
    lim = np.max(np.abs(points)) + half_width_sigmas * sig
    h = step_frac * sig
    axis = np.arange(-lim, lim + h, h)
    yre, yim = np.meshgrid(axis, axis)
    y = (yre + 1j * yim).ravel()
    dens = np.zeros((y.size, len(points)))
    for j, c in enumerate(points):
        dens[:, j] = probs[j] / (np.pi * sigma_n**2) * np.exp(-np.abs(y - c) ** 2 / sigma_n**2)
    py = dens.sum(axis=1)
    labels = np.arange(len(points))
    total = 0.0
    for i in range(m):
        ones = ((labels >> (m - 1 - i)) & 1).astype(bool)
        p1 = probs[ones].sum()
        h_prior = 0.0
        for q in (p1, 1 - p1):
            if q > 0:
                h_prior -= q * np.log2(q)
        p1_given_y = dens[:, ones].sum(axis=1) / py
        eps = 1e-300
        h_cond = -(
            p1_given_y * np.log2(np.maximum(p1_given_y, eps))
            + (1 - p1_given_y) * np.log2(np.maximum(1 - p1_given_y, eps))
        )
        total += h_prior - h**2 * np.sum(py * h_cond)
    return total
