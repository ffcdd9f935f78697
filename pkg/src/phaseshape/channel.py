"""AWGN + Wiener phase-noise channel between mapper and carrier recovery.

Noise convention: ``sigma_n**2`` is the TOTAL complex noise variance
(per-quadrature variance sigma_n**2 / 2), so SNR = Es/N0 with N0 = sigma_n**2.
Phase traces are stored unwrapped (cumulative random walk); wrapping is the
receiver's business.

Randomness comes from named substreams derived from one master seed, so the
noise, phase and data draws of an experiment are independently reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ComplexTensor

__all__ = [
    "ChannelParams",
    "PhaseTrace",
    "apply_channel",
    "sigma_n_from_snr",
    "sigma_phi_from_linewidth",
    "substream",
    "wiener_phase_trace",
]

# Fixed substream identifiers; extend only by appending.
_STREAM_IDS = {
    "data_bits": 0,
    "noise": 1,
    "phase": 2,
    "start_phase": 3,
    "channel_params": 4,
    "shuffle": 5,
    "init": 6,
    "validation": 7,
    "evaluation": 8,
}


def substream(master_seed: int, name: str, *context: int) -> np.random.Generator:
    """Named, context-indexed RNG substream of one master seed."""
    return np.random.default_rng([int(master_seed), _STREAM_IDS[name], *map(int, context)])


def sigma_n_from_snr(snr_db: float, es: float = 1.0) -> float:
    """Noise std for a given SNR in dB at mean symbol energy ``es``."""
    if es <= 0:
        raise ValueError("mean symbol energy must be positive")
    return float(np.sqrt(es / 10.0 ** (snr_db / 10.0)))


def sigma_phi_from_linewidth(linewidth_hz: float, symbol_rate: float) -> float:
    """Std of the per-symbol phase increment, sqrt(2*pi*linewidth/rate)."""
    if linewidth_hz < 0:
        raise ValueError("linewidth must be >= 0")
    if symbol_rate <= 0:
        raise ValueError("symbol rate must be positive")
    return float(np.sqrt(2.0 * np.pi * linewidth_hz / symbol_rate))


@dataclass
class ChannelParams:
    snr_db: float
    linewidth_hz: float
    symbol_rate: float
    es: float = 1.0

    @property
    def sigma_n(self) -> float:
        return sigma_n_from_snr(self.snr_db, self.es)

    @property
    def sigma_phi(self) -> float:
        return sigma_phi_from_linewidth(self.linewidth_hz, self.symbol_rate)


@dataclass
class PhaseTrace:
    """Unwrapped Wiener phase random walk; phases[0] == start_phase."""

    phases: np.ndarray
    start_phase: float

    def __len__(self) -> int:
        return len(self.phases)


def wiener_phase_trace(
    K: int,
    sigma_phi: float,
    rng: np.random.Generator,
    random_start: bool = True,
    start_rng: np.random.Generator | None = None,
) -> PhaseTrace:
    """Random walk phi_k = phi_{k-1} + N(0, sigma_phi^2), not wrapped.

    The start phase is uniform on (-pi, pi] when ``random_start`` is set and
    is drawn from ``start_rng`` (default: ``rng``) so it can live on its own
    substream.
    """
    if K < 1:
        raise ValueError("need K >= 1 symbols")
    if random_start:
        r = start_rng if start_rng is not None else rng
        start = float(np.pi - r.uniform(0.0, 2.0 * np.pi))
    else:
        start = 0.0
    steps = np.zeros(K)
    if K > 1:
        steps[1:] = sigma_phi * rng.standard_normal(K - 1)
    steps[0] = start
    return PhaseTrace(np.cumsum(steps), start)


def apply_channel(symbols, sigma_n: float, trace: PhaseTrace, rng: np.random.Generator):
    """z_k = x_k * exp(j*phi_k) + n_k with circular complex Gaussian n_k.

    Differentiable w.r.t. the symbols (phase and noise are constants of the
    realization); returns a ComplexTensor for ComplexTensor input, ndarray
    otherwise.
    """
    tensor_in = isinstance(symbols, ComplexTensor)
    n = symbols.shape[0] if tensor_in else len(symbols)
    if n != len(trace):
        raise ValueError("symbols and phase trace differ in length")
    scale = sigma_n / np.sqrt(2.0)
    noise = scale * rng.standard_normal(n) + 1j * scale * rng.standard_normal(n)
    if tensor_in:
        return symbols.rotate(trace.phases) + noise
    return np.asarray(symbols, dtype=np.complex128) * np.exp(1j * trace.phases) + noise
