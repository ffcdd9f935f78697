"""Constellation construction: trainable mapper, probabilistic shaper,
probability-aware normalization, and batch distribution sampling.

Bit-label convention: the label of point i is the m-bit binary expansion of
i, MSB first.  The s-fold symmetry tiles a 2^(m-s) logits block 2^s times,
which makes the s MOST significant label bits i.i.d. uniform (the hook a
systematic FEC integration would use for parity bits).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ComplexTensor, Tensor, concat, relu, sigmoid, softmax

__all__ = [
    "Constellation",
    "bits_to_index",
    "bits_to_onehot",
    "build_constellation",
    "expand_symmetry",
    "index_to_bits",
    "lambda_from_raw",
    "mb_pmf",
    "normalize",
    "probs_from_logits",
    "quantize_counts",
    "sample_batch",
    "select_symbol",
    "shaper_logits",
    "square_qam",
]


@dataclass
class Constellation:
    """M = 2^m complex points with occurrence probabilities."""

    points: np.ndarray
    probs: np.ndarray
    m: int = field(default=0)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.complex128)
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.m == 0:
            self.m = int(round(np.log2(self.points.size)))
        if self.points.size != 2**self.m or self.probs.size != self.points.size:
            raise ValueError("need 2^m points and one probability per point")
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1.0) > 1e-9:
            raise ValueError("probs must be a probability vector")

    @property
    def size(self) -> int:
        return self.points.size

    def weighted_energy(self) -> float:
        return float(np.sum(self.probs * np.abs(self.points) ** 2))

    def hex_label(self, index: int) -> str:
        width = (self.m + 3) // 4
        return format(index, f"0{width}X")


def build_constellation(W):
    """Points from a real 2 x M weight matrix: c_i = W[0,i] + j W[1,i]."""
    if isinstance(W, Tensor):
        if W.data.ndim != 2 or W.data.shape[0] != 2:
            raise ValueError("mapper weights must be 2 x M")
        return ComplexTensor(W[0], W[1])
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != 2:
        raise ValueError("mapper weights must be 2 x M")
    return W[0] + 1j * W[1]


def normalize(points, probs):
    """Scale points so the probability-weighted mean energy is one."""
    if isinstance(points, ComplexTensor) or isinstance(probs, Tensor):
        if not isinstance(points, ComplexTensor):
            points = ComplexTensor.from_complex(points)
        probs_t = probs if isinstance(probs, Tensor) else Tensor(probs)
        energy = (probs_t * points.abs2()).sum()
        if float(energy.data) <= 0.0:
            raise ValueError("constellation has zero probability-weighted energy")
        return points.scale(energy**-0.5)
    points = np.asarray(points, dtype=np.complex128)
    energy = float(np.sum(np.asarray(probs) * np.abs(points) ** 2))
    if energy <= 0.0:
        raise ValueError("constellation has zero probability-weighted energy")
    return points / np.sqrt(energy)


def bits_to_index(bits) -> np.ndarray:
    """MSB-first binary to integer; works on (..., m) bit arrays."""
    bits = np.asarray(bits, dtype=np.int64)
    m = bits.shape[-1]
    weights = 1 << np.arange(m - 1, -1, -1)
    return bits @ weights


def index_to_bits(index, m: int) -> np.ndarray:
    index = np.asarray(index, dtype=np.int64)
    shifts = np.arange(m - 1, -1, -1)
    return (index[..., None] >> shifts) & 1


def bits_to_onehot(bits) -> np.ndarray:
    """One-hot of length 2^m, hot at the MSB-first integer value."""
    bits = np.asarray(bits, dtype=np.int64)
    m = bits.shape[-1]
    out = np.zeros(bits.shape[:-1] + (2**m,))
    np.put_along_axis(out, bits_to_index(bits)[..., None], 1.0, axis=-1)
    return out


def select_symbol(onehot, points):
    """Dot product of a one-hot row with the point vector."""
    if isinstance(points, ComplexTensor):
        oh = onehot if isinstance(onehot, Tensor) else Tensor(np.asarray(onehot, dtype=np.float64))
        return ComplexTensor((points.re * oh).sum(), (points.im * oh).sum())
    return np.asarray(points, dtype=np.complex128) @ np.asarray(onehot, dtype=np.float64)


def probs_from_logits(logits):
    """Softmax with max-subtraction; shift invariant."""
    if isinstance(logits, Tensor):
        return softmax(logits, axis=-1)
    logits = np.asarray(logits, dtype=np.float64)
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def expand_symmetry(logits_s, s: int):
    """Tile a 2^(m-s) logits block 2^s times to the full 2^m logits vector."""
    if s < 0:
        raise ValueError("symmetry parameter must be >= 0")
    if s == 0:
        return logits_s
    if isinstance(logits_s, Tensor):
        return concat([logits_s] * (2**s), axis=0)
    return np.tile(np.asarray(logits_s, dtype=np.float64), 2**s)


def quantize_counts(probs, S: int) -> np.ndarray:
    """Deterministic largest-remainder quantization of S*probs to integers.

    floor(S*p_i) each, then one extra count per largest fractional part
    (ties to the lowest index); |counts_i - S*p_i| <= 1 for all i.
    """
    if S < 1:
        raise ValueError("batch size must be >= 1")
    probs = np.asarray(probs, dtype=np.float64)
    target = S * probs
    counts = np.floor(target).astype(np.int64)
    shortfall = S - int(counts.sum())
    if shortfall > 0:
        frac = target - counts
        order = np.argsort(-frac, kind="stable")
        counts[order[:shortfall]] += 1
    return counts


def sample_batch(counts, rng: np.random.Generator, m: int | None = None):
    """counts_i copies of each index, uniformly permuted.

    Returns (indices, bits) where bits are the MSB-first labels; the
    histogram of indices equals ``counts`` exactly.
    """
    counts = np.asarray(counts, dtype=np.int64)
    if m is None:
        m = int(round(np.log2(counts.size)))
    if counts.size != 2**m:
        raise ValueError("counts length must be 2^m")
    indices = rng.permutation(np.repeat(np.arange(counts.size), counts))
    return indices, index_to_bits(indices, m)


def mb_pmf(points, lam):
    """Exponential-in-energy pmf p_i proportional to exp(-lam*|c_i|^2)."""
    tape = isinstance(points, (ComplexTensor, Tensor)) or isinstance(lam, Tensor)
    if tape:
        if isinstance(points, ComplexTensor):
            energy = points.abs2()
        elif isinstance(points, Tensor):  # caller may pass |c|^2 directly
            energy = points
        else:
            energy = Tensor(np.abs(np.asarray(points, dtype=np.complex128)) ** 2)
        lam_t = lam if isinstance(lam, Tensor) else Tensor(np.float64(lam))
        return softmax(-(lam_t * energy), axis=-1)
    energy = np.abs(np.asarray(points, dtype=np.complex128)) ** 2
    w = np.exp(-float(lam) * (energy - energy.min()))
    return w / w.sum()


def lambda_from_raw(raw):
    """Logistic squashing of an unbounded parameter into (0, 1)."""
    if isinstance(raw, Tensor):
        return sigmoid(raw)
    return float(1.0 / (1.0 + np.exp(-raw)))


def shaper_logits(weights, sigma_n: float | None = None, sigma_phi: float | None = None,
                  sigma_phi_scale: float = 100.0):
    """Logits of the probabilistic shaper (length 2^(m-s), pre-expansion).

    ``weights`` is either a plain logits Tensor/array (returned as-is) or a
    (w1, b1, w2, b2) tuple of a one-hidden-layer network conditioned on the
    channel parameters.
    """
    if isinstance(weights, (Tensor, np.ndarray)):
        return weights
    w1, b1, w2, b2 = weights
    x = Tensor(np.array([[sigma_n, sigma_phi * sigma_phi_scale]]))
    h = relu(x @ w1 + b1)
    return (h @ w2 + b2).reshape(-1)


def square_qam(m: int) -> np.ndarray:
    """Gray-labeled square QAM, unit energy under uniform probabilities.

    Index i (MSB-first label) splits into two m/2-bit Gray codes selecting
    the I and Q amplitude levels, so axis-adjacent points differ in one bit.
    """
    if m % 2 != 0 or m < 2:
        raise ValueError("square QAM needs an even number of bits per symbol")
    half = m // 2
    n_levels = 2**half
    levels = 2.0 * np.arange(n_levels) - (n_levels - 1)
    gray = np.arange(n_levels) ^ (np.arange(n_levels) >> 1)
    level_of_gray = np.empty(n_levels, dtype=np.int64)
    level_of_gray[gray] = np.arange(n_levels)
    idx = np.arange(4**half)
    i_lvl = level_of_gray[idx >> half]
    q_lvl = level_of_gray[idx & (n_levels - 1)]
    points = levels[i_lvl] + 1j * levels[q_lvl]
    return points / np.sqrt(np.mean(np.abs(points) ** 2))
