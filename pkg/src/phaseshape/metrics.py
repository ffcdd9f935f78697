"""Entropy, bitwise mutual information, training losses, and the
exponential-family fit of a learned symbol distribution.

BMI here is the achievable rate of a bit-metric decoder:

    BMI = H - (1/P) sum_k sum_i log2(1 + exp(-(-1)^{b_{k,i}} L_{k,i}))

with positive LLR meaning bit 0 (see demapper module).  Each summand is
softplus evaluated via logaddexp, so saturated LLRs cost no precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, softplus, xlogx

__all__ = [
    "BmiEstimate",
    "LlrBatch",
    "bmi",
    "entropy_bits",
    "fit_mb_lambda",
    "gcs_loss",
    "geopcs_loss",
    "kl_divergence_bits",
]

LN2 = float(np.log(2.0))

MB_LAMBDA_MAX = 64.0


@dataclass
class LlrBatch:
    """P x m LLRs paired with the transmitted bits."""

    llrs: np.ndarray
    bits: np.ndarray

    def __post_init__(self):
        self.llrs = np.asarray(self.llrs, dtype=np.float64)
        self.bits = np.asarray(self.bits, dtype=np.int64)
        if self.llrs.shape != self.bits.shape or self.llrs.ndim != 2:
            raise ValueError("llrs and bits must both be P x m")
        if not np.all(np.isfinite(self.llrs)):
            raise ValueError("LLRs must be finite")


@dataclass
class BmiEstimate:
    value: float
    entropy: float
    num_symbols: int
    valid_symbols: int


def entropy_bits(probs):
    """-sum p_i log2 p_i with 0*log0 := 0; Tensor in, Tensor out."""
    if isinstance(probs, Tensor):
        return -xlogx(probs).sum() * (1.0 / LN2)
    probs = np.asarray(probs, dtype=np.float64)
    pos = probs > 0
    return float(-np.sum(probs[pos] * np.log2(probs[pos])))


def _bce_bits_per_symbol(llrs, bits):
    """(1/P) sum_k sum_i log2(1 + e^{-(-1)^b L}); differentiable in llrs."""
    bits = np.asarray(bits, dtype=np.float64)
    sign = 2.0 * bits - 1.0  # -(-1)^b
    if isinstance(llrs, Tensor):
        if llrs.data.shape != bits.shape:
            raise ValueError("llrs and bits shape mismatch")
        return softplus(llrs * sign).sum(axis=-1).mean() * (1.0 / LN2)
    llrs = np.asarray(llrs, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, sign * llrs).sum(axis=-1)) / LN2)


def gcs_loss(llrs, bits):
    """Bit-metric cross entropy per symbol (uniform signaling assumed).

    Minimizing it maximizes the uniform-input BMI: loss = m - BMI.
    """
    return _bce_bits_per_symbol(llrs, bits)


def geopcs_loss(llrs, bits, probs):
    """Cross entropy minus source entropy; equals -BMI of the shaped system."""
    return _bce_bits_per_symbol(llrs, bits) - entropy_bits(probs)


def bmi(batch: LlrBatch, entropy_bits_value: float, total_symbols: int | None = None) -> BmiEstimate:
    """Monte-Carlo BMI of a (fringe-masked) LLR batch."""
    P = batch.llrs.shape[0]
    if P == 0:
        raise ValueError("BMI of an empty batch is undefined")
    value = entropy_bits_value - _bce_bits_per_symbol(batch.llrs, batch.bits)
    return BmiEstimate(
        value=float(value),
        entropy=float(entropy_bits_value),
        num_symbols=int(total_symbols if total_symbols is not None else P),
        valid_symbols=P,
    )


def kl_divergence_bits(p, q) -> float:
    """sum p_i log2(p_i/q_i); requires q > 0 on the support of p."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("distributions differ in shape")
    support = p > 0
    if np.any(q[support] <= 0):
        raise ValueError("q vanishes on the support of p")
    return float(np.sum(p[support] * np.log2(p[support] / q[support])))


def fit_mb_lambda(points, p, tol: float = 1e-10) -> tuple[float, float]:
    """Best exponential-in-energy fit to a pmf over the given geometry.

    Minimizes KL(p || pmf(lambda)) over lambda >= 0.  The objective is convex
    in lambda (log-partition convexity), so a doubling bracket followed by
    golden-section search suffices; the bracket is capped at lambda = 64
    even though learned shapers stay well below 1.
    """
    p = np.asarray(p, dtype=np.float64)
    energy = np.abs(np.asarray(points, dtype=np.complex128)) ** 2

    def kl_at(lam: float) -> float:
        return kl_divergence_bits(p, mb_pmf_from_energy(energy, lam))

    lo, hi = 0.0, 1.0
    k_hi = kl_at(hi)
    while hi < MB_LAMBDA_MAX:
        k_next = kl_at(min(2.0 * hi, MB_LAMBDA_MAX))
        if k_next >= k_hi:
            break
        hi = min(2.0 * hi, MB_LAMBDA_MAX)
        k_hi = k_next
    hi = min(2.0 * hi, MB_LAMBDA_MAX)

    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    f_c, f_d = kl_at(c), kl_at(d)
    while b - a > tol:
        if f_c < f_d:
            b, d, f_d = d, c, f_c
            c = b - invphi * (b - a)
            f_c = kl_at(c)
        else:
            a, c, f_c = c, d, f_d
            d = a + invphi * (b - a)
            f_d = kl_at(d)
    lam = 0.5 * (a + b)
    return float(lam), kl_at(lam)


def mb_pmf_from_energy(energy: np.ndarray, lam: float) -> np.ndarray:
    """Numpy-path pmf proportional to exp(-lam*E_i) given point energies."""
    w = np.exp(-lam * (energy - energy.min()))
    return w / w.sum()
