"""Blind phase search carrier recovery, in regular and differentiable form.

The pipeline per received block: squared distances to the nearest
constellation point under each test rotation, a sliding-window sum over
symbols, phase pick (hard argmin, or temperature-weighted softmin for the
differentiable variant), unwrapping, and rotation back.

The inner distance min is a hard min: its gradient flows through the single
nearest constellation point (lowest index on exact ties).  Window edges are
truncated sums; the returned valid range marks the fringe-free region that
losses and metrics must restrict themselves to.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .autodiff import ComplexTensor, Tensor, as_tensor, softmax, windowed_sum

__all__ = [
    "BpsConfig",
    "BpsResult",
    "DistanceMatrix",
    "bps",
    "correct",
    "estimate_phase_regular",
    "estimate_phase_soft",
    "per_symbol_distances",
    "softmin_t",
    "temperature_from_raw",
    "test_phases",
    "unwrap",
]

PHASE_SPANS = {"full_2pi": 2.0 * np.pi, "quadrant": np.pi / 2.0}

_ARGMIN_CHUNK = 4096


@dataclass
class BpsConfig:
    num_test_phases: int = 60
    half_window: int = 128
    mode: str = "regular"  # regular | differentiable
    temperature: float | Tensor = 0.001
    phase_span: str = "full_2pi"

    def __post_init__(self):
        if self.num_test_phases < 2:
            raise ValueError("need at least 2 test phases")
        if self.half_window < 0:
            raise ValueError("half_window must be >= 0")
        if self.mode not in ("regular", "differentiable"):
            raise ValueError(f"unknown BPS mode '{self.mode}'")
        if self.phase_span not in PHASE_SPANS:
            raise ValueError(f"unknown phase span '{self.phase_span}'")
        t = float(self.temperature.data) if isinstance(self.temperature, Tensor) else self.temperature
        if not 0.0 < t <= 1.0:
            raise ValueError("temperature must lie in (0, 1]")


@dataclass
class DistanceMatrix:
    """Windowed distance sums (K x L) plus the fringe-free index range."""

    values: Tensor
    valid_lo: int
    valid_hi: int  # inclusive; valid_hi < valid_lo means no full-window symbol

    @property
    def valid_slice(self) -> slice:
        return slice(self.valid_lo, self.valid_hi + 1)

    @property
    def valid_empty(self) -> bool:
        return self.valid_hi < self.valid_lo


@dataclass
class BpsResult:
    corrected: ComplexTensor
    phase: Tensor
    valid_lo: int
    valid_hi: int

    @property
    def valid_slice(self) -> slice:
        return slice(self.valid_lo, self.valid_hi + 1)


def test_phases(L: int, phase_span: str = "full_2pi") -> np.ndarray:
    """L equispaced candidate rotations covering the configured span."""
    if L < 2:
        raise ValueError("need at least 2 test phases")
    return np.arange(L) / L * PHASE_SPANS[phase_span]


def _nearest_indices(z: np.ndarray, p_re: np.ndarray, p_im: np.ndarray, cos_p, sin_p) -> np.ndarray:
    """argmin_i |c_i - z_k e^{-j phi_l}|^2 for every symbol and test phase."""
    K, L = z.shape[0], cos_p.shape[0]
    energy = p_re**2 + p_im**2
    basis = np.stack([p_re, p_im])  # (2, M)
    idx = np.empty((K, L), dtype=np.intp)
    for s in range(0, K, _ARGMIN_CHUNK):
        e = min(s + _ARGMIN_CHUNK, K)
        zr = z.real[s:e, None] * cos_p + z.imag[s:e, None] * sin_p
        zi = z.imag[s:e, None] * cos_p - z.real[s:e, None] * sin_p
        cross = np.stack([zr.ravel(), zi.ravel()], axis=1) @ basis  # (k*L, M)
        # |c|^2 - 2 Re(c conj(w)); the |w|^2 term is constant over i
        score = energy[None, :] - 2.0 * cross
        idx[s:e] = np.argmin(score, axis=1).reshape(e - s, L)
    return idx


def per_symbol_distances(z, constellation, phases: np.ndarray):
    """Min squared distance to the constellation after each test rotation.

    ``z`` may be a scalar, a length-K array, or a ComplexTensor; returns a
    Tensor of shape (L,) or (K, L).  Differentiable w.r.t. the constellation
    (through the selected point) and the received symbols.
    """
    scalar_in = np.isscalar(z) or (not isinstance(z, ComplexTensor) and np.ndim(z) == 0)
    if not isinstance(z, ComplexTensor):
        z = ComplexTensor.from_complex(np.atleast_1d(np.asarray(z, dtype=np.complex128)))
    if not isinstance(constellation, ComplexTensor):
        constellation = ComplexTensor.from_complex(constellation)
    if constellation.shape[0] == 0:
        raise ValueError("constellation must be nonempty")
    phases = np.asarray(phases, dtype=np.float64)
    cos_p, sin_p = np.cos(phases), np.sin(phases)

    idx = _nearest_indices(z.data, constellation.re.data, constellation.im.data, cos_p, sin_p)

    zr = z.re.reshape(-1, 1) * cos_p + z.im.reshape(-1, 1) * sin_p
    zi = z.im.reshape(-1, 1) * cos_p - z.re.reshape(-1, 1) * sin_p
    sel = constellation.take(idx)
    dr = sel.re - zr
    di = sel.im - zi
    d = dr * dr + di * di
    return d.reshape(phases.size) if scalar_in else d


def sliding_window_sum(d, N: int) -> DistanceMatrix:
    """Sum distances over [k-N, k+N] per test phase; edges are truncated.

    The full-window region [N, K-N-1] is reported as the valid range; edge
    symbols still get (biased) truncated sums.
    """
    d = as_tensor(d) if not isinstance(d, Tensor) else d
    K = d.shape[0]
    return DistanceMatrix(values=windowed_sum(d, N), valid_lo=min(N, K), valid_hi=K - N - 1)


def softmin_t(x, t) -> Tensor:
    """Softmin with temperature: softmax(-x/t) along the last axis.

    Computed with max-subtraction so temperatures as small as 1e-3 stay
    overflow-free; differentiable w.r.t. both x and t.
    """
    t_val = float(t.data) if isinstance(t, Tensor) else float(t)
    if t_val <= 0.0:
        raise ValueError("temperature must be positive")
    x = as_tensor(x) if not isinstance(x, Tensor) else x
    if not isinstance(t, Tensor):
        t = Tensor(np.float64(t))
    return softmax(-(x / t), axis=-1)


def estimate_phase_regular(D, phases: np.ndarray) -> np.ndarray:
    """Test phase minimizing the windowed sum; ties go to the lowest index."""
    values = D.data if isinstance(D, Tensor) else np.asarray(D, dtype=np.float64)
    phases = np.asarray(phases, dtype=np.float64)
    if values.shape[-1] != phases.size:
        raise ValueError("distance row and phase vector lengths differ")
    return phases[np.argmin(values, axis=-1)]


def estimate_phase_soft(D, phases: np.ndarray, t) -> Tensor:
    """Softmin-weighted mean of the test phases; differentiable in D and t."""
    w = softmin_t(D, t)
    return (w * np.asarray(phases, dtype=np.float64)).sum(axis=-1)


def unwrap(phi, period: float = 2.0 * np.pi):
    """Add integer multiples of ``period`` so consecutive differences lie in
    (-period/2, period/2]; the first sample is unchanged.

    The offsets are piecewise constant in the input, so in differentiable
    mode they are treated as constants and the gradient passes straight
    through.
    """
    values = phi.data if isinstance(phi, Tensor) else np.asarray(phi, dtype=np.float64)
    if values.size == 0:
        raise ValueError("cannot unwrap an empty sequence")
    wraps = np.ceil(np.diff(values) / period - 0.5)
    offsets = np.concatenate([[0.0], -period * np.cumsum(wraps)])
    if isinstance(phi, Tensor):
        return phi + offsets
    return values + offsets


def correct(z, phi):
    """Rotate the received symbols back: x_hat_k = z_k e^{-j phi_k}."""
    z_len = z.shape[0] if isinstance(z, ComplexTensor) else len(np.atleast_1d(z))
    p_len = phi.data.size if isinstance(phi, Tensor) else np.asarray(phi).size
    if z_len != p_len:
        raise ValueError("symbols and phase estimates differ in length")
    if isinstance(z, ComplexTensor):
        return z.rotate(-phi if isinstance(phi, Tensor) else -np.asarray(phi))
    if isinstance(phi, Tensor):
        return ComplexTensor.from_complex(np.asarray(z, dtype=np.complex128)).rotate(-phi)
    return np.asarray(z, dtype=np.complex128) * np.exp(-1j * np.asarray(phi))


def temperature_from_raw(t_star):
    """Map an unbounded parameter into (0, 1) via the logistic function."""
    if isinstance(t_star, Tensor):
        from .autodiff import sigmoid

        return sigmoid(t_star)
    return float(expit(t_star))


def bps(z, constellation, config: BpsConfig) -> BpsResult:
    """Full carrier recovery per ``config``; see the module docstring.

    Returns corrected symbols, unwrapped phase estimates and the fringe-free
    valid range.  Differentiable in ``differentiable`` mode when the inputs
    carry gradients.

    After unwrapping, the track is re-referenced by a whole number of span
    periods so its first sample lies in (-period/2, period/2].  Over the full
    2pi span that is an inert rotation; over the quadrant span it pins the
    pi/2 ambiguity branch to the known zero start phase, without which a
    start phase on the span wrap would flip the branch (and hence the bit
    labeling of a square QAM) from block to block.
    """
    if not isinstance(z, ComplexTensor):
        z = ComplexTensor.from_complex(np.atleast_1d(np.asarray(z, dtype=np.complex128)))
    phases = test_phases(config.num_test_phases, config.phase_span)
    d = per_symbol_distances(z, constellation, phases)
    D = sliding_window_sum(d, config.half_window)
    if config.mode == "differentiable":
        phi_hat = estimate_phase_soft(D.values, phases, config.temperature)
    else:
        phi_hat = Tensor(estimate_phase_regular(D.values, phases))
    period = PHASE_SPANS[config.phase_span]
    phi_tilde = unwrap(phi_hat, period=period)
    branch = period * np.ceil(float(phi_tilde.data[0]) / period - 0.5)
    if branch != 0.0:
        phi_tilde = phi_tilde - branch
    corrected = z.rotate(-phi_tilde)
    return BpsResult(corrected=corrected, phase=phi_tilde, valid_lo=D.valid_lo, valid_hi=D.valid_hi)
