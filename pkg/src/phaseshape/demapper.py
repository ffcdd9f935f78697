"""Neural demapper plus a closed-form Gaussian reference demapper.

LLR sign convention throughout: positive means bit 0 is the more likely
value, so a correct confident decision drives its cross-entropy summand
log2(1 + exp(-(-1)^b * L)) to zero.

The neural net takes (Re, Im) of a phase-corrected symbol, optionally
extended by the channel parameters; sigma_phi enters scaled by 100 so both
conditioning inputs are O(0.1-1).  The scale is part of the checkpoint.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .autodiff import ComplexTensor, Tensor, concat, relu
from .shaping import Constellation

__all__ = [
    "DemapperNet",
    "SIGMA_N_INPUT_SCALE",
    "SIGMA_PHI_INPUT_SCALE",
    "decision_region_grid",
    "demap",
    "gaussian_reference_demap",
    "init_glorot",
]

SIGMA_N_INPUT_SCALE = 1.0
SIGMA_PHI_INPUT_SCALE = 100.0

_REF_CHUNK = 65536


def init_glorot(shape, rng: np.random.Generator) -> np.ndarray:
    """Uniform on +-sqrt(6/(fan_in+fan_out)) for a (fan_in, fan_out) matrix."""
    fan_in, fan_out = shape
    if fan_in < 1 or fan_out < 1:
        raise ValueError("fan-in and fan-out must be >= 1")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class DemapperNet:
    """Rectifier MLP: (Re, Im[, sigma_n, sigma_phi*scale]) -> m LLRs."""

    def __init__(self, layers, parameterized: bool):
        # layers: list of (W, b) Tensors; hidden activations are ReLU,
        # the output layer is linear.
        self.layers = [(w if isinstance(w, Tensor) else Tensor(w),
                        b if isinstance(b, Tensor) else Tensor(b)) for w, b in layers]
        self.parameterized = parameterized

    @property
    def m(self) -> int:
        return self.layers[-1][0].data.shape[1]

    def __call__(self, x: Tensor) -> Tensor:
        h = x
        for w, b in self.layers[:-1]:
            h = relu(h @ w + b)
        w, b = self.layers[-1]
        return h @ w + b


def _features(x, sigma_n, sigma_phi, parameterized: bool) -> Tensor:
    if not isinstance(x, ComplexTensor):
        x = ComplexTensor.from_complex(np.atleast_1d(np.asarray(x, dtype=np.complex128)))
    n = x.shape[0]
    cols = [x.re.reshape(n, 1), x.im.reshape(n, 1)]
    if parameterized:
        if sigma_n is None or sigma_phi is None:
            raise ValueError("parameterized demapper needs sigma_n and sigma_phi")
        cols.append(Tensor(np.full((n, 1), sigma_n * SIGMA_N_INPUT_SCALE)))
        cols.append(Tensor(np.full((n, 1), sigma_phi * SIGMA_PHI_INPUT_SCALE)))
    return concat(cols, axis=1)


def demap(x, net: DemapperNet, sigma_n: float | None = None, sigma_phi: float | None = None) -> Tensor:
    """Forward pass of the neural demapper: one LLR row per symbol."""
    return net(_features(x, sigma_n, sigma_phi, net.parameterized))


def gaussian_reference_demap(x, constellation: Constellation, sigma_n: float) -> np.ndarray:
    """Exact bitwise LLRs for the memoryless Gaussian channel.

    L_i = ln sum_{c: b_i=0} p(c) exp(-|x-c|^2/sigma_n^2)
        - ln sum_{c: b_i=1} p(c) exp(-|x-c|^2/sigma_n^2)

    with sigma_n^2 the total complex noise variance; log-sum-exp stabilized.
    Used as the independent oracle against trained demappers.
    """
    if sigma_n <= 0:
        raise ValueError("sigma_n must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=np.complex128))
    m = constellation.m
    with np.errstate(divide="ignore"):
        log_prior = np.log(constellation.probs)
    labels = np.arange(constellation.size)
    bit_is_one = ((labels[None, :] >> (m - 1 - np.arange(m)[:, None])) & 1).astype(bool)
    out = np.empty((x.size, m))
    for s in range(0, x.size, _REF_CHUNK):
        e = min(s + _REF_CHUNK, x.size)
        metric = log_prior[None, :] - (
            np.abs(x[s:e, None] - constellation.points[None, :]) ** 2 / sigma_n**2
        )
        for i in range(m):
            out[s:e, i] = logsumexp(metric[:, ~bit_is_one[i]], axis=1) - logsumexp(
                metric[:, bit_is_one[i]], axis=1
            )
    return out if out.shape[0] > 1 else out[0]


def decision_region_grid(
    net: DemapperNet,
    bit_index: int,
    grid_bounds,
    resolution: int,
    sigma_n: float | None = None,
    sigma_phi: float | None = None,
    clip: float = 5.0,
) -> np.ndarray:
    """LLRs of one bit on a regular complex grid, clipped for export.

    ``grid_bounds`` is (re_min, re_max, im_min, im_max); row r / column c of
    the result corresponds to im[r] + j-free re[c] ordering, i.e. the point
    re_axis[c] + 1j * im_axis[r].  Clipping applies only here, never in a loss.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if not 0 <= bit_index < net.m:
        raise ValueError("bit index out of range")
    re_min, re_max, im_min, im_max = grid_bounds
    re_axis = np.linspace(re_min, re_max, resolution)
    im_axis = np.linspace(im_min, im_max, resolution)
    pts = (re_axis[None, :] + 1j * im_axis[:, None]).ravel()
    llrs = demap(pts, net, sigma_n, sigma_phi).data[:, bit_index]
    return np.clip(llrs.reshape(resolution, resolution), -clip, clip)
