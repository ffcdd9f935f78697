"""Model architectures: which parameter blocks exist per shaping mode and
how they turn into a constellation, a symbol distribution, a temperature
and a demapper.

Three modes:
  gcs      - trainable point positions, uniform symbol probabilities
  geopcs   - trainable positions plus trainable occurrence probabilities
  qam_pcs  - fixed Gray square QAM, trainable exponential shaping parameter

In parameterized form the mapper / shaper / demapper additionally condition
on (sigma_n, sigma_phi), otherwise they collapse to plain weight blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ComplexTensor, Tensor, relu
from .bps import temperature_from_raw
from .demapper import SIGMA_PHI_INPUT_SCALE, DemapperNet, init_glorot
from .optim import ParamVector
from .shaping import (
    build_constellation,
    expand_symmetry,
    lambda_from_raw,
    mb_pmf,
    normalize,
    probs_from_logits,
    shaper_logits,
    square_qam,
)

__all__ = ["ModelSpec", "init_params", "model_constellation", "model_demapper", "model_temperature"]

MODES = ("gcs", "geopcs", "qam_pcs")

QAM_SCALE_TOL = 1e-12
QAM_SCALE_MAX_ITER = 50


@dataclass
class ModelSpec:
    mode: str
    m: int
    parameterized: bool = False
    demapper_hidden: tuple = (128, 128)
    symmetry: int = 0
    trainable_temperature: bool = False
    fixed_lambda: float | None = None  # qam_pcs only; 0 freezes to uniform QAM
    txnn_hidden: int = 32
    pnn_hidden: int = 32

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode '{self.mode}'")
        if self.m < 1:
            raise ValueError("need at least 1 bit per symbol")
        if not 0 <= self.symmetry <= self.m - 1:
            raise ValueError("symmetry must lie in [0, m-1]")
        if self.mode == "qam_pcs" and self.m % 2 != 0:
            raise ValueError("qam_pcs needs square QAM, i.e. even m")
        self.demapper_hidden = tuple(int(h) for h in self.demapper_hidden)

    @property
    def M(self) -> int:
        return 2**self.m

    @property
    def num_logits(self) -> int:
        return 2 ** (self.m - self.symmetry)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "m": self.m,
            "parameterized": self.parameterized,
            "demapper_hidden": list(self.demapper_hidden),
            "symmetry": self.symmetry,
            "trainable_temperature": self.trainable_temperature,
            "fixed_lambda": self.fixed_lambda,
            "txnn_hidden": self.txnn_hidden,
            "pnn_hidden": self.pnn_hidden,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        d["demapper_hidden"] = tuple(d["demapper_hidden"])
        return cls(**d)


def init_params(spec: ModelSpec, rng: np.random.Generator) -> ParamVector:
    """Glorot weights, zero biases; plain logits vectors start uniform."""
    blocks: dict[str, np.ndarray] = {}
    if spec.mode in ("gcs", "geopcs"):
        if spec.parameterized:
            blocks["txnn_w1"] = init_glorot((2, spec.txnn_hidden), rng)
            blocks["txnn_b1"] = np.zeros(spec.txnn_hidden)
            blocks["txnn_w2"] = init_glorot((spec.txnn_hidden, 2 * spec.M), rng)
            blocks["txnn_b2"] = np.zeros(2 * spec.M)
        else:
            blocks["mapper_w"] = init_glorot((2, spec.M), rng)
    if spec.mode == "geopcs":
        if spec.parameterized:
            blocks["pnn_w1"] = init_glorot((2, spec.pnn_hidden), rng)
            blocks["pnn_b1"] = np.zeros(spec.pnn_hidden)
            blocks["pnn_w2"] = init_glorot((spec.pnn_hidden, spec.num_logits), rng)
            blocks["pnn_b2"] = np.zeros(spec.num_logits)
        else:
            blocks["shaper_logits"] = np.zeros(spec.num_logits)
    if spec.mode == "qam_pcs" and spec.fixed_lambda is None:
        if spec.parameterized:
            blocks["lnn_w1"] = init_glorot((2, spec.pnn_hidden), rng)
            blocks["lnn_b1"] = np.zeros(spec.pnn_hidden)
            blocks["lnn_w2"] = init_glorot((spec.pnn_hidden, 1), rng)
            blocks["lnn_b2"] = np.zeros(1)
        else:
            blocks["lambda_raw"] = np.zeros(1)
    d_in = 4 if spec.parameterized else 2
    widths = (d_in, *spec.demapper_hidden, spec.m)
    for i in range(len(widths) - 1):
        blocks[f"demap_w{i}"] = init_glorot((widths[i], widths[i + 1]), rng)
        blocks[f"demap_b{i}"] = np.zeros(widths[i + 1])
    if spec.trainable_temperature:
        blocks["t_raw"] = np.zeros(1)
    return ParamVector(blocks)


def _conditioning(sigma_n: float, sigma_phi: float) -> Tensor:
    return Tensor(np.array([[sigma_n, sigma_phi * SIGMA_PHI_INPUT_SCALE]]))


def _mapper_weights(spec: ModelSpec, leaves, sigma_n, sigma_phi) -> Tensor:
    if not spec.parameterized:
        return leaves["mapper_w"]
    h = relu(_conditioning(sigma_n, sigma_phi) @ leaves["txnn_w1"] + leaves["txnn_b1"])
    flat = h @ leaves["txnn_w2"] + leaves["txnn_b2"]
    return flat.reshape(2, spec.M)


def _qam_scaled(spec: ModelSpec, lam) -> tuple[ComplexTensor, Tensor]:
    """Self-consistent (points, probs): probs follow the exponential pmf of
    the *normalized* geometry while the normalization weights by probs.

    The fixed point is found by iterating the scale; each iteration stays on
    the tape so gradients w.r.t. lambda include the loop."""
    base = square_qam(spec.m)
    energy = np.abs(base) ** 2
    scale2 = Tensor(np.float64(1.0))
    for _ in range(QAM_SCALE_MAX_ITER):
        probs = mb_pmf(Tensor(energy) / scale2, lam)  # energies of the current geometry
        new_scale2 = (probs * energy).sum()
        done = abs(float(new_scale2.data) - float(scale2.data)) <= QAM_SCALE_TOL
        scale2 = new_scale2
        if done:
            break
    points = ComplexTensor.from_complex(base).scale(scale2**-0.5)
    return points, probs


def model_constellation(spec: ModelSpec, leaves, sigma_n: float, sigma_phi: float):
    """Normalized constellation and symbol probabilities for one channel point.

    Returns (points: ComplexTensor, probs: Tensor, extras: dict); the probs
    of a gcs model are the constant uniform vector.
    """
    extras: dict = {}
    if spec.mode in ("gcs", "geopcs"):
        points = build_constellation(_mapper_weights(spec, leaves, sigma_n, sigma_phi))
        if spec.mode == "gcs":
            probs = Tensor(np.full(spec.M, 1.0 / spec.M))
        else:
            if spec.parameterized:
                weights = (leaves["pnn_w1"], leaves["pnn_b1"], leaves["pnn_w2"], leaves["pnn_b2"])
            else:
                weights = leaves["shaper_logits"]
            logits = shaper_logits(weights, sigma_n, sigma_phi)
            probs = probs_from_logits(expand_symmetry(logits, spec.symmetry))
        return normalize(points, probs), probs, extras

    # qam_pcs: geometry fixed, lambda trainable (or frozen)
    if spec.fixed_lambda is not None:
        lam = Tensor(np.float64(spec.fixed_lambda))
    elif spec.parameterized:
        h = relu(_conditioning(sigma_n, sigma_phi) @ leaves["lnn_w1"] + leaves["lnn_b1"])
        raw = (h @ leaves["lnn_w2"] + leaves["lnn_b2"]).reshape(())
        lam = lambda_from_raw(raw)
    else:
        lam = lambda_from_raw(leaves["lambda_raw"].reshape(()))
    points, probs = _qam_scaled(spec, lam)
    extras["lambda"] = float(lam.data)
    return points, probs, extras


def model_demapper(spec: ModelSpec, leaves) -> DemapperNet:
    n_layers = len(spec.demapper_hidden) + 1
    layers = [(leaves[f"demap_w{i}"], leaves[f"demap_b{i}"]) for i in range(n_layers)]
    return DemapperNet(layers, parameterized=spec.parameterized)


def model_temperature(spec: ModelSpec, leaves, annealed_t: float):
    """Trainable sigmoid temperature, or the annealed schedule value."""
    if spec.trainable_temperature:
        return temperature_from_raw(leaves["t_raw"].reshape(()))
    return annealed_t
