"""End-to-end training loops: batch realization, loss assembly, Adam
updates, temperature annealing, validation, and Monte-Carlo evaluation.

Every random draw comes from a named substream of the experiment seed,
indexed by (epoch, batch), so a run is reproducible per component and a
reloaded checkpoint continues bit-identically.

Fringe handling: losses and BMI are computed on indices [N, S-N-1] of each
block only, both during training and validation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .autodiff import ComplexTensor, NonFiniteError, Tensor
from .bps import BpsConfig, bps
from .channel import (
    sigma_n_from_snr,
    sigma_phi_from_linewidth,
    substream,
    wiener_phase_trace,
)
from .demapper import demap
from .metrics import LlrBatch, BmiEstimate, bmi, entropy_bits, gcs_loss, geopcs_loss
from .models import ModelSpec, init_params, model_constellation, model_demapper, model_temperature
from .optim import AdamState, ParamVector, adam_step, value_and_gradient
from .shaping import index_to_bits, quantize_counts, sample_batch

__all__ = [
    "Checkpoint",
    "TrainConfig",
    "anneal_temperature",
    "evaluate",
    "prepare_batch",
    "build_loss_fn",
    "sample_channel_params",
    "train",
    "train_qam_pcs",
    "train_step",
]


@dataclass
class TrainConfig:
    mode: str
    m: int = 6
    parameterized: bool = False
    epochs: int = 50
    batches_per_epoch: int = 10
    batch_size: int = 5000
    learning_rate: float = 0.001
    seed: int = 0
    symmetry: int = 0
    trainable_temperature: bool = False
    fixed_lambda: float | None = None
    t_start: float = 1.0
    t_end: float = 0.001
    num_test_phases: int = 60
    half_window: int = 128
    phase_span: str = "full_2pi"
    snr_db_range: tuple[float, float] = (17.0, 17.0)
    linewidth_hz_range: tuple[float, float] = (100e3, 100e3)
    symbol_rate: float = 32e9
    random_start_phase: bool = True
    demapper_hidden: tuple = (128, 128)
    txnn_hidden: int = 32
    pnn_hidden: int = 32
    validation_symbols: int = 4096
    validation_every: int = 1

    def __post_init__(self):
        self.demapper_hidden = tuple(int(h) for h in self.demapper_hidden)
        self.snr_db_range = tuple(float(v) for v in self.snr_db_range)
        self.linewidth_hz_range = tuple(float(v) for v in self.linewidth_hz_range)
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size <= 2 * self.half_window:
            raise ValueError(
                f"batch_size={self.batch_size} must exceed 2*half_window={2 * self.half_window} "
                "for a nonempty valid range"
            )
        if not (0.0 < self.t_end <= self.t_start <= 1.0):
            raise ValueError("need 1 >= t_start >= t_end > 0")
        if self.snr_db_range[0] > self.snr_db_range[1]:
            raise ValueError("snr_db range reversed")
        if self.linewidth_hz_range[0] > self.linewidth_hz_range[1]:
            raise ValueError("linewidth range reversed")

    def model_spec(self) -> ModelSpec:
        return ModelSpec(
            mode=self.mode,
            m=self.m,
            parameterized=self.parameterized,
            demapper_hidden=self.demapper_hidden,
            symmetry=self.symmetry,
            trainable_temperature=self.trainable_temperature,
            fixed_lambda=self.fixed_lambda,
            txnn_hidden=self.txnn_hidden,
            pnn_hidden=self.pnn_hidden,
        )

    def sigma_ranges(self) -> tuple[tuple[float, float], tuple[float, float]]:
        """Uniform sampling bounds in sigma space (sigma_n falls as SNR rises)."""
        snr_lo, snr_hi = self.snr_db_range
        lw_lo, lw_hi = self.linewidth_hz_range
        sn = (sigma_n_from_snr(snr_hi), sigma_n_from_snr(snr_lo))
        sp = (
            sigma_phi_from_linewidth(lw_lo, self.symbol_rate),
            sigma_phi_from_linewidth(lw_hi, self.symbol_rate),
        )
        return sn, sp

    def validation_point(self) -> tuple[float, float]:
        """Mid-range channel point used for in-training validation."""
        (sn_lo, sn_hi), (sp_lo, sp_hi) = self.sigma_ranges()
        return 0.5 * (sn_lo + sn_hi), 0.5 * (sp_lo + sp_hi)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["demapper_hidden"] = list(self.demapper_hidden)
        d["snr_db_range"] = list(self.snr_db_range)
        d["linewidth_hz_range"] = list(self.linewidth_hz_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["demapper_hidden"] = tuple(d["demapper_hidden"])
        d["snr_db_range"] = tuple(d["snr_db_range"])
        d["linewidth_hz_range"] = tuple(d["linewidth_hz_range"])
        return cls(**d)


@dataclass
class Checkpoint:
    spec: ModelSpec
    config: TrainConfig
    params: ParamVector
    adam: AdamState
    epoch: int  # completed epochs
    history: list[dict] = field(default_factory=list)
    diverged: bool = False


def anneal_temperature(epoch: int, epochs: int, t_start: float, t_end: float) -> float:
    """Geometric decay from t_start at epoch 0 to t_end at the last epoch."""
    if not 0 <= epoch < max(epochs, 1):
        raise ValueError("epoch out of range")
    if epochs <= 1 or t_start == t_end:
        return t_start
    return float(t_start * (t_end / t_start) ** (epoch / (epochs - 1)))


def sample_channel_params(sigma_ranges, rng: np.random.Generator) -> tuple[float, float]:
    """One uniform draw per batch in sigma space."""
    (sn_lo, sn_hi), (sp_lo, sp_hi) = sigma_ranges
    return float(rng.uniform(sn_lo, sn_hi)), float(rng.uniform(sp_lo, sp_hi))


@dataclass
class BatchRealization:
    """Frozen randomness of one training batch; the loss is deterministic in it."""

    indices: np.ndarray
    bits: np.ndarray
    phases: np.ndarray
    noise: np.ndarray
    sigma_n: float
    sigma_phi: float
    temperature: float


def _detached_probs(spec: ModelSpec, params: ParamVector, sigma_n: float, sigma_phi: float) -> np.ndarray:
    _, probs, _ = model_constellation(spec, params.leaves(requires_grad=False), sigma_n, sigma_phi)
    return probs.data


def prepare_batch(
    spec: ModelSpec,
    cfg: TrainConfig,
    params: ParamVector,
    epoch: int,
    batch_idx: int,
) -> BatchRealization:
    """Draw the channel parameters, symbols, phase trace and noise of one batch.

    Shaped modes quantize the current symbol distribution to exact counts and
    permute; gradients never flow through this composition (integer outputs),
    probabilities reach the loss via the entropy term and the normalization.
    """
    S = cfg.batch_size
    sigma_n, sigma_phi = sample_channel_params(
        cfg.sigma_ranges(), substream(cfg.seed, "channel_params", epoch, batch_idx)
    )
    if spec.mode == "gcs":
        indices = substream(cfg.seed, "data_bits", epoch, batch_idx).integers(0, spec.M, size=S)
        bits = index_to_bits(indices, spec.m)
    else:
        probs = _detached_probs(spec, params, sigma_n, sigma_phi)
        counts = quantize_counts(probs, S)
        indices, bits = sample_batch(counts, substream(cfg.seed, "shuffle", epoch, batch_idx), m=spec.m)
    trace = wiener_phase_trace(
        S,
        sigma_phi,
        substream(cfg.seed, "phase", epoch, batch_idx),
        random_start=cfg.random_start_phase,
        start_rng=substream(cfg.seed, "start_phase", epoch, batch_idx),
    )
    scale = sigma_n / np.sqrt(2.0)
    g = substream(cfg.seed, "noise", epoch, batch_idx).standard_normal((2, S))
    noise = scale * (g[0] + 1j * g[1])
    t = anneal_temperature(epoch, cfg.epochs, cfg.t_start, cfg.t_end)
    return BatchRealization(indices, bits, trace.phases, noise, sigma_n, sigma_phi, t)


def build_loss_fn(spec: ModelSpec, cfg: TrainConfig, batch: BatchRealization):
    """Differentiable end-to-end loss of one frozen batch realization."""

    def loss_fn(leaves: dict[str, Tensor]) -> Tensor:
        points, probs, _ = model_constellation(spec, leaves, batch.sigma_n, batch.sigma_phi)
        x = points.take(batch.indices)
        z = x.rotate(batch.phases) + batch.noise
        bcfg = BpsConfig(
            num_test_phases=cfg.num_test_phases,
            half_window=cfg.half_window,
            mode="differentiable",
            temperature=model_temperature(spec, leaves, batch.temperature),
            phase_span=cfg.phase_span,
        )
        res = bps(z, points, bcfg)
        if res.valid_hi < res.valid_lo:
            raise ValueError("empty valid range: batch too short for the BPS window")
        llrs = demap(
            res.corrected[res.valid_slice],
            model_demapper(spec, leaves),
            batch.sigma_n,
            batch.sigma_phi,
        )
        bits_v = batch.bits[res.valid_slice]
        if spec.mode == "gcs":
            return gcs_loss(llrs, bits_v)
        return geopcs_loss(llrs, bits_v, probs)

    return loss_fn


def train_step(
    spec: ModelSpec,
    cfg: TrainConfig,
    params: ParamVector,
    state: AdamState,
    epoch: int,
    batch_idx: int,
) -> tuple[float, ParamVector, AdamState]:
    """One batch: sample, forward through channel + soft BPS, backward, Adam."""
    batch = prepare_batch(spec, cfg, params, epoch, batch_idx)
    loss, grads = value_and_gradient(build_loss_fn(spec, cfg, batch), params)
    params, state = adam_step(params, grads, state, cfg.learning_rate)
    return loss, params, state


def train(cfg: TrainConfig) -> Checkpoint:
    """Full training run; validation always uses the regular BPS.

    On divergence (non-finite loss or gradient) the last finite state is
    returned with ``diverged`` set instead of raising.
    """
    spec = cfg.model_spec()
    params = init_params(spec, substream(cfg.seed, "init"))
    state = AdamState.zeros(params.size)
    ckpt = Checkpoint(spec=spec, config=cfg, params=params, adam=state, epoch=0)
    for epoch in range(cfg.epochs):
        t_epoch = anneal_temperature(epoch, cfg.epochs, cfg.t_start, cfg.t_end)
        losses = []
        try:
            for b in range(cfg.batches_per_epoch):
                loss, params, state = train_step(spec, cfg, params, state, epoch, b)
                losses.append(loss)
        except (NonFiniteError, FloatingPointError):
            ckpt.diverged = True
        ckpt.params, ckpt.adam = params, state
        validate_now = (epoch % cfg.validation_every == 0) or epoch == cfg.epochs - 1
        val = None
        if validate_now and not ckpt.diverged:
            sn, sp = cfg.validation_point()
            val = evaluate(
                spec, params, cfg, sn, sp, cfg.validation_symbols, seed_context=("val", epoch)
            ).value
        ckpt.history.append(
            {
                "epoch": epoch,
                "loss": float(np.mean(losses)) if losses else float("nan"),
                "val_bmi": val,
                "temperature": t_epoch,
            }
        )
        if ckpt.diverged:
            break
        ckpt.epoch = epoch + 1
    return ckpt


def train_qam_pcs(cfg: TrainConfig) -> Checkpoint:
    """Probabilistically shaped square QAM: geometry fixed, lambda learned."""
    if cfg.mode != "qam_pcs":
        raise ValueError("train_qam_pcs requires mode='qam_pcs'")
    return train(cfg)


_SEED_CTX_TAGS = {"val": 0, "eval": 1}


def evaluate(
    spec: ModelSpec,
    params: ParamVector,
    cfg: TrainConfig,
    sigma_n: float,
    sigma_phi: float,
    num_symbols: int,
    bps_mode: str = "regular",
    temperature: float = 0.001,
    seed_context: tuple = ("eval", 0),
    seed: int | None = None,
    constellation_override: tuple[np.ndarray, np.ndarray] | None = None,
) -> BmiEstimate:
    """Monte-Carlo BMI at one channel point.

    ``bps_mode`` is ``regular`` (default), ``differentiable`` (soft estimate
    at the given temperature, e.g. a learned one), or ``genie`` (correct with
    the true phase trace; fringe masking kept for comparability).
    """
    if num_symbols <= 2 * cfg.half_window:
        raise ValueError("num_symbols must exceed the BPS window")
    tag, idx = _SEED_CTX_TAGS[seed_context[0]], int(seed_context[1])
    stream = "validation" if seed_context[0] == "val" else "evaluation"
    eval_seed = cfg.seed if seed is None else int(seed)

    leaves = params.leaves(requires_grad=False)
    points_t, probs_t, _ = model_constellation(spec, leaves, sigma_n, sigma_phi)
    if constellation_override is not None:
        points, probs = constellation_override
        points = np.asarray(points, dtype=np.complex128)
        probs = np.asarray(probs, dtype=np.float64)
    else:
        points, probs = points_t.data, probs_t.data

    if spec.mode == "gcs":
        indices = substream(eval_seed, stream, tag, idx, 0).integers(0, spec.M, size=num_symbols)
    else:
        counts = quantize_counts(probs, num_symbols)
        indices, _bits = sample_batch(counts, substream(eval_seed, stream, tag, idx, 0), m=spec.m)
    bits = index_to_bits(indices, spec.m)
    trace = wiener_phase_trace(
        num_symbols,
        sigma_phi,
        substream(eval_seed, stream, tag, idx, 1),
        random_start=cfg.random_start_phase,
        start_rng=substream(eval_seed, stream, tag, idx, 2),
    )
    g = substream(eval_seed, stream, tag, idx, 3).standard_normal((2, num_symbols))
    z = points[indices] * np.exp(1j * trace.phases) + sigma_n / np.sqrt(2.0) * (g[0] + 1j * g[1])

    lo, hi = cfg.half_window, num_symbols - cfg.half_window - 1
    if bps_mode == "genie":
        x_hat = ComplexTensor.from_complex(z * np.exp(-1j * trace.phases))
    elif bps_mode in ("regular", "differentiable"):
        bcfg = BpsConfig(
            num_test_phases=cfg.num_test_phases,
            half_window=cfg.half_window,
            mode=bps_mode,
            temperature=temperature,
            phase_span=cfg.phase_span,
        )
        res = bps(z, points, bcfg)
        x_hat, lo, hi = res.corrected, res.valid_lo, res.valid_hi
    else:
        raise ValueError(f"unknown bps_mode '{bps_mode}'")

    net = model_demapper(spec, leaves)
    valid = slice(lo, hi + 1)
    llrs = demap(x_hat[valid], net, sigma_n, sigma_phi).data
    batch = LlrBatch(llrs, bits[valid])
    return bmi(batch, entropy_bits(probs), total_symbols=num_symbols)


def full_loss_gradient_check(
    mode: str = "gcs",
    temperature: float = 0.1,
    m: int = 4,
    batch_size: int = 256,
    num_test_phases: int = 16,
    half_window: int = 16,
    demapper_hidden: tuple = (16, 16),
    seed: int = 7,
    rel_step: float = 1e-6,
    tol: float = 1e-3,
):
    """Finite-difference verification of the complete end-to-end loss.

    Checks every parameter of a freshly initialized model against central
    differences at the given softmin temperature.  The demapper is kept
    narrow so the full sweep stays fast; all pipeline stages (mapper,
    normalization, channel, soft BPS, unwrap, demapper, loss) are exercised.
    """
    from dataclasses import replace

    from .optim import finite_difference_check

    cfg = TrainConfig(
        mode=mode,
        m=m,
        epochs=1,
        batches_per_epoch=1,
        batch_size=batch_size,
        num_test_phases=num_test_phases,
        half_window=half_window,
        demapper_hidden=demapper_hidden,
        snr_db_range=(17.0, 17.0),
        linewidth_hz_range=(100e3, 100e3),
        seed=seed,
        t_start=1.0,
        t_end=1.0,
    )
    spec = cfg.model_spec()
    params = init_params(spec, substream(cfg.seed, "init"))
    batch = replace(prepare_batch(spec, cfg, params, 0, 0), temperature=temperature)
    return finite_difference_check(build_loss_fn(spec, cfg, batch), params, rel_step=rel_step, tol=tol)
