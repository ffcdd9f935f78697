"""Trainable-parameter container, Adam, and finite-difference verification.

A loss is any callable taking a mapping ``name -> Tensor`` (one leaf tensor
per parameter block) and returning a scalar :class:`~phaseshape.autodiff.Tensor`.
:func:`gradient` evaluates it once and back-propagates; the finite-difference
checker re-evaluates the same callable at perturbed points, so both sides of
the verification share nothing but the loss definition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor

__all__ = [
    "AdamState",
    "GradReport",
    "ParamVector",
    "adam_step",
    "finite_difference_check",
    "gradient",
    "value_and_gradient",
]

REL_ERR_FLOOR = 1e-8


class ParamVector:
    """Ordered collection of named float64 parameter blocks."""

    def __init__(self, blocks: dict[str, np.ndarray]):
        self._blocks: dict[str, np.ndarray] = {}
        for name, arr in blocks.items():
            arr = np.asarray(arr, dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"parameter block '{name}' contains non-finite values")
            self._blocks[name] = arr.copy()
        if len(set(self._blocks)) != len(self._blocks):
            raise ValueError("duplicate parameter names")

    @property
    def names(self) -> list[str]:
        return list(self._blocks)

    @property
    def size(self) -> int:
        return sum(b.size for b in self._blocks.values())

    def block(self, name: str) -> np.ndarray:
        return self._blocks[name]

    def items(self):
        return self._blocks.items()

    def __contains__(self, name: str) -> bool:
        return name in self._blocks

    def copy(self) -> "ParamVector":
        return ParamVector(self._blocks)

    def flat(self) -> np.ndarray:
        if not self._blocks:
            return np.zeros(0)
        return np.concatenate([b.ravel() for b in self._blocks.values()])

    def with_flat(self, vec: np.ndarray) -> "ParamVector":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.size,):
            raise ValueError("flat vector length mismatch")
        out, off = {}, 0
        for name, b in self._blocks.items():
            out[name] = vec[off : off + b.size].reshape(b.shape)
            off += b.size
        return ParamVector(out)

    def scalar_names(self) -> list[str]:
        """One identifier per scalar entry, 'block[i]' for multi-element blocks."""
        names = []
        for name, b in self._blocks.items():
            if b.size == 1:
                names.append(name)
            else:
                names.extend(f"{name}[{i}]" for i in range(b.size))
        return names

    def leaves(self, requires_grad: bool = True) -> dict[str, Tensor]:
        return {name: Tensor(b, requires_grad=requires_grad) for name, b in self._blocks.items()}


def value_and_gradient(loss_fn, params: ParamVector) -> tuple[float, np.ndarray]:
    """Evaluate the loss and its gradient w.r.t. every parameter scalar."""
    leaves = params.leaves(requires_grad=True)
    out = loss_fn(leaves)
    if not isinstance(out, Tensor):
        raise TypeError("loss function must return a Tensor")
    out.backward()
    grads = []
    for name, b in params.items():
        g = leaves[name].grad
        grads.append(np.zeros(b.size) if g is None else np.asarray(g).ravel())
    g = np.concatenate(grads) if grads else np.zeros(0)
    return float(out.data), g


def gradient(loss_fn, params: ParamVector) -> np.ndarray:
    return value_and_gradient(loss_fn, params)[1]


def _loss_value(loss_fn, params: ParamVector) -> float:
    out = loss_fn(params.leaves(requires_grad=False))
    return float(out.data if isinstance(out, Tensor) else out)


@dataclass
class GradReport:
    """Per-parameter comparison of analytic and central-difference gradients."""

    names: list[str]
    analytic: np.ndarray
    finite_diff: np.ndarray
    rel_err: np.ndarray
    flagged: list[int] = field(default_factory=list)
    unverifiable: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.flagged

    def summary(self) -> str:
        worst = float(np.max(self.rel_err)) if self.rel_err.size else 0.0
        lines = [
            f"checked {len(self.names)} parameters: "
            f"{len(self.flagged)} flagged, {len(self.unverifiable)} unverifiable, "
            f"max rel err {worst:.3e}"
        ]
        for i in self.flagged[:20]:
            lines.append(
                f"  FLAG {self.names[i]}: analytic={self.analytic[i]:.6e} "
                f"fd={self.finite_diff[i]:.6e} rel_err={self.rel_err[i]:.3e}"
            )
        return "\n".join(lines)


def finite_difference_check(
    loss_fn,
    params: ParamVector,
    rel_step: float = 1e-6,
    tol: float = 1e-3,
    indices=None,
) -> GradReport:
    """Central-difference verification with per-parameter step h = rel_step*max(|p|, 1).

    Parameters whose perturbed loss cannot be evaluated are marked
    unverifiable instead of aborting the check.
    """
    if not 0.0 < rel_step <= 1e-2:
        raise ValueError("rel_step must lie in (0, 1e-2]")
    analytic = gradient(loss_fn, params)
    base = params.flat()
    idx = np.arange(base.size) if indices is None else np.asarray(indices, dtype=int)
    names_all = params.scalar_names()
    fd = np.zeros(idx.size)
    rel = np.zeros(idx.size)
    flagged, unverifiable = [], []
    for j, i in enumerate(idx):
        h = rel_step * max(abs(base[i]), 1.0)
        try:
            plus = base.copy()
            plus[i] += h
            minus = base.copy()
            minus[i] -= h
            f_plus = _loss_value(loss_fn, params.with_flat(plus))
            f_minus = _loss_value(loss_fn, params.with_flat(minus))
        except (FloatingPointError, ValueError, ZeroDivisionError):
            unverifiable.append(j)
            fd[j] = np.nan
            rel[j] = 0.0
            continue
        fd[j] = (f_plus - f_minus) / (2.0 * h)
        a = analytic[i]
        rel[j] = abs(a - fd[j]) / max(abs(a), abs(fd[j]), REL_ERR_FLOOR)
        if rel[j] > tol:
            flagged.append(j)
    return GradReport(
        names=[names_all[i] for i in idx],
        analytic=analytic[idx],
        finite_diff=fd,
        rel_err=rel,
        flagged=flagged,
        unverifiable=unverifiable,
    )


@dataclass
class AdamState:
    """First/second moment estimates, one scalar per parameter."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(
    params: ParamVector,
    grads: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[ParamVector, AdamState]:
    """One bias-corrected Adam update; rejects non-finite gradients."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != (params.size,):
        raise ValueError("gradient length mismatch")
    if not np.all(np.isfinite(grads)):
        raise FloatingPointError("non-finite gradient passed to adam_step")
    t = state.step_count + 1
    m = beta1 * state.first_moment + (1.0 - beta1) * grads
    v = beta2 * state.second_moment + (1.0 - beta2) * grads**2
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    new_flat = params.flat() - lr * m_hat / (np.sqrt(v_hat) + eps)
    return params.with_flat(new_flat), AdamState(m, v, t)
