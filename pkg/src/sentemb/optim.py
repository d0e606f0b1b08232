"""Adaptive optimizers with factored second moments.

The primary optimizer keeps the memory-relevant structure of factored
adaptive methods: matrices store one row and one column accumulator instead
of a full second-moment buffer, vectors keep a full accumulator. The decay
schedule is beta2_t = 1 - t^(-0.8) and updates are RMS-clipped at d = 1.0.
There is no relative-step sizing or parameter scaling; the learning rate is
always supplied by the caller's schedule.

A plain Adam is exposed behind the same interface for A/B comparisons.
Both update rules are pure numpy and bit-deterministic; their slots
round-trip through checkpoints as named f64 arrays.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, NumericError, ShapeError
from .tensor import Tensor

EPS_FACTORED = 1e-30
CLIP_THRESHOLD = 1.0


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(x))))


class AdafactorLite:
    """Factored second-moment adaptive rule; see module docstring."""

    name = "adafactor"

    def __init__(self):
        self.slots: dict[str, dict[str, np.ndarray]] = {}

    def _ensure_slots(self, name: str, param: Tensor) -> dict[str, np.ndarray]:
        slot = self.slots.get(name)
        if slot is None:
            if param.ndim >= 2:
                slot = {
                    "row": np.zeros(param.shape[:-1]),
                    "col": np.zeros(param.shape[:-2] + param.shape[-1:]),
                }
            else:
                slot = {"acc": np.zeros(param.shape)}
            self.slots[name] = slot
        return slot

    def update(self, name: str, param: Tensor, grad: np.ndarray, lr: float, t: int) -> None:
        """Apply one step. ``t`` is the 1-based step counter."""
        if grad.shape != param.shape:
            raise ShapeError(f"gradient shape {grad.shape} != param {name} shape {param.shape}")
        if not np.isfinite(grad).all():
            raise NumericError(f"non-finite gradient for tensor {name!r}")
        slot = self._ensure_slots(name, param)
        beta2 = 1.0 - t ** (-0.8)
        g2 = np.square(grad) + EPS_FACTORED
        if param.ndim >= 2:
            slot["row"] = beta2 * slot["row"] + (1.0 - beta2) * g2.mean(axis=-1)
            slot["col"] = beta2 * slot["col"] + (1.0 - beta2) * g2.mean(axis=-2)
            row_mean = slot["row"].mean(axis=-1, keepdims=True)
            v_hat = (slot["row"] / row_mean)[..., None] * slot["col"][..., None, :]
        else:
            slot["acc"] = beta2 * slot["acc"] + (1.0 - beta2) * g2
            v_hat = slot["acc"]
        u = grad / np.sqrt(v_hat)
        u = u / max(1.0, _rms(u) / CLIP_THRESHOLD)
        param.data = param.data - lr * u

    # -- checkpoint plumbing ---------------------------------------------------

    def state_tensors(self) -> dict[str, np.ndarray]:
        return {
            f"{name}.{key}": arr
            for name, slot in self.slots.items()
            for key, arr in slot.items()
        }

    def load_state_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        self.slots = {}
        for full, arr in tensors.items():
            name, key = full.rsplit(".", 1)
            self.slots.setdefault(name, {})[key] = np.array(arr, dtype=np.float64)


class Adam:
    """Plain Adam fallback behind the same interface."""

    name = "adam"
    beta1 = 0.9
    beta2 = 0.999
    eps = 1e-8

    def __init__(self):
        self.slots: dict[str, dict[str, np.ndarray]] = {}

    def update(self, name: str, param: Tensor, grad: np.ndarray, lr: float, t: int) -> None:
        if grad.shape != param.shape:
            raise ShapeError(f"gradient shape {grad.shape} != param {name} shape {param.shape}")
        if not np.isfinite(grad).all():
            raise NumericError(f"non-finite gradient for tensor {name!r}")
        slot = self.slots.setdefault(
            name, {"m": np.zeros(param.shape), "v": np.zeros(param.shape)}
        )
        slot["m"] = self.beta1 * slot["m"] + (1.0 - self.beta1) * grad
        slot["v"] = self.beta2 * slot["v"] + (1.0 - self.beta2) * np.square(grad)
        m_hat = slot["m"] / (1.0 - self.beta1 ** t)
        v_hat = slot["v"] / (1.0 - self.beta2 ** t)
        param.data = param.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)

    state_tensors = AdafactorLite.state_tensors
    load_state_tensors = AdafactorLite.load_state_tensors


OPTIMIZERS = {"adafactor": AdafactorLite, "adam": Adam}


def make_optimizer(kind: str):
    cls = OPTIMIZERS.get(kind)
    if cls is None:
        raise ConfigError(f"unknown optimizer {kind!r}; valid: {sorted(OPTIMIZERS)}")
    return cls()
