"""SGD with momentum, weight decay, and step-decay schedules."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import MutableMapping

import numpy as np

from ..errors import ConfigError, NumericError, ShapeError


@dataclass
class OptimizerState:
    learning_rate: float
    momentum: float = 0.9
    weight_decay: float = 5e-4
    schedule: list[tuple[int, float]] = field(default_factory=list)
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        self.schedule = sorted((int(e), float(lr)) for e, lr in self.schedule)
        self.base_lr = self.learning_rate

    def lr_at(self, epoch: int) -> float:
        """Learning rate in effect during ``epoch`` (0-based)."""
        lr = self.base_lr
        for start, value in self.schedule:
            if epoch >= start:
                lr = value
        return lr

    def set_epoch(self, epoch: int) -> float:
        self.learning_rate = self.lr_at(epoch)
        return self.learning_rate


def sgd_step(params: MutableMapping[str, np.ndarray], grads, state: OptimizerState):
    """``v = momentum*v + grad + decay*param``; ``param -= lr*v``. Updates in place."""
    if set(grads) != set(params):
        raise ShapeError(f"gradient keys {sorted(grads)} do not match parameters {sorted(params)}")
    for k, g in grads.items():
        if np.shape(g) != params[k].shape:
            raise ShapeError(f"gradient for {k!r} has shape {np.shape(g)}, expected {params[k].shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {k!r}; step aborted")
    dtype_lr = state.learning_rate
    for k in params:
        p = params[k]
        v = state.velocity.get(k)
        if v is None:
            v = np.zeros_like(p)
        v = state.momentum * v + grads[k] + state.weight_decay * p
        v = v.astype(p.dtype, copy=False)
        state.velocity[k] = v
        p -= p.dtype.type(dtype_lr) * v
    return params, state
