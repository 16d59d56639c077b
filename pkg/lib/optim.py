"""
AdamW and a reduce-on-plateau learning-rate schedule.
"""
from __future__ import annotations

import logging
import math
from typing import Any, Dict, List, Sequence

import numpy as np

from .layers import Parameter

logger = logging.getLogger(__name__)


class AdamW:
    """
    Adam with bias correction and decoupled weight decay.

    Frozen parameters (requires_grad False) are skipped entirely, so their
    values and moments stay bitwise unchanged.
    """

    def __init__(self, params: Sequence[Parameter], lr: float = 1e-3, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.01):
        self.params: List[Parameter] = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m: Dict[str, np.ndarray] = {p.name: np.zeros_like(p.data) for p in self.params}
        self.v: Dict[str, np.ndarray] = {p.name: np.zeros_like(p.data) for p in self.params}

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        correction1 = 1.0 - self.beta1 ** t
        correction2 = 1.0 - self.beta2 ** t
        for p in self.params:
            if not p.requires_grad:
                continue
            g = p.grad
            m = self.m[p.name]
            v = self.v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            if self.weight_decay:
                p.data *= 1.0 - self.lr * self.weight_decay
            p.data -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Moments as named arrays under optim/m/ and optim/v/."""
        state = {}
        for name in self.m:
            state[f"optim/m/{name}"] = self.m[name].copy()
            state[f"optim/v/{name}"] = self.v[name].copy()
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray], step_count: int, lr: float) -> None:
        for name in self.m:
            if f"optim/m/{name}" in state:
                self.m[name] = np.array(state[f"optim/m/{name}"], dtype=np.float64)
                self.v[name] = np.array(state[f"optim/v/{name}"], dtype=np.float64)
        self.step_count = step_count
        self.lr = lr


class ReduceLROnPlateau:
    """
    Multiply the optimizer's lr by factor after `patience` consecutive
    evaluations that fail to improve the best metric by at least threshold.
    """

    def __init__(self, optimizer: AdamW, factor: float = 0.5, patience: int = 2,
                 threshold: float = 1e-4, min_lr: float = 0.0):
        self.optimizer = optimizer
        self.factor = factor
        self.patience = patience
        self.threshold = threshold
        self.min_lr = min_lr
        self.best = math.inf
        self.num_bad = 0

    def step(self, metric: float) -> bool:
        """Record one evaluation; returns True when the lr was reduced."""
        if metric < self.best - self.threshold:
            self.best = metric
            self.num_bad = 0
            return False
        self.num_bad += 1
        if self.num_bad >= self.patience:
            new_lr = max(self.optimizer.lr * self.factor, self.min_lr)
            if new_lr < self.optimizer.lr:
                logger.info(f"Reducing learning rate {self.optimizer.lr:.3g} -> {new_lr:.3g}")
                self.optimizer.lr = new_lr
                self.num_bad = 0
                return True
            self.num_bad = 0
        return False

    def state(self) -> Dict[str, Any]:
        return {"best": self.best, "num_bad": self.num_bad}

    def load_state(self, state: Dict[str, Any]) -> None:
        self.best = float(state.get("best", math.inf))
        self.num_bad = int(state.get("num_bad", 0))
