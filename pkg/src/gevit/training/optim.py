"""Momentum SGD over named parameter groups."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..tensor import Tensor


@dataclass
class ParamGroup:
    name: str
    params: list[Tensor]
    lr: float


@dataclass
class SGD:
    groups: list[ParamGroup]
    momentum: float = 0.0
    weight_decay: float = 0.0
    _velocity: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    def step(self) -> None:
        """v <- mu v + g (+ wd theta); theta <- theta - lr v. Params without grad are skipped."""
        for group in self.groups:
            for p in group.params:
                if p.grad is None:
                    continue
                g = p.grad + self.weight_decay * p.data if self.weight_decay else p.grad
                if self.momentum:
                    v = self._velocity.get(id(p))
                    v = g.copy() if v is None else self.momentum * v + g
                    self._velocity[id(p)] = v
                    g = v
                p.data -= group.lr * g

    def zero_grad(self) -> None:
        for group in self.groups:
            for p in group.params:
                p.grad = None
