"""Coefficient ramps over training progress p in [0, 1]."""
from __future__ import annotations

import math

SCHEDULES = ("constant", "dann_adaptive", "linear_warmup")


def dann_schedule(p: float, gamma: float = 10.0, scale: float = 0.1) -> float:
    """scale * (2 / (1 + exp(-gamma p)) - 1): 0 at p=0, rising towards scale."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"progress must lie in [0, 1], got {p}")
    return scale * (2.0 / (1.0 + math.exp(-gamma * p)) - 1.0)


def linear_warmup(p: float, scale: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"progress must lie in [0, 1], got {p}")
    return scale * p


def coefficient(kind: str, p: float, scale: float, gamma: float = 10.0) -> float:
    if kind == "constant":
        return scale
    if kind == "dann_adaptive":
        return dann_schedule(p, gamma, scale)
    if kind == "linear_warmup":
        return linear_warmup(p, scale)
    raise ValueError(f"unknown schedule {kind!r}; expected one of {SCHEDULES}")
