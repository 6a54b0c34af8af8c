"""Loss-approximation bound for a weighted coreset, and the radius/balance objective.

The model constants (loss bound, Lipschitz constants) are supplied by the
user; nothing here estimates them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .geometry import WeightedCoreset, weight_norm

__all__ = ["BoundParams", "BoundTerms", "bound_terms", "nu", "coreset_objective"]


@dataclass(frozen=True)
class BoundParams:
    L: float = 1.0  # loss upper bound
    lambda_l: float = 1.0  # loss Lipschitz constant in x
    lambda_eta: float = 0.0  # regression-function Lipschitz constant
    C: int = 1  # number of classes
    gamma: float = 0.05
    n: int | None = None  # candidate count; defaults to the coreset's
    training_losses: Sequence[float] | None = field(default=None, hash=False)

    def __post_init__(self):
        if not (0.0 < self.gamma <= 2.0):
            raise ValueError(f"gamma must lie in (0, 2], got {self.gamma}")
        if self.L < 0 or self.lambda_l < 0 or self.lambda_eta < 0 or self.C < 1:
            raise ValueError("L, lambda_l, lambda_eta must be >= 0 and C >= 1")

    @property
    def log_term(self) -> float:
        return math.log(2.0 / self.gamma)

    def to_dict(self) -> dict:
        return {"L": self.L, "lambda_l": self.lambda_l, "lambda_eta": self.lambda_eta, "C": self.C,
                "gamma": self.gamma, "n": self.n}


@dataclass(frozen=True)
class BoundTerms:
    radius: float
    hoeffding: float
    weight: float
    training: float | None  # None when losses were not supplied

    @property
    def total(self) -> float:
        return self.radius + self.hoeffding + self.weight + (self.training or 0.0)

    def to_dict(self) -> dict:
        return {
            "radius_term": self.radius,
            "hoeffding_term": self.hoeffding,
            "weight_term": self.weight,
            "training_term": "not evaluated" if self.training is None else self.training,
            "total": self.total,
        }


def bound_terms(coreset: WeightedCoreset, delta: float, params: BoundParams) -> BoundTerms:
    n = params.n if params.n is not None else coreset.total_candidates
    if n < 1:
        raise ValueError("candidate count must be positive")
    L2log = params.L ** 2 * params.log_term
    radius = delta * (params.lambda_l + params.lambda_eta * params.L * params.C)
    hoeffding = math.sqrt(L2log / (2.0 * n))
    sum_u2 = float(sum(int(e.weight) ** 2 for e in coreset.entries))
    weight = math.sqrt(L2log / (2.0 * n * n) * sum_u2)
    training = None
    if params.training_losses is not None:
        losses = list(params.training_losses)
        if len(losses) != len(coreset):
            raise ValueError("need one training loss per coreset entry")
        training = sum(e.weight / n * l for e, l in zip(coreset.entries, losses))
    return BoundTerms(radius, hoeffding, weight, training)


def nu(params: BoundParams) -> float:
    """Weight-balance coefficient of the objective ``delta + nu * ||u~||``."""
    denom = params.lambda_l + params.lambda_eta * params.L * params.C
    if denom <= 0:
        raise ValueError("lambda_l + lambda_eta * L * C must be positive")
    return math.sqrt(params.L ** 2 * params.log_term / 2.0) / denom


def coreset_objective(delta: float, coreset: WeightedCoreset, nu_value: float) -> float:
    return delta + nu_value * weight_norm(coreset)
