"""Scalar loss families with derivatives and smoothness constants."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

LOSS_KINDS = ("quadratic", "logistic")


@dataclass(frozen=True)
class LossModel:
    """Per-example scalar loss on the margin a = x_i^T w.

    quadratic: 0.5 * (a - y)^2            derivative a - y
    logistic:  log(1 + exp(-y * a))       derivative -y / (1 + exp(y * a))

    ``l_tilde`` is the Lipschitz constant of the scalar derivative, shared
    by every example for the built-in kinds: 1 for quadratic, 1/4 for
    logistic.
    """

    kind: str

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")

    @property
    def l_tilde(self) -> float:
        return 1.0 if self.kind == "quadratic" else 0.25

    def value(self, a, y):
        a = np.asarray(a, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if self.kind == "quadratic":
            r = a - y
            return 0.5 * r * r
        # softplus form stays finite for any margin
        return np.logaddexp(0.0, -y * a)

    def derivative(self, a, y):
        a = np.asarray(a, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if self.kind == "quadratic":
            return a - y
        return -y * expit(-y * a)

    def validate_labels(self, labels: np.ndarray) -> None:
        if self.kind == "logistic":
            distinct = set(np.unique(labels).tolist())
            if not distinct <= {-1.0, 1.0}:
                raise ValueError("logistic loss requires labels in {-1, +1}")

    def bind(self, ds) -> "BoundLoss":
        self.validate_labels(ds.labels)
        l_tilde_i = np.full(ds.n, self.l_tilde)
        composite = ds.norms * l_tilde_i
        return BoundLoss(
            model=self,
            l_tilde_i=l_tilde_i,
            L=composite,
            L_bar=float(composite.mean()),
            L_max=float(composite.max()),
        )


@dataclass(frozen=True)
class BoundLoss:
    """A loss bound to a dataset: composite smoothness L_i = ||x_i||^2 * l_tilde_i."""

    model: LossModel
    l_tilde_i: np.ndarray
    L: np.ndarray
    L_bar: float
    L_max: float


def make_loss(kind: str) -> LossModel:
    return LossModel(kind)
