import logging
from abc import ABC, abstractmethod
from typing import Optional, Sequence

import numpy as np

from ..exceptions import InvalidInputException

_LOGGER = logging.getLogger(__name__)


class Objective(ABC):
    """
    Per-sample loss l(theta; xi) over a feature matrix (n, p) and optional labels.

    smoothness is the constant nu of the averaged loss when it is known.
    """

    def __init__(self, dimension: int, smoothness: Optional[float] = None):
        if dimension < 1:
            raise InvalidInputException(f"Objective dimension must be >= 1, got {dimension}")
        self._dimension = dimension
        self._smoothness = smoothness

    @property
    def dimension(self) -> int:
        return self._dimension

    @property
    def smoothness(self) -> Optional[float]:
        return self._smoothness

    # cheap enough to evaluate the full gradient every round
    has_exact_gradient = False

    @abstractmethod
    def per_sample_loss(
        self, theta: np.ndarray, features: np.ndarray, labels: Optional[np.ndarray]
    ) -> np.ndarray:
        pass

    @abstractmethod
    def per_sample_gradients(
        self, theta: np.ndarray, features: np.ndarray, labels: Optional[np.ndarray]
    ) -> np.ndarray:
        pass

    def loss(self, theta, features, labels=None) -> float:
        return float(np.mean(self.per_sample_loss(theta, features, labels)))

    def gradient(self, theta, features, labels=None) -> np.ndarray:
        return np.mean(self.per_sample_gradients(theta, features, labels), axis=0)

    def accuracy(self, theta, features, labels=None) -> Optional[float]:
        return None

    def optimum(
        self, partitions: Sequence[np.ndarray], weights: Sequence[float]
    ) -> Optional[np.ndarray]:
        """Minimizer of sum_i p_i F_i when it has a closed form."""
        return None

    def finite_difference_error(
        self,
        theta: np.ndarray,
        features: np.ndarray,
        labels: Optional[np.ndarray] = None,
        step: float = 1e-6,
    ) -> float:
        """Max relative gap between per-sample gradients and central differences."""
        analytic = self.per_sample_gradients(theta, features, labels)
        numeric = np.empty_like(analytic)
        for j in range(self.dimension):
            offset = np.zeros(self.dimension)
            offset[j] = step
            numeric[:, j] = (
                self.per_sample_loss(theta + offset, features, labels)
                - self.per_sample_loss(theta - offset, features, labels)
            ) / (2.0 * step)

        scale = np.maximum(np.abs(analytic), 1.0)
        return float(np.max(np.abs(analytic - numeric) / scale))


class QuadraticObjective(Objective):
    """l(theta; c) = 1/2 ||theta - c||^2, the features are the centers c."""

    has_exact_gradient = True

    def __init__(self, dimension: int):
        super().__init__(dimension, smoothness=1.0)

    def per_sample_loss(self, theta, features, labels=None):
        return 0.5 * np.sum((theta[None, :] - features) ** 2, axis=1)

    def per_sample_gradients(self, theta, features, labels=None):
        return theta[None, :] - features

    def gradient(self, theta, features, labels=None):
        return theta - np.mean(features, axis=0)

    def optimum(self, partitions, weights):
        return np.sum(
            [w * np.mean(part, axis=0) for part, w in zip(partitions, weights)], axis=0
        )

    @staticmethod
    def gradient_variance(features: np.ndarray) -> float:
        """Per-sample gradient variance E||grad l - grad F||^2 over the given centers."""
        centered = features - np.mean(features, axis=0)
        return float(np.mean(np.sum(centered**2, axis=1)))


class LogisticObjective(Objective):
    """Binary logistic loss log(1 + exp(-y x.theta)) with labels in {0, 1}."""

    def __init__(self, dimension: int, smoothness: Optional[float] = None):
        super().__init__(dimension, smoothness=smoothness)

    @classmethod
    def for_features(cls, features: np.ndarray) -> "LogisticObjective":
        """Objective whose smoothness is lambda_max(X^T X / n) / 4."""
        n = max(1, features.shape[0])
        top = float(np.linalg.eigvalsh(features.T @ features / n)[-1])
        return cls(features.shape[1], smoothness=top / 4.0)

    @staticmethod
    def _signed(labels: np.ndarray) -> np.ndarray:
        return 2.0 * np.asarray(labels, dtype=np.float64) - 1.0

    def per_sample_loss(self, theta, features, labels):
        margins = self._signed(labels) * (features @ theta)
        return np.logaddexp(0.0, -margins)

    def per_sample_gradients(self, theta, features, labels):
        signed = self._signed(labels)
        margins = signed * (features @ theta)
        # sigmoid(-margin), written to stay finite for large |margin|
        weight = np.exp(-np.logaddexp(0.0, margins))
        return -(signed * weight)[:, None] * features

    def accuracy(self, theta, features, labels=None):
        predicted = (features @ theta) > 0
        return float(np.mean(predicted == (np.asarray(labels) > 0)))
