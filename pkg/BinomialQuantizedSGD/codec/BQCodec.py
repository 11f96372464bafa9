import logging
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from ..const import DEFAULT_NOISE_PROB
from ..exceptions import CorruptMessageException, InvalidInputException
from .Binomial import binomial_pmf, sample_binomial

_LOGGER = logging.getLogger(__name__)

# float64 vector of length d
GradientVector = np.ndarray

# slack for clipped vectors whose max coordinate lands one ulp above C
_CLIP_TOLERANCE = 1e-12


@dataclass(frozen=True)
class BqConfig:
    """Codec parameters: clip bound C, quantization level s, noise trials m, noise probability q."""

    clip_bound: float
    quant_level: int
    noise_trials: int
    noise_prob: float = DEFAULT_NOISE_PROB

    def __post_init__(self):
        if not np.isfinite(self.clip_bound) or self.clip_bound <= 0:
            raise InvalidInputException(
                f"clip_bound must be positive, got {self.clip_bound}"
            )
        if int(self.quant_level) != self.quant_level or self.quant_level < 1:
            raise InvalidInputException(
                f"quant_level must be an integer >= 1, got {self.quant_level}"
            )
        if int(self.noise_trials) != self.noise_trials or self.noise_trials < 0:
            raise InvalidInputException(
                f"noise_trials must be an integer >= 0, got {self.noise_trials}"
            )
        if not 0 < self.noise_prob < 1:
            raise InvalidInputException(
                f"noise_prob must lie in (0, 1), got {self.noise_prob}"
            )

    @property
    def alphabet_size(self) -> int:
        return 2 * self.quant_level + self.noise_trials + 1

    @property
    def offset(self) -> float:
        """Real decode offset m*q."""
        return self.noise_trials * self.noise_prob

    @property
    def min_code(self) -> int:
        return -self.quant_level

    @property
    def max_code(self) -> int:
        return self.quant_level + self.noise_trials


@dataclass(eq=False)
class QuantizedMessage:
    """Per-coordinate integer codes sigma*rho + o and the config that produced them."""

    codes: np.ndarray
    config: BqConfig

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.int64).reshape(-1)

    @property
    def dimension(self) -> int:
        return int(self.codes.shape[0])

    def validate(self) -> None:
        if self.dimension == 0:
            return

        low = int(self.codes.min())
        high = int(self.codes.max())
        if low < self.config.min_code or high > self.config.max_code:
            raise CorruptMessageException(
                f"Codes [{low}, {high}] outside alphabet "
                f"[{self.config.min_code}, {self.config.max_code}]"
            )

    def __eq__(self, other) -> bool:
        if not isinstance(other, QuantizedMessage):
            return NotImplemented
        return self.config == other.config and np.array_equal(self.codes, other.codes)

    def __repr__(self) -> str:
        return f"QuantizedMessage(d={self.dimension}, config={self.config})"


@dataclass(frozen=True)
class NoiseStats:
    """
    Piecewise-linear density of one coordinate of the BQ noise r.

    Piece k (k = -1..m) covers [lower[k+1], upper[k+1]] with density
    intercept + slope * r.
    """

    config: BqConfig
    variance_per_coord: float
    lower: np.ndarray
    upper: np.ndarray
    intercept: np.ndarray
    slope: np.ndarray

    @property
    def support(self) -> Tuple[float, float]:
        return float(self.lower[0]), float(self.upper[-1])

    def density(self, r: Union[float, np.ndarray]) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        piece = np.clip(np.searchsorted(self.lower, r, side="right") - 1, 0, None)
        piece = np.minimum(piece, len(self.lower) - 1)
        values = self.intercept[piece] + self.slope[piece] * r
        inside = (r >= self.lower[0]) & (r <= self.upper[-1])
        return np.where(inside, np.maximum(values, 0.0), 0.0)

    def moment(self, order: int) -> float:
        """Exact integral of r^order * f(r) over the support."""
        n = order
        lo, hi = self.lower, self.upper
        first = self.intercept * (hi ** (n + 1) - lo ** (n + 1)) / (n + 1)
        second = self.slope * (hi ** (n + 2) - lo ** (n + 2)) / (n + 2)
        return float(np.sum(first + second))

    def cdf(self, x: Union[float, np.ndarray]) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        clipped = np.clip(x[:, None], self.lower[None, :], self.upper[None, :])
        mass = self.intercept * (clipped - self.lower) + 0.5 * self.slope * (
            clipped**2 - self.lower**2
        )
        return np.sum(mass, axis=1)

    def bin_probabilities(self, edges: np.ndarray) -> np.ndarray:
        """Probability mass of each histogram bin [edges[i], edges[i+1])."""
        return np.diff(self.cdf(edges))


def as_gradient(values: Union[Sequence[float], np.ndarray]) -> GradientVector:
    grad = np.asarray(values, dtype=np.float64)
    if grad.ndim != 1:
        raise InvalidInputException(
            f"Gradient must be one-dimensional, got shape {grad.shape}"
        )
    if not np.all(np.isfinite(grad)):
        raise InvalidInputException("Gradient has non-finite coordinates")
    return grad


def _check_clip_bound(clip_bound: float) -> None:
    if not np.isfinite(clip_bound) or clip_bound <= 0:
        raise InvalidInputException(f"Clip bound must be positive, got {clip_bound}")


def clip_per_sample(grad: GradientVector, clip_bound: float) -> GradientVector:
    """Scale grad by 1 / max(1, ||grad||_inf / C)."""
    _check_clip_bound(clip_bound)
    grad = as_gradient(grad)
    if grad.size == 0:
        return grad.copy()

    scale = max(1.0, float(np.max(np.abs(grad))) / clip_bound)
    return grad / scale


def clip_batch_average(
    per_sample_grads: Union[Sequence[GradientVector], np.ndarray], clip_bound: float
) -> GradientVector:
    """Average of the per-sample clipped gradients; the l_inf bound C carries over."""
    _check_clip_bound(clip_bound)
    try:
        batch = np.asarray(per_sample_grads, dtype=np.float64)
    except ValueError as e:
        raise InvalidInputException("Per-sample gradients differ in dimension") from e

    if batch.ndim != 2:
        raise InvalidInputException(
            f"Expected a (L, d) batch of gradients, got shape {batch.shape}"
        )
    if batch.shape[0] == 0:
        raise InvalidInputException("Cannot average an empty batch")
    if not np.all(np.isfinite(batch)):
        raise InvalidInputException("Gradient has non-finite coordinates")

    norms = np.max(np.abs(batch), axis=1) if batch.shape[1] else np.zeros(len(batch))
    scales = np.maximum(1.0, norms / clip_bound)
    return np.mean(batch / scales[:, None], axis=0)


def uniform_quantize(
    clipped: GradientVector, config: BqConfig, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Stochastic rounding of |g_j|/C onto {0, 1/s, ..., 1}.

    Returns (signs, levels) with levels in 0..s; level l+1 is picked with
    probability s|g_j|/C - l, so E[C * sign * level / s] = g_j.
    """
    clipped = as_gradient(clipped)
    C, s = config.clip_bound, config.quant_level

    magnitude = np.abs(clipped)
    if magnitude.size and float(magnitude.max()) > C * (1.0 + _CLIP_TOLERANCE):
        raise InvalidInputException(
            f"Gradient l_inf norm {float(magnitude.max())} exceeds clip bound {C}"
        )

    scaled = np.minimum(magnitude * s / C, float(s))
    lower = np.floor(scaled)
    round_up = rng.random(clipped.shape[0]) < (scaled - lower)

    levels = lower.astype(np.int64) + round_up
    signs = np.where(clipped < 0, -1, 1).astype(np.int64)
    return signs, levels


def signed_levels(signs: np.ndarray, levels: np.ndarray) -> np.ndarray:
    return np.asarray(signs, dtype=np.int64) * np.asarray(levels, dtype=np.int64)


def add_binomial_noise(
    levels_signed: np.ndarray, config: BqConfig, rng: np.random.Generator
) -> QuantizedMessage:
    levels_signed = np.asarray(levels_signed, dtype=np.int64).reshape(-1)
    s = config.quant_level
    if levels_signed.size and (
        levels_signed.min() < -s or levels_signed.max() > s
    ):
        raise InvalidInputException(f"Signed levels must lie in [-{s}, {s}]")

    noise = sample_binomial(
        config.noise_trials, config.noise_prob, levels_signed.shape[0], rng
    )
    return QuantizedMessage(codes=levels_signed + noise, config=config)


def encode(
    clipped: GradientVector, config: BqConfig, rng: np.random.Generator
) -> QuantizedMessage:
    """Quantize then add binomial noise, drawing both from one stream."""
    signs, levels = uniform_quantize(clipped, config, rng)
    return add_binomial_noise(signed_levels(signs, levels), config, rng)


def decode(message: QuantizedMessage) -> GradientVector:
    """(C/s) * (codes - m*q), an unbiased estimate of the clipped gradient."""
    message.validate()
    config = message.config
    return (config.clip_bound / config.quant_level) * (
        message.codes.astype(np.float64) - config.offset
    )


def noise_variance(config: BqConfig) -> float:
    """V(m, q, s) = mq(1-q)/s^2 + 1/(6 s^2); per-coordinate second moment is C^2 V."""
    m, q, s = config.noise_trials, config.noise_prob, config.quant_level
    return (m * q * (1.0 - q) + 1.0 / 6.0) / s**2


def uniform_quantization_variance(
    grad: GradientVector, config: BqConfig
) -> np.ndarray:
    """Exact rounding variance t(1-t)(C/s)^2 of each coordinate, t the in-bin fraction."""
    grad = as_gradient(grad)
    scaled = np.minimum(np.abs(grad) * config.quant_level / config.clip_bound, config.quant_level)
    t = scaled - np.floor(scaled)
    return t * (1.0 - t) * (config.clip_bound / config.quant_level) ** 2


def noise_pdf(config: BqConfig) -> NoiseStats:
    C, s = config.clip_bound, config.quant_level
    m, mq = config.noise_trials, config.offset

    # P_{-1} .. P_{m+1}, zero padded at both ends
    mass = np.concatenate(([0.0], binomial_pmf(m, config.noise_prob), [0.0]))
    k = np.arange(-1, m + 1, dtype=np.float64)
    p_k, p_next = mass[:-1], mass[1:]

    intercept = (s / C) * ((k + 1 - mq) * p_k + (mq - k) * p_next)
    slope = (s**2 / C**2) * (p_next - p_k)

    return NoiseStats(
        config=config,
        variance_per_coord=C**2 * noise_variance(config),
        lower=(k - mq) * C / s,
        upper=(k + 1 - mq) * C / s,
        intercept=intercept,
        slope=slope,
    )


def sample_noise(
    config: BqConfig, count: int, rng: np.random.Generator
) -> np.ndarray:
    """
    Monte Carlo draws of r = decode(encode(g)) - g with g uniform on [-C, C].

    g uniform on [-C, C] is uniform inside every quantization bin, the
    assumption under which noise_pdf is exact.
    """
    C = config.clip_bound
    grad = rng.uniform(-C, C, size=count)
    return decode(encode(grad, config, rng)) - grad
