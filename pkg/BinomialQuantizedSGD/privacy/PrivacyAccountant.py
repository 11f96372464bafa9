import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from ..codec.Binomial import binomial_log_pmf
from ..codec.BQCodec import BqConfig
from ..const import (
    GAUSSIAN_FORM_CONSTANT,
    GAUSSIAN_PMAX_MIN_TRIALS,
    LEDGER_COLUMNS,
)
from ..exceptions import InvalidInputException, NoPrivacyGuaranteeException
from ..utils.utils import write_csv

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class PrivacySpec:
    """Per-client privacy requirement (epsilon_target, delta_target)."""

    epsilon_target: float
    delta_target: float

    def __post_init__(self):
        if not self.epsilon_target > 0:
            raise InvalidInputException(
                f"epsilon_target must be positive, got {self.epsilon_target}"
            )
        if not 0 < self.delta_target < 1:
            raise InvalidInputException(
                f"delta_target must lie in (0, 1), got {self.delta_target}"
            )


@dataclass(frozen=True)
class ClientDataProfile:
    """
    Dataset size |D|, batch size L and the dimension d used for privacy.

    privacy_dimension is normally the model parameter count; it may be set to
    an effective value such as ||grad l||_1 / C instead.
    """

    dataset_size: int
    batch_size: int
    privacy_dimension: float

    def __post_init__(self):
        if not 0 < self.privacy_dimension < math.inf:
            raise InvalidInputException(
                f"privacy_dimension must be positive and finite, got {self.privacy_dimension}"
            )
        if not 1 <= self.batch_size <= self.dataset_size:
            raise InvalidInputException(
                f"batch_size must satisfy 1 <= L <= |D|, got L={self.batch_size}, "
                f"|D|={self.dataset_size}"
            )

    @property
    def sampling_ratio(self) -> float:
        return self.batch_size / self.dataset_size


@dataclass(frozen=True)
class ComposedPrivacy:
    rounds: int
    epsilon_exact: float
    delta_exact: float
    epsilon_simplified: float
    delta_simplified: float
    # sqrt(T log 1/delta) * eps, reported for information only
    epsilon_text: float


def _check_delta(delta: float, name: str = "delta") -> None:
    if not 0 < delta < 1:
        raise InvalidInputException(f"{name} must lie in (0, 1), got {delta}")


def binomial_pmax(m: int, q: float) -> float:
    """Largest Bin(m, q) mass, evaluated exactly in log space."""
    if m < 0:
        raise InvalidInputException(f"m must be >= 0, got {m}")
    if not 0 < q < 1:
        raise InvalidInputException(f"q must lie in (0, 1), got {q}")
    if m == 0:
        return 1.0

    return float(math.exp(np.max(binomial_log_pmf(m, q))))


def gaussian_pmax(m: int, q: float = 0.5) -> float:
    """De Moivre-Laplace value 1/sqrt(2 pi m q (1-q)) of the largest binomial mass."""
    if m < 1:
        raise InvalidInputException(f"Gaussian P_max needs m >= 1, got {m}")
    return 1.0 / math.sqrt(2.0 * math.pi * m * q * (1.0 - q))


def _check_guarantee(config: BqConfig, profile: ClientDataProfile) -> None:
    if config.noise_trials == 0:
        raise NoPrivacyGuaranteeException(
            "Uniform quantization without binomial noise (m = 0) cannot achieve SGD privacy"
        )
    if profile.batch_size <= 2 * config.quant_level:
        _LOGGER.warning(
            f"Batch size L={profile.batch_size} <= 2s={2 * config.quant_level}: "
            "adjacent gradients may fall in non-adjacent quantization bins"
        )


def per_round_privacy(
    config: BqConfig, profile: ClientDataProfile, delta: float
) -> float:
    """epsilon = 8 d s L P_max / (|D|^2 delta), exact P_max."""
    _check_delta(delta)
    _check_guarantee(config, profile)

    pmax = binomial_pmax(config.noise_trials, config.noise_prob)
    return (
        8.0
        * profile.privacy_dimension
        * config.quant_level
        * profile.batch_size
        * pmax
        / (profile.dataset_size**2 * delta)
    )


def per_round_privacy_gaussian(
    config: BqConfig, profile: ClientDataProfile, delta: float
) -> float:
    """Closed form 6.4 d s L / (|D|^2 sqrt(m) delta) for q = 1/2."""
    _check_delta(delta)
    _check_guarantee(config, profile)

    if config.noise_trials <= GAUSSIAN_PMAX_MIN_TRIALS:
        _LOGGER.warning(
            f"Gaussian epsilon approximation used with m={config.noise_trials} <= "
            f"{GAUSSIAN_PMAX_MIN_TRIALS}"
        )

    return (
        GAUSSIAN_FORM_CONSTANT
        * profile.privacy_dimension
        * config.quant_level
        * profile.batch_size
        / (profile.dataset_size**2 * math.sqrt(config.noise_trials) * delta)
    )


def sensitivity_bound(dimension: int, clip_bound: float, batch_size: int) -> float:
    """l_1 change of the clipped batch gradient under one-sample replacement."""
    return 2.0 * dimension * clip_bound / batch_size


def pre_amplification_privacy(
    config: BqConfig, profile: ClientDataProfile, delta: float
) -> Tuple[float, float]:
    """
    (epsilon', delta') of one BQ release before subsampling.

    Subsampling at rate L/|D| maps it onto per_round_privacy(config, profile, delta).
    """
    _check_delta(delta)
    _check_guarantee(config, profile)

    delta_full = delta / profile.sampling_ratio
    pmax = binomial_pmax(config.noise_trials, config.noise_prob)
    epsilon_full = (
        8.0
        * profile.privacy_dimension
        * config.quant_level
        * pmax
        / (profile.batch_size * delta_full)
    )
    return epsilon_full, delta_full


def amplify_by_subsampling(
    epsilon_full: float, delta_full: float, batch_size: int, dataset_size: int
) -> Tuple[float, float]:
    if not 1 <= batch_size <= dataset_size:
        raise InvalidInputException(
            f"Subsampling needs 1 <= L <= |D|, got L={batch_size}, |D|={dataset_size}"
        )

    ratio = batch_size / dataset_size
    return ratio * epsilon_full, ratio * delta_full


def compose(
    per_round: Tuple[float, float], rounds: int, delta_prime: Optional[float] = None
) -> ComposedPrivacy:
    """
    T-fold composition of an (epsilon, delta) release.

    Exact: sqrt(-2T ln delta') eps + T eps (e^eps - 1), delta T + delta'.
    Simplified: sqrt(2T ln(1/delta)) eps with delta' = delta, total T delta.
    Logs are natural.
    """
    epsilon, delta = per_round
    if rounds < 1:
        raise InvalidInputException(f"rounds must be >= 1, got {rounds}")
    _check_delta(delta)
    if delta_prime is None:
        delta_prime = delta
    _check_delta(delta_prime, "delta_prime")

    return ComposedPrivacy(
        rounds=rounds,
        epsilon_exact=math.sqrt(-2.0 * rounds * math.log(delta_prime)) * epsilon
        + rounds * epsilon * math.expm1(epsilon),
        delta_exact=rounds * delta + delta_prime,
        epsilon_simplified=math.sqrt(2.0 * rounds * math.log(1.0 / delta)) * epsilon,
        delta_simplified=rounds * delta,
        epsilon_text=math.sqrt(rounds * math.log(1.0 / delta)) * epsilon,
    )


def min_bits_for_privacy(profile: ClientDataProfile, spec: PrivacySpec) -> float:
    """Lower bound on bits per coordinate: 1/2 log2(6.4 d L / |D|^2) - 1/2 log2(eps delta)."""
    return 0.5 * math.log2(
        GAUSSIAN_FORM_CONSTANT
        * profile.privacy_dimension
        * profile.batch_size
        / profile.dataset_size**2
    ) - 0.5 * math.log2(spec.epsilon_target * spec.delta_target)


@dataclass(frozen=True)
class LedgerEntry:
    round_index: int
    epsilon: float
    delta: float
    totals: ComposedPrivacy


class PrivacyLedger:
    """
    Running per-client record of per-round (epsilon, delta) and composed totals.

    Rounds may carry different epsilons; totals use the heterogeneous forms
    sqrt(2 ln(1/delta') sum eps^2) [+ sum eps (e^eps - 1)], which reduce to
    compose() when every round is equal. Written by one owner only.
    """

    def __init__(self, client_id: int, delta_prime: float):
        _check_delta(delta_prime, "delta_prime")

        self.__client_id = client_id
        self.__delta_prime = delta_prime
        self.__entries: List[LedgerEntry] = []

        self.__sum_eps_sq = 0.0
        self.__sum_eps_expm1 = 0.0
        self.__sum_delta = 0.0

    @property
    def client_id(self) -> int:
        return self.__client_id

    @property
    def delta_prime(self) -> float:
        return self.__delta_prime

    @property
    def entries(self) -> List[LedgerEntry]:
        return list(self.__entries)

    @property
    def rounds(self) -> int:
        return len(self.__entries)

    def record_round(self, round_index: int, epsilon: float, delta: float) -> LedgerEntry:
        _check_delta(delta)

        self.__sum_eps_sq += epsilon**2
        self.__sum_eps_expm1 += epsilon * math.expm1(epsilon)
        self.__sum_delta += delta

        entry = LedgerEntry(
            round_index=round_index,
            epsilon=epsilon,
            delta=delta,
            totals=self.__compose(len(self.__entries) + 1),
        )
        self.__entries.append(entry)
        return entry

    def __compose(self, rounds: int) -> ComposedPrivacy:
        log_term = math.log(1.0 / self.__delta_prime)
        simplified = math.sqrt(2.0 * log_term * self.__sum_eps_sq)

        return ComposedPrivacy(
            rounds=rounds,
            epsilon_exact=simplified + self.__sum_eps_expm1,
            delta_exact=self.__sum_delta + self.__delta_prime,
            epsilon_simplified=simplified,
            delta_simplified=self.__sum_delta,
            epsilon_text=math.sqrt(log_term * self.__sum_eps_sq),
        )

    def totals(self) -> Optional[ComposedPrivacy]:
        if not self.__entries:
            return None
        return self.__entries[-1].totals

    def to_csv_rows(self) -> List[list]:
        return [
            [
                entry.round_index,
                entry.epsilon,
                entry.delta,
                entry.totals.epsilon_exact,
                entry.totals.epsilon_simplified,
                entry.totals.delta_simplified,
            ]
            for entry in self.__entries
        ]

    def write_csv(self, path: str) -> None:
        write_csv(path, LEDGER_COLUMNS, self.to_csv_rows())

    def __repr__(self) -> str:
        return (
            f"PrivacyLedger(client={self.__client_id}, rounds={len(self.__entries)}, "
            f"totals={self.totals()})"
        )
