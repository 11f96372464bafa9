import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

from ..codec.BQCodec import BqConfig, noise_variance
from ..const import DEFAULT_NOISE_PROB, GAUSSIAN_FORM_CONSTANT, PLAN_EPSILON_TOLERANCE
from ..exceptions import InvalidInputException
from ..privacy.PrivacyAccountant import (
    ClientDataProfile,
    PrivacySpec,
    min_bits_for_privacy,
    per_round_privacy,
)
from ..wire.WireFrame import code_width

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class Plan:
    """Integer (s, m) chosen for a bit budget and privacy requirement, with what it achieves."""

    s: int
    m: int
    privacy_ratio: float
    bit_budget: int
    bits_per_coord: int
    achieved_epsilon: Optional[float]
    achieved_variance: Optional[float]
    feasible: bool
    min_bits: float
    continuous_s: float
    continuous_m: float
    spec: PrivacySpec
    diagnosis: str = ""

    @property
    def alphabet_size(self) -> int:
        return 2 * self.s + self.m + 1

    def to_config(self, clip_bound: float) -> BqConfig:
        return BqConfig(
            clip_bound=clip_bound,
            quant_level=self.s,
            noise_trials=self.m,
            noise_prob=DEFAULT_NOISE_PROB,
        )

    def deviation(self, reference_s: int, reference_m: int) -> Tuple[int, int]:
        return self.s - reference_s, self.m - reference_m


def privacy_ratio(profile: ClientDataProfile, spec: PrivacySpec) -> float:
    """R = delta eps |D|^2 / (6.4 d L)."""
    return (
        spec.delta_target
        * spec.epsilon_target
        * profile.dataset_size**2
        / (GAUSSIAN_FORM_CONSTANT * profile.privacy_dimension * profile.batch_size)
    )


def continuous_solution(ratio: float, bit_budget: int) -> Tuple[float, float]:
    """Real-valued (s*, m*) minimizing V under 2s + m + 1 = 2^b and the privacy constraint."""
    levels = 2.0**bit_budget - 1.0
    root = math.sqrt(ratio**2 + levels)
    s_star = ratio * root - ratio**2
    m_star = levels + 2.0 * ratio**2 - 2.0 * ratio * root
    return s_star, m_star


def continuous_variance(ratio: float, s: float) -> float:
    return 1.0 / (4.0 * ratio**2) + 1.0 / (6.0 * s**2)


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def solve(profile: ClientDataProfile, spec: PrivacySpec, bit_budget: int) -> Plan:
    if int(bit_budget) != bit_budget or bit_budget < 1:
        raise InvalidInputException(f"bit_budget must be a positive integer, got {bit_budget}")

    ratio = privacy_ratio(profile, spec)
    min_bits = min_bits_for_privacy(profile, spec)
    s_star, m_star = continuous_solution(ratio, bit_budget)

    if bit_budget < min_bits:
        diagnosis = (
            f"bit budget {bit_budget} below the minimum {min_bits:.3f} bits "
            f"(needs at least {math.ceil(min_bits)})"
        )
        _LOGGER.warning("Infeasible plan: " + diagnosis)
        return Plan(
            s=1,
            m=0,
            privacy_ratio=ratio,
            bit_budget=bit_budget,
            bits_per_coord=code_width(3),
            achieved_epsilon=None,
            achieved_variance=None,
            feasible=False,
            min_bits=min_bits,
            continuous_s=s_star,
            continuous_m=m_star,
            spec=spec,
            diagnosis=diagnosis,
        )

    s = _round_half_up(s_star)
    if s < 1:
        _LOGGER.warning(f"Quantization level s*={s_star:.4f} rounds to 0, clamping to 1")
        s = 1
    m = max(0, int(math.floor(m_star)))

    capacity = 2**bit_budget
    while 2 * s + m + 1 > capacity and m > 0:
        m -= 1
    while 2 * s + m + 1 > capacity and s > 1:
        s -= 1

    fits = 2 * s + m + 1 <= capacity
    feasible = fits and m >= 1
    diagnosis = ""
    if not fits:
        diagnosis = f"alphabet 2s+m+1={2 * s + m + 1} exceeds 2^{bit_budget}"
    elif m < 1:
        diagnosis = "no binomial noise fits the budget (m = 0 gives no privacy)"

    config = BqConfig(clip_bound=1.0, quant_level=s, noise_trials=m)
    achieved_epsilon = (
        per_round_privacy(config, profile, spec.delta_target) if m >= 1 else None
    )

    if achieved_epsilon is not None and achieved_epsilon > spec.epsilon_target * (
        1.0 + PLAN_EPSILON_TOLERANCE
    ):
        _LOGGER.warning(
            f"Plan s={s} m={m} achieves epsilon {achieved_epsilon:.4f}, above the "
            f"target {spec.epsilon_target}"
        )
    if diagnosis:
        _LOGGER.warning("Infeasible plan: " + diagnosis)

    _LOGGER.debug(
        f"Plan b={bit_budget} R={ratio:.6f}: s*={s_star:.4f} m*={m_star:.4f} -> s={s} m={m}"
    )

    return Plan(
        s=s,
        m=m,
        privacy_ratio=ratio,
        bit_budget=bit_budget,
        bits_per_coord=code_width(2 * s + m + 1),
        achieved_epsilon=achieved_epsilon,
        achieved_variance=noise_variance(config),
        feasible=feasible,
        min_bits=min_bits,
        continuous_s=s_star,
        continuous_m=m_star,
        spec=spec,
        diagnosis=diagnosis,
    )


def variance_of_plan(plan: Plan) -> float:
    """V(m, 1/2, s) of the rounded plan."""
    if not plan.feasible:
        raise InvalidInputException(
            f"Variance requested for an infeasible plan: {plan.diagnosis}"
        )
    return noise_variance(plan.to_config(clip_bound=1.0))


def solve_grid(
    profile: ClientDataProfile,
    bit_budgets: Iterable[int],
    epsilon_targets: Iterable[float],
    delta_target: float,
) -> List[Plan]:
    """Plans for every (b, eps) pair, bit budgets varying slowest."""
    epsilon_targets = list(epsilon_targets)
    return [
        solve(profile, PrivacySpec(epsilon, delta_target), bit_budget)
        for bit_budget in bit_budgets
        for epsilon in epsilon_targets
    ]
