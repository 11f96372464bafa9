import numpy as np
import pytest
from scipy import integrate
from scipy.stats import binom

from ..codec import (
    BqConfig,
    QuantizedMessage,
    add_binomial_noise,
    binomial_pmf,
    clip_batch_average,
    clip_per_sample,
    decode,
    encode,
    noise_pdf,
    noise_variance,
    sample_binomial,
    sample_noise,
    signed_levels,
    uniform_quantization_variance,
    uniform_quantize,
)
from ..const import STREAM_NOISE, STREAM_QUANTIZE
from ..exceptions import CorruptMessageException, InvalidInputException
from ..utils.utils import random_stream
from .utils import ALPHA, chi_square_p_value, monte_carlo_tolerance

GRADIENT = np.array([-0.9, -0.3, 0.05, 0.6, 0.99])


def _stream(purpose: int = STREAM_QUANTIZE, seed: int = 2024) -> np.random.Generator:
    return random_stream(seed, 0, 0, purpose)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"clip_bound": 0.0, "quant_level": 1, "noise_trials": 1},
        {"clip_bound": float("inf"), "quant_level": 1, "noise_trials": 1},
        {"clip_bound": 1.0, "quant_level": 0, "noise_trials": 1},
        {"clip_bound": 1.0, "quant_level": 1.5, "noise_trials": 1},
        {"clip_bound": 1.0, "quant_level": 1, "noise_trials": -1},
        {"clip_bound": 1.0, "quant_level": 1, "noise_trials": 1, "noise_prob": 1.0},
    ],
)
def test_config_rejects_invalid_parameters(kwargs):
    with pytest.raises(InvalidInputException):
        BqConfig(**kwargs)


def test_alphabet_of_eight_bit_plan():
    config = BqConfig(clip_bound=1.0, quant_level=2, noise_trials=251)

    assert config.alphabet_size == 256
    assert config.min_code == -2
    assert config.max_code == 253
    assert config.offset == pytest.approx(125.5)


def test_clip_per_sample_bounds_and_keeps_direction():
    grad = np.array([3.0, -6.0, 1.5])
    clipped = clip_per_sample(grad, 2.0)

    assert np.max(np.abs(clipped)) == pytest.approx(2.0)
    np.testing.assert_allclose(clipped, grad / 3.0)

    inside = np.array([0.5, -1.0])
    np.testing.assert_array_equal(clip_per_sample(inside, 2.0), inside)


def test_clip_batch_average_stays_within_bound():
    rng = _stream()
    batch = 10.0 * rng.standard_normal((64, 7))
    averaged = clip_batch_average(batch, 1.5)

    assert averaged.shape == (7,)
    assert np.max(np.abs(averaged)) <= 1.5 + 1e-12


def test_non_finite_gradient_is_rejected():
    with pytest.raises(InvalidInputException):
        clip_per_sample(np.array([1.0, np.nan]), 1.0)

    with pytest.raises(InvalidInputException):
        clip_batch_average(np.array([[1.0, np.inf]]), 1.0)

    with pytest.raises(InvalidInputException):
        clip_batch_average(np.zeros((0, 3)), 1.0)


def test_quantize_is_exact_on_grid_points():
    config = BqConfig(clip_bound=2.0, quant_level=4, noise_trials=0)
    grad = np.array([-2.0, -1.5, 0.0, 0.5, 2.0])

    signs, levels = uniform_quantize(grad, config, _stream())

    np.testing.assert_array_equal(levels, [4, 3, 0, 1, 4])
    np.testing.assert_array_equal(signs, [-1, -1, 1, 1, 1])

    message = add_binomial_noise(signed_levels(signs, levels), config, _stream(STREAM_NOISE))
    np.testing.assert_allclose(decode(message), grad)


def test_quantize_rejects_unclipped_gradient():
    config = BqConfig(clip_bound=1.0, quant_level=2, noise_trials=0)

    with pytest.raises(InvalidInputException):
        uniform_quantize(np.array([0.5, 1.5]), config, _stream())


def test_quantize_is_unbiased_with_exact_variance():
    config = BqConfig(clip_bound=1.0, quant_level=4, noise_trials=0)
    repeats = 200_000

    signs, levels = uniform_quantize(np.tile(GRADIENT, repeats), config, _stream())
    values = (config.clip_bound / config.quant_level) * signed_levels(signs, levels)
    values = values.reshape(repeats, GRADIENT.size).astype(np.float64)

    expected_variance = uniform_quantization_variance(GRADIENT, config)
    tolerance = monte_carlo_tolerance(np.sqrt(expected_variance), repeats)

    assert np.all(
        np.abs(values.mean(axis=0) - GRADIENT) <= tolerance
    ), f"Quantized mean - expected: {GRADIENT}, got: {values.mean(axis=0)}"

    np.testing.assert_allclose(values.var(axis=0), expected_variance, rtol=0.05)


def test_codes_stay_in_alphabet():
    config = BqConfig(clip_bound=1.0, quant_level=3, noise_trials=10)
    grad = _stream().uniform(-1.0, 1.0, size=10_000)

    message = encode(grad, config, _stream(STREAM_NOISE))

    assert message.codes.min() >= config.min_code
    assert message.codes.max() <= config.max_code
    message.validate()


def test_decode_is_unbiased_with_binomial_noise():
    config = BqConfig(clip_bound=1.0, quant_level=2, noise_trials=251)
    repeats = 40_000

    message = encode(np.tile(GRADIENT, repeats), config, _stream())
    decoded = decode(message).reshape(repeats, GRADIENT.size)

    q = config.noise_prob
    expected_variance = (config.clip_bound / config.quant_level) ** 2 * (
        config.noise_trials * q * (1 - q)
    ) + uniform_quantization_variance(GRADIENT, config)
    tolerance = monte_carlo_tolerance(np.sqrt(expected_variance), repeats)

    assert np.all(
        np.abs(decoded.mean(axis=0) - GRADIENT) <= tolerance
    ), f"Decoded mean - expected: {GRADIENT}, got: {decoded.mean(axis=0)}"

    np.testing.assert_allclose(decoded.var(axis=0), expected_variance, rtol=0.05)


def test_decode_rejects_codes_outside_alphabet():
    config = BqConfig(clip_bound=1.0, quant_level=2, noise_trials=251)

    with pytest.raises(CorruptMessageException):
        decode(QuantizedMessage(codes=[0, 254], config=config))

    with pytest.raises(CorruptMessageException):
        decode(QuantizedMessage(codes=[-3], config=config))


def test_add_binomial_noise_rejects_levels_above_s():
    config = BqConfig(clip_bound=1.0, quant_level=2, noise_trials=4)

    with pytest.raises(InvalidInputException):
        add_binomial_noise(np.array([1, -3]), config, _stream())


def test_encode_is_deterministic_per_stream():
    config = BqConfig(clip_bound=1.0, quant_level=3, noise_trials=40)
    grad = _stream(seed=5).uniform(-1.0, 1.0, size=1000)

    first = encode(grad, config, random_stream(11, 3, 7, STREAM_QUANTIZE))
    second = encode(grad, config, random_stream(11, 3, 7, STREAM_QUANTIZE))
    other_round = encode(grad, config, random_stream(11, 3, 8, STREAM_QUANTIZE))

    assert first == second
    assert first != other_round


@pytest.mark.parametrize(
    "config,expected",
    [
        (BqConfig(clip_bound=1.0, quant_level=2, noise_trials=251), 251 / 16 + 1 / 24),
        (BqConfig(clip_bound=1.0, quant_level=13, noise_trials=997), 997 / 676 + 1 / 1014),
        (BqConfig(clip_bound=1.0, quant_level=1, noise_trials=0), 1 / 6),
    ],
)
def test_noise_variance_closed_form(config, expected):
    assert noise_variance(config) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize(
    "config",
    [
        BqConfig(clip_bound=1.0, quant_level=2, noise_trials=251),
        BqConfig(clip_bound=1.0, quant_level=13, noise_trials=997),
        BqConfig(clip_bound=0.5, quant_level=1, noise_trials=2),
    ],
)
def test_sample_noise_variance_matches_closed_form(config):
    draws = sample_noise(config, 1_000_000, _stream(STREAM_NOISE))
    expected = config.clip_bound**2 * noise_variance(config)

    assert np.var(draws) == pytest.approx(
        expected, rel=0.02
    ), f"Noise variance - expected: {expected}, got: {np.var(draws)}"
    assert abs(np.mean(draws)) <= monte_carlo_tolerance(np.sqrt(expected), draws.size)


@pytest.mark.parametrize(
    "config",
    [
        BqConfig(clip_bound=1.0, quant_level=1, noise_trials=2),
        BqConfig(clip_bound=2.0, quant_level=3, noise_trials=15),
        BqConfig(clip_bound=1.0, quant_level=2, noise_trials=7, noise_prob=0.3),
        BqConfig(clip_bound=1.0, quant_level=4, noise_trials=0),
    ],
)
def test_noise_pdf_moments(config):
    stats = noise_pdf(config)

    assert stats.moment(0) == pytest.approx(1.0, abs=1e-12)
    assert stats.moment(1) == pytest.approx(0.0, abs=1e-10)
    assert stats.moment(2) == pytest.approx(stats.variance_per_coord, rel=1e-9)
    assert stats.variance_per_coord == pytest.approx(
        config.clip_bound**2 * noise_variance(config), rel=1e-12
    )

    low, high = stats.support
    assert np.all(stats.density(np.linspace(low, high, 1001)) >= 0)
    assert stats.density(high + 1e-9) == 0


def test_noise_pdf_integrates_to_one_numerically():
    stats = noise_pdf(BqConfig(clip_bound=1.0, quant_level=2, noise_trials=9))
    low, high = stats.support

    total, _ = integrate.quad(
        lambda r: float(stats.density(r)), low, high, points=stats.lower[1:], limit=200
    )
    assert total == pytest.approx(1.0, abs=1e-8)


def test_noise_pdf_is_symmetric_for_half_probability():
    stats = noise_pdf(BqConfig(clip_bound=1.0, quant_level=3, noise_trials=6))
    low, high = stats.support
    grid = np.linspace(low, high, 777)

    np.testing.assert_allclose(stats.density(grid), stats.density(-grid), atol=1e-12)


def test_noise_histogram_matches_density():
    config = BqConfig(clip_bound=1.0, quant_level=1, noise_trials=2)
    stats = noise_pdf(config)
    low, high = stats.support

    draws = sample_noise(config, 100_000, _stream(STREAM_NOISE, seed=99))
    edges = np.linspace(low, high, 21)
    observed, _ = np.histogram(draws, bins=edges)

    p_value = chi_square_p_value(observed, stats.bin_probabilities(edges))
    assert p_value > ALPHA, f"Chi-square p-value - expected: > {ALPHA}, got: {p_value}"


@pytest.mark.parametrize("m", [20, 500])
def test_sample_binomial_moments(m):
    q = 0.5
    draws = sample_binomial(m, q, 100_000, _stream(STREAM_NOISE))

    assert draws.min() >= 0 and draws.max() <= m
    assert abs(draws.mean() - m * q) <= monte_carlo_tolerance(
        np.sqrt(m * q * (1 - q)), draws.size
    )
    assert draws.var() == pytest.approx(m * q * (1 - q), rel=0.03)


def test_sample_binomial_without_trials_is_zero():
    np.testing.assert_array_equal(sample_binomial(0, 0.5, 5, _stream()), np.zeros(5))


def test_binomial_pmf_is_stable_for_large_m():
    pmf = binomial_pmf(10**6, 0.5)

    assert np.all(np.isfinite(pmf))
    assert pmf.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.argmax(pmf) == 500_000


def test_add_binomial_noise_counts_follow_binomial_law():
    config = BqConfig(clip_bound=1.0, quant_level=2, noise_trials=4)
    message = add_binomial_noise(np.zeros(50_000, dtype=np.int64), config, _stream(STREAM_NOISE))

    observed = np.bincount(message.codes, minlength=5)
    assert observed.size == 5

    p_value = chi_square_p_value(observed, binom.pmf(np.arange(5), 4, 0.5))
    assert p_value > ALPHA, f"Chi-square p-value - expected: > {ALPHA}, got: {p_value}"


def test_quantize_splits_between_neighbouring_levels():
    config = BqConfig(clip_bound=1.0, quant_level=10, noise_trials=0)
    count = 200_000
    _, levels = uniform_quantize(np.full(count, 0.23), config, _stream())

    assert set(np.unique(levels)) == {2, 3}

    upper_share = float(np.mean(levels == 3))
    assert abs(upper_share - 0.3) <= monte_carlo_tolerance(np.sqrt(0.21), count)

    mean = float(np.mean(levels)) / 10
    assert abs(mean - 0.23) <= monte_carlo_tolerance(np.sqrt(0.21) / 10, count)


def test_noise_pdf_without_trials_is_triangular():
    density = noise_pdf(BqConfig(clip_bound=1.0, quant_level=1, noise_trials=0))
    grid = np.linspace(-1.0, 1.0, 401)

    assert density.support == (-1.0, 1.0)
    np.testing.assert_allclose(density.density(grid), 1.0 - np.abs(grid), rtol=0, atol=1e-15)


def _clip_batch_average_by_hand(batch, clip_bound):
    total = [0.0] * len(batch[0])
    for row in batch:
        scale = max(1.0, max(abs(value) for value in row) / clip_bound)
        for j, value in enumerate(row):
            total[j] += value / scale
    return [value / len(batch) for value in total]


@pytest.mark.parametrize(
    "batch,clip_bound",
    [
        ([[2.0, 0.0], [0.0, 2.0]], 1.0),
        ([[0.5, -0.25, 0.1]], 1.0),
        ([[3.0, -6.0, 1.5], [0.2, 0.2, -0.2], [-9.0, 1.0, 0.0]], 2.0),
        ([[1e-3, -4.0], [7.0, 7.0], [-0.5, 0.25], [0.0, 0.0]], 0.5),
    ],
)
def test_clip_batch_average_matches_row_by_row_clipping(batch, clip_bound):
    np.testing.assert_allclose(
        clip_batch_average(batch, clip_bound),
        _clip_batch_average_by_hand(batch, clip_bound),
        rtol=1e-12,
        atol=1e-15,
    )


def test_clip_batch_average_of_two_axis_gradients():
    np.testing.assert_allclose(clip_batch_average([[2.0, 0.0], [0.0, 2.0]], 1.0), [0.5, 0.5])


@pytest.mark.parametrize("quant_level", [1, 2, 10])
@pytest.mark.parametrize("noise_trials", [0, 1, 2, 8])
def test_noise_law_matches_density_and_variance(quant_level, noise_trials):
    config = BqConfig(clip_bound=1.0, quant_level=quant_level, noise_trials=noise_trials)
    density = noise_pdf(config)
    low, high = density.support

    draws = sample_noise(
        config, 400_000, _stream(STREAM_NOISE, seed=100 * quant_level + noise_trials)
    )
    assert draws.min() >= low - 1e-12 and draws.max() <= high + 1e-12

    edges = np.linspace(low, high, 21)
    observed, _ = np.histogram(draws, bins=edges)
    p_value = chi_square_p_value(observed, density.bin_probabilities(edges))
    assert p_value > ALPHA, f"Chi-square p-value - expected: > {ALPHA}, got: {p_value}"

    expected = noise_variance(config) * config.clip_bound**2
    assert np.var(draws) == pytest.approx(
        expected, rel=0.02
    ), f"Noise variance - expected: {expected}, got: {np.var(draws)}"
