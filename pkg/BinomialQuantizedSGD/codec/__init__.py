"""BQ gradient codec"""
from .Binomial import binomial_log_pmf, binomial_pmf, sample_binomial
from .BQCodec import (
    BqConfig,
    GradientVector,
    NoiseStats,
    QuantizedMessage,
    add_binomial_noise,
    as_gradient,
    clip_batch_average,
    clip_per_sample,
    decode,
    encode,
    noise_pdf,
    noise_variance,
    sample_noise,
    signed_levels,
    uniform_quantization_variance,
    uniform_quantize,
)
