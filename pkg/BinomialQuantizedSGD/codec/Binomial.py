"""Binomial mass, log-space evaluation and exact sampling"""
import numpy as np
from scipy.special import gammaln

from ..const import BERNOULLI_SUM_MAX_TRIALS

# rows of Bernoulli draws generated per chunk, keeps the (rows, m) matrix small
_BERNOULLI_CHUNK_CELLS = 2**22


def binomial_log_pmf(m: int, q: float) -> np.ndarray:
    """log P_k for k = 0..m, evaluated through log-gamma so m can reach 10^6."""
    k = np.arange(m + 1, dtype=np.float64)
    return (
        gammaln(m + 1.0)
        - gammaln(k + 1.0)
        - gammaln(m - k + 1.0)
        + k * np.log(q)
        + (m - k) * np.log1p(-q)
    )


def binomial_pmf(m: int, q: float) -> np.ndarray:
    return np.exp(binomial_log_pmf(m, q))


def sample_binomial(m: int, q: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """
    Draw `size` i.i.d. Bin(m, q) values, one per coordinate in index order.

    Small m sums m Bernoulli draws per coordinate; larger m inverts the exact
    CDF with one uniform per coordinate.
    """
    if m == 0 or size == 0:
        return np.zeros(size, dtype=np.int64)

    if m <= BERNOULLI_SUM_MAX_TRIALS:
        rows_per_chunk = max(1, _BERNOULLI_CHUNK_CELLS // m)
        out = np.empty(size, dtype=np.int64)
        for start in range(0, size, rows_per_chunk):
            stop = min(size, start + rows_per_chunk)
            trials = rng.random((stop - start, m))
            out[start:stop] = np.count_nonzero(trials < q, axis=1)
        return out

    cdf = np.cumsum(binomial_pmf(m, q))
    uniforms = rng.random(size)
    draws = np.searchsorted(cdf, uniforms, side="right")
    return np.minimum(draws, m).astype(np.int64)
