import gzip
import struct
from typing import Sequence, Tuple

import numpy as np
from scipy import stats

# Monte Carlo checks compare many coordinates or bins at once
MC_SIGMAS = 4.0
ALPHA = 0.001


def monte_carlo_tolerance(std: float, count: int, sigmas: float = MC_SIGMAS) -> float:
    return sigmas * std / np.sqrt(count)


def chi_square_p_value(observed: np.ndarray, probabilities: np.ndarray) -> float:
    observed = np.asarray(observed, dtype=np.float64)
    probabilities = np.asarray(probabilities, dtype=np.float64)
    expected = probabilities / probabilities.sum() * observed.sum()
    _, p_value = stats.chisquare(observed, expected)
    return float(p_value)


def write_idx(path: str, array: np.ndarray, magic: int) -> None:
    """Unsigned-byte IDX file, gzip'd when the path ends in .gz."""
    array = np.asarray(array, dtype=np.uint8)
    header = struct.pack(">I", magic) + struct.pack(">" + "I" * array.ndim, *array.shape)
    data = header + array.tobytes()

    if path.endswith(".gz"):
        with gzip.open(path, "wb") as f:
            f.write(data)
    else:
        with open(path, "wb") as f:
            f.write(data)


def mean_and_standard_error(values: Sequence[float]) -> Tuple[float, float]:
    values = np.asarray(values, dtype=np.float64)
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(values.size))
