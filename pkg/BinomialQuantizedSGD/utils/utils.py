import csv
import logging
import os
from typing import Any, Iterable, List, Optional, Sequence, TypeVar

import numpy as np

from ..const import CSV_SCHEMA_VERSION, ENV_THREADS

T = TypeVar("T")


_LOGGER = logging.getLogger(__name__)


def get_dict_value_or_none(dictionary, key) -> Any:
    if dictionary is None or key not in dictionary:
        return None
    return dictionary[key]


def get_dict_value_or_default(dictionary, key, default: T) -> T:
    if dictionary is None or key not in dictionary:
        return default
    return dictionary[key]


def random_stream(
    master_seed: int, client_id: int, round_index: int, purpose: int
) -> np.random.Generator:
    """
    Deterministic random stream keyed by (seed, client, round, purpose).

    Callers draw per-coordinate values in coordinate order, so the value used
    for coordinate j depends only on the key and j, never on scheduling.
    """
    sequence = np.random.SeedSequence(
        entropy=int(master_seed) & (2**64 - 1),
        spawn_key=(int(client_id), int(round_index), int(purpose)),
    )
    return np.random.Generator(np.random.PCG64(sequence))


def worker_count(default: int = 1) -> int:
    value = os.environ.get(ENV_THREADS)
    if value is None:
        return default

    try:
        count = int(value)
    except ValueError:
        _LOGGER.warning(f"Ignoring non-integer {ENV_THREADS}={value}")
        return default

    return max(1, count)


def format_float(value: Optional[float]) -> str:
    if value is None:
        return ""
    return repr(float(value))


def write_csv(
    path: str, columns: Sequence[str], rows: Iterable[Sequence[Any]]
) -> None:
    """Write a versioned CSV: a schema comment line, the header, then rows."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)

    with open(path, "w", newline="") as f:
        f.write(f"# {CSV_SCHEMA_VERSION}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(
                [format_float(v) if isinstance(v, float) else v for v in row]
            )


def read_csv(path: str) -> List[dict]:
    with open(path, "r", newline="") as f:
        lines = [line for line in f if not line.startswith("#")]

    return list(csv.DictReader(lines))
