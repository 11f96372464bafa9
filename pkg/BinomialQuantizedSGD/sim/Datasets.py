import gzip
import logging
import os
import struct
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import requests
from requests.adapters import HTTPAdapter, Retry

from ..const import (
    IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC,
    OBJECTIVE_LOGISTIC,
    OBJECTIVE_QUADRATIC,
    STREAM_PARTITION,
)
from ..exceptions import (
    InvalidConfigException,
    InvalidInputException,
    NetworkException,
    UnsupportedFormatException,
)
from ..utils.utils import random_stream
from .Objectives import LogisticObjective, Objective, QuadraticObjective

_LOGGER = logging.getLogger(__name__)


@dataclass(eq=False)
class Dataset:
    """Feature rows (n, p) and, for classification, integer labels (n,)."""

    features: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise InvalidInputException(
                f"Dataset features must be (n, p), got shape {self.features.shape}"
            )
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape != (self.features.shape[0],):
                raise InvalidInputException(
                    f"Label count {self.labels.shape} does not match {self.features.shape[0]} rows"
                )

    @property
    def size(self) -> int:
        return int(self.features.shape[0])

    def __len__(self) -> int:
        return self.size

    def subset(self, indices: np.ndarray) -> "Dataset":
        labels = None if self.labels is None else self.labels[indices]
        return Dataset(self.features[indices], labels)


@dataclass(frozen=True)
class SyntheticTask:
    """What generate_synthetic knows analytically about the data it drew."""

    kind: str
    # population minimizer (quadratic) or separating direction (logistic)
    reference_point: np.ndarray
    # population per-sample gradient variance, quadratic only
    gradient_variance: Optional[float] = None
    margin: Optional[float] = None


def partition_data(dataset: Dataset, clients: int, seed: int) -> List[Dataset]:
    """
    Shuffle then deal samples round-robin: disjoint, exhaustive, sizes differ by at most one.
    """
    if clients < 1:
        raise InvalidConfigException(f"Number of clients must be >= 1, got {clients}")
    if clients > dataset.size:
        raise InvalidConfigException(
            f"Cannot split {dataset.size} samples across {clients} clients"
        )

    rng = random_stream(seed, 0, 0, STREAM_PARTITION)
    order = rng.permutation(dataset.size)
    return [dataset.subset(order[i::clients]) for i in range(clients)]


def generate_synthetic(
    task: str,
    dimension: int,
    samples: int,
    seed: int,
    spread: float = 1.0,
    margin: float = 2.0,
) -> Tuple[Objective, Dataset, SyntheticTask]:
    """
    Draw a desk-scale task.

    quadratic: centers c = mu + spread * z, z ~ N(0, I); the population
    optimum is mu and the per-sample gradient variance is d * spread^2.
    logistic: two Gaussian blobs separated along e_1 with every point at
    distance >= margin / 2 from the hyperplane x_1 = 0.
    """
    if dimension < 1 or samples < 1:
        raise InvalidInputException(
            f"Synthetic tasks need d >= 1 and n >= 1, got d={dimension}, n={samples}"
        )

    rng = random_stream(seed, 0, 0, STREAM_PARTITION + 1)

    if task == OBJECTIVE_QUADRATIC:
        mean = rng.uniform(-1.0, 1.0, size=dimension)
        centers = mean[None, :] + spread * rng.standard_normal((samples, dimension))
        return (
            QuadraticObjective(dimension),
            Dataset(centers),
            SyntheticTask(
                kind=task,
                reference_point=mean,
                gradient_variance=dimension * spread**2,
            ),
        )

    if task == OBJECTIVE_LOGISTIC:
        labels = rng.integers(0, 2, size=samples)
        signed = 2.0 * labels - 1.0
        features = spread * rng.standard_normal((samples, dimension))
        features[:, 0] = signed * (margin / 2.0 + np.abs(features[:, 0]))
        direction = np.zeros(dimension)
        direction[0] = 1.0
        return (
            LogisticObjective.for_features(features),
            Dataset(features, labels),
            SyntheticTask(kind=task, reference_point=direction, margin=margin),
        )

    raise InvalidInputException(f"Unknown synthetic task {task!r}")


def _open_idx(path: str):
    if path.endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_idx(path: str, expected_magic: int) -> np.ndarray:
    with _open_idx(path) as f:
        data = f.read()

    if len(data) < 4:
        raise UnsupportedFormatException(f"{path}: file too short for an IDX header")

    magic = struct.unpack(">I", data[:4])[0]
    if magic != expected_magic:
        raise UnsupportedFormatException(
            f"{path}: bad IDX magic {magic}, expected {expected_magic}"
        )

    ndim = data[3]
    header_size = 4 + 4 * ndim
    if len(data) < header_size:
        raise UnsupportedFormatException(f"{path}: truncated IDX dimensions")

    dims = struct.unpack(">" + "I" * ndim, data[4:header_size])
    count = int(np.prod(dims)) if dims else 0
    if len(data) - header_size != count:
        raise UnsupportedFormatException(
            f"{path}: IDX dims {dims} need {count} bytes, found {len(data) - header_size}"
        )

    return np.frombuffer(data, dtype=np.uint8, offset=header_size).reshape(dims)


def load_idx_dataset(images_path: str, labels_path: str) -> Dataset:
    """Unsigned-byte IDX images scaled to [0, 1], one flattened row per image."""
    images = _read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC)

    if images.shape[0] != labels.shape[0]:
        raise UnsupportedFormatException(
            f"{images.shape[0]} images but {labels.shape[0]} labels"
        )

    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    _LOGGER.info(f"Loaded {features.shape[0]} IDX images of {features.shape[1]} pixels")
    return Dataset(features, labels.astype(np.int64))


def two_class_subset(dataset: Dataset, negative: int, positive: int) -> Dataset:
    """Rows labelled negative or positive, relabelled 0 / 1 for the logistic loss."""
    if dataset.labels is None:
        raise InvalidInputException("Two-class subset needs a labelled dataset")

    keep = np.flatnonzero((dataset.labels == negative) | (dataset.labels == positive))
    if keep.size == 0:
        raise InvalidConfigException(f"No samples with labels {negative} or {positive}")

    subset = dataset.subset(keep)
    return Dataset(subset.features, (subset.labels == positive).astype(np.int64))


def _download_session() -> requests.Session:
    session = requests.Session()
    retry = Retry(total=5, backoff_factor=0.1, status_forcelist=[500, 502, 503, 504])
    adapter = HTTPAdapter(max_retries=retry)
    session.mount("https://", adapter)
    session.mount("http://", adapter)
    return session


def fetch_idx_dataset(
    base_url: str,
    file_names: Sequence[str],
    destination: str,
    session: Optional[requests.Session] = None,
) -> List[str]:
    """Download IDX files that are not already under destination; returns local paths."""
    os.makedirs(destination, exist_ok=True)
    session = session or _download_session()

    paths = []
    for file_name in file_names:
        path = os.path.join(destination, file_name)
        paths.append(path)
        if os.path.exists(path):
            _LOGGER.debug(f"Using cached {path}")
            continue

        url = base_url + file_name
        _LOGGER.info(f"Downloading {url}")
        try:
            response = session.get(url, timeout=60)
        except requests.RequestException as e:
            _LOGGER.error(f"Error downloading {url}: {e}")
            raise NetworkException(f"Error downloading {url}: {e}") from e

        if response.status_code != 200:
            error_text = (
                "Dataset download failed. Status: "
                + str(response.status_code)
                + ", URL: "
                + url
            )
            _LOGGER.error(error_text)
            raise NetworkException(error_text, response.status_code)

        with open(path, "wb") as f:
            f.write(response.content)

    return paths
