import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, List, Optional, Tuple

from ..const import (
    DATASET_SOURCES,
    DEFAULT_GRID_SEEDS,
    DEFAULT_NOISE_BINS,
    DEFAULT_NOISE_PROB,
    DEFAULT_NOISE_SAMPLES,
    DEFAULT_PROBE_INTERVAL,
    OBJECTIVE_IDX,
    OBJECTIVE_LOGISTIC,
    OBJECTIVE_QUADRATIC,
)
from ..exceptions import InvalidConfigException
from ..utils.utils import get_dict_value_or_default, get_dict_value_or_none

_LOGGER = logging.getLogger(__name__)

_OBJECTIVE_KINDS = (OBJECTIVE_QUADRATIC, OBJECTIVE_LOGISTIC, OBJECTIVE_IDX)
_WEIGHT_TOLERANCE = 1e-9
_MAX_SEED = 2**64 - 1


def _missing(path: str) -> InvalidConfigException:
    return InvalidConfigException(f"Missing required field {path}")


def _section(data: Any, path: str) -> dict:
    if not isinstance(data, dict):
        raise InvalidConfigException(f"{path} must be an object")
    return data


def _required(data: dict, key: str, path: str) -> Any:
    value = get_dict_value_or_none(data, key)
    if value is None:
        raise _missing(f"{path}.{key}")
    return value


def _integer(value: Any, path: str, minimum: Optional[int] = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvalidConfigException(f"{path} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise InvalidConfigException(f"{path} must be >= {minimum}, got {value}")
    return value


def _real(
    value: Any,
    path: str,
    positive: bool = False,
    non_negative: bool = False,
    below_one: bool = False,
) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidConfigException(f"{path} must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise InvalidConfigException(f"{path} must be finite, got {value}")
    if positive and value <= 0:
        raise InvalidConfigException(f"{path} must be positive, got {value}")
    if non_negative and value < 0:
        raise InvalidConfigException(f"{path} must be >= 0, got {value}")
    if below_one and value >= 1:
        raise InvalidConfigException(f"{path} must be < 1, got {value}")
    return value


@dataclass(frozen=True)
class ObjectiveSpec:
    kind: str
    dimension: Optional[int] = None
    samples: Optional[int] = None
    seed: int = 0
    spread: float = 1.0
    margin: float = 2.0
    # idx only
    images: Optional[str] = None
    labels: Optional[str] = None
    classes: Optional[Tuple[int, int]] = None
    source: Optional[str] = None
    data_dir: str = "data"


@dataclass(frozen=True)
class ClientSpec:
    batch_size: int
    bit_budget: int
    epsilon: float
    delta: float
    weight: Optional[float] = None
    privacy_dimension: Optional[float] = None
    levels: Optional[Tuple[int, int]] = None


@dataclass(frozen=True)
class TrainingSpec:
    learning_rate: float
    rounds: int
    clip_bound: float
    master_seed: int
    probe_interval: int = DEFAULT_PROBE_INTERVAL
    initial_scale: float = 0.0
    trace: bool = False


@dataclass(frozen=True)
class NoiseSpec:
    clip_bound: float = 1.0
    quant_level: int = 1
    noise_trials: int = 2
    noise_prob: float = DEFAULT_NOISE_PROB
    samples: int = DEFAULT_NOISE_SAMPLES
    bins: int = DEFAULT_NOISE_BINS


@dataclass(frozen=True)
class GridSpec:
    bit_budgets: Tuple[int, ...]
    epsilons: Tuple[float, ...]
    seeds: int = DEFAULT_GRID_SEEDS


@dataclass(frozen=True)
class ExperimentConfig:
    """
    A full experiment: objective and data, clients, training and output settings.

    Loaded from JSON; every field error names its path, e.g. clients[0].delta.
    """

    objective: ObjectiveSpec
    clients: Tuple[ClientSpec, ...]
    training: TrainingSpec
    out: str = "out"
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    grid: Optional[GridSpec] = None

    @property
    def weights(self) -> List[float]:
        count = len(self.clients)
        return [
            client.weight if client.weight is not None else 1.0 / count
            for client in self.clients
        ]

    def partition_sizes(self, samples: int) -> List[int]:
        """Round-robin partition sizes of samples over the clients."""
        count = len(self.clients)
        return [samples // count + (1 if i < samples % count else 0) for i in range(count)]

    def with_seed(self, seed: int) -> "ExperimentConfig":
        _integer(seed, "--seed", minimum=0)
        return replace(
            self,
            training=replace(self.training, master_seed=seed),
            objective=replace(self.objective, seed=seed),
        )

    def with_budgets(self, bit_budget: int, epsilon: float) -> "ExperimentConfig":
        clients = tuple(
            replace(client, bit_budget=bit_budget, epsilon=epsilon, levels=None)
            for client in self.clients
        )
        return replace(self, clients=clients)

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path, "r") as f:
                data = json.load(f)
        except OSError as e:
            raise InvalidConfigException(f"Cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise InvalidConfigException(f"Config {path} is not valid JSON: {e}") from e

        _LOGGER.debug(f"Loaded experiment config from {path}")
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: Any) -> "ExperimentConfig":
        data = _section(data, "config")

        objective = _parse_objective(_section(_required(data, "objective", "config"), "objective"))
        clients = _parse_clients(_required(data, "clients", "config"))
        training = _parse_training(_section(_required(data, "training", "config"), "training"))

        out = get_dict_value_or_default(data, "out", "out")
        if not isinstance(out, str) or not out:
            raise InvalidConfigException(f"out must be a non-empty string, got {out!r}")

        noise_data = get_dict_value_or_none(data, "noise")
        noise = NoiseSpec() if noise_data is None else _parse_noise(_section(noise_data, "noise"))

        grid_data = get_dict_value_or_none(data, "grid")
        grid = None if grid_data is None else _parse_grid(_section(grid_data, "grid"))

        config = cls(
            objective=objective,
            clients=clients,
            training=training,
            out=out,
            noise=noise,
            grid=grid,
        )
        _cross_check(config)
        return config


def _parse_objective(data: dict) -> ObjectiveSpec:
    kind = _required(data, "kind", "objective")
    if kind not in _OBJECTIVE_KINDS:
        raise InvalidConfigException(
            f"objective.kind must be one of {list(_OBJECTIVE_KINDS)}, got {kind!r}"
        )

    seed = _integer(get_dict_value_or_default(data, "seed", 0), "objective.seed", minimum=0)
    spread = _real(get_dict_value_or_default(data, "spread", 1.0), "objective.spread", non_negative=True)
    margin = _real(get_dict_value_or_default(data, "margin", 2.0), "objective.margin", non_negative=True)

    if kind != OBJECTIVE_IDX:
        return ObjectiveSpec(
            kind=kind,
            dimension=_integer(_required(data, "d", "objective"), "objective.d", minimum=1),
            samples=_integer(_required(data, "n", "objective"), "objective.n", minimum=1),
            seed=seed,
            spread=spread,
            margin=margin,
        )

    classes = _required(data, "classes", "objective")
    if not isinstance(classes, list) or len(classes) != 2:
        raise InvalidConfigException("objective.classes must list exactly two labels")
    classes = tuple(_integer(c, f"objective.classes[{i}]", minimum=0) for i, c in enumerate(classes))
    if classes[0] == classes[1]:
        raise InvalidConfigException("objective.classes must name two different labels")

    source = get_dict_value_or_none(data, "source")
    images = get_dict_value_or_none(data, "images")
    labels = get_dict_value_or_none(data, "labels")
    if source is None:
        if images is None:
            raise _missing("objective.images")
        if labels is None:
            raise _missing("objective.labels")
    elif source not in DATASET_SOURCES:
        raise InvalidConfigException(
            f"objective.source must be one of {sorted(DATASET_SOURCES)}, got {source!r}"
        )

    return ObjectiveSpec(
        kind=kind,
        seed=seed,
        images=images,
        labels=labels,
        classes=classes,
        source=source,
        data_dir=get_dict_value_or_default(data, "data_dir", "data"),
    )


def _parse_clients(data: Any) -> Tuple[ClientSpec, ...]:
    if not isinstance(data, list) or not data:
        raise InvalidConfigException("clients must be a non-empty list")

    clients = []
    for i, entry in enumerate(data):
        path = f"clients[{i}]"
        entry = _section(entry, path)

        weight = get_dict_value_or_none(entry, "weight")
        if weight is not None:
            weight = _real(weight, f"{path}.weight", positive=True)
            if weight > 1:
                raise InvalidConfigException(f"{path}.weight must lie in (0, 1], got {weight}")

        privacy_dimension = get_dict_value_or_none(entry, "privacy_dimension")
        if privacy_dimension is not None:
            privacy_dimension = _real(privacy_dimension, f"{path}.privacy_dimension", positive=True)

        levels = get_dict_value_or_none(entry, "levels")
        if levels is not None:
            if not isinstance(levels, list) or len(levels) != 2:
                raise InvalidConfigException(f"{path}.levels must be [s, m]")
            levels = (
                _integer(levels[0], f"{path}.levels[0]", minimum=1),
                _integer(levels[1], f"{path}.levels[1]", minimum=0),
            )

        clients.append(
            ClientSpec(
                batch_size=_integer(_required(entry, "batch_size", path), f"{path}.batch_size", minimum=1),
                bit_budget=_integer(_required(entry, "bit_budget", path), f"{path}.bit_budget", minimum=1),
                epsilon=_real(_required(entry, "epsilon", path), f"{path}.epsilon", positive=True),
                delta=_real(_required(entry, "delta", path), f"{path}.delta", positive=True, below_one=True),
                weight=weight,
                privacy_dimension=privacy_dimension,
                levels=levels,
            )
        )

    return tuple(clients)


def _parse_training(data: dict) -> TrainingSpec:
    return TrainingSpec(
        learning_rate=_real(
            _required(data, "learning_rate", "training"), "training.learning_rate", non_negative=True
        ),
        rounds=_integer(_required(data, "rounds", "training"), "training.rounds", minimum=1),
        clip_bound=_real(_required(data, "clip_bound", "training"), "training.clip_bound", positive=True),
        master_seed=_integer(
            _required(data, "master_seed", "training"), "training.master_seed", minimum=0
        ),
        probe_interval=_integer(
            get_dict_value_or_default(data, "probe_interval", DEFAULT_PROBE_INTERVAL),
            "training.probe_interval",
            minimum=1,
        ),
        initial_scale=_real(
            get_dict_value_or_default(data, "initial_scale", 0.0),
            "training.initial_scale",
            non_negative=True,
        ),
        trace=bool(get_dict_value_or_default(data, "trace", False)),
    )


def _parse_noise(data: dict) -> NoiseSpec:
    return NoiseSpec(
        clip_bound=_real(get_dict_value_or_default(data, "clip_bound", 1.0), "noise.clip_bound", positive=True),
        quant_level=_integer(get_dict_value_or_default(data, "s", 1), "noise.s", minimum=1),
        noise_trials=_integer(get_dict_value_or_default(data, "m", 2), "noise.m", minimum=0),
        noise_prob=_real(
            get_dict_value_or_default(data, "q", DEFAULT_NOISE_PROB), "noise.q", positive=True, below_one=True
        ),
        samples=_integer(
            get_dict_value_or_default(data, "samples", DEFAULT_NOISE_SAMPLES), "noise.samples", minimum=1
        ),
        bins=_integer(get_dict_value_or_default(data, "bins", DEFAULT_NOISE_BINS), "noise.bins", minimum=1),
    )


def _parse_grid(data: dict) -> GridSpec:
    bit_budgets = _required(data, "bit_budgets", "grid")
    epsilons = _required(data, "epsilons", "grid")
    if not isinstance(bit_budgets, list) or not bit_budgets:
        raise InvalidConfigException("grid.bit_budgets must be a non-empty list")
    if not isinstance(epsilons, list) or not epsilons:
        raise InvalidConfigException("grid.epsilons must be a non-empty list")

    return GridSpec(
        bit_budgets=tuple(
            _integer(b, f"grid.bit_budgets[{i}]", minimum=1) for i, b in enumerate(bit_budgets)
        ),
        epsilons=tuple(
            _real(e, f"grid.epsilons[{i}]", positive=True) for i, e in enumerate(epsilons)
        ),
        seeds=_integer(get_dict_value_or_default(data, "seeds", DEFAULT_GRID_SEEDS), "grid.seeds", minimum=1),
    )


def _cross_check(config: ExperimentConfig) -> None:
    given = [client.weight for client in config.clients]
    if any(weight is not None for weight in given):
        if any(weight is None for weight in given):
            raise InvalidConfigException("Either every client sets a weight or none does")
        total = sum(given)
        if abs(total - 1.0) > _WEIGHT_TOLERANCE:
            raise InvalidConfigException(f"clients[*].weight must sum to 1, got {total}")

    if config.training.master_seed > _MAX_SEED:
        raise InvalidConfigException("training.master_seed must fit in 64 bits")

    objective = config.objective
    if objective.samples is not None:
        sizes = config.partition_sizes(objective.samples)
        if min(sizes) < 1:
            raise InvalidConfigException(
                f"objective.n = {objective.samples} cannot be split across "
                f"{len(config.clients)} clients"
            )
        for i, (client, size) in enumerate(zip(config.clients, sizes)):
            if client.batch_size > size:
                raise InvalidConfigException(
                    f"clients[{i}].batch_size {client.batch_size} exceeds its partition of {size} samples"
                )
