import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..codec.BQCodec import (
    BqConfig,
    QuantizedMessage,
    add_binomial_noise,
    clip_batch_average,
    decode,
    noise_variance,
    signed_levels,
    uniform_quantize,
)
from ..const import (
    DEFAULT_PROBE_INTERVAL,
    DIVERGENCE_FACTOR,
    METRICS_COLUMNS,
    STREAM_BATCH,
    STREAM_INIT,
    STREAM_NOISE,
    STREAM_QUANTIZE,
)
from ..exceptions import (
    DivergenceException,
    IncompleteRoundException,
    InvalidConfigException,
    InvalidInputException,
)
from ..planner.ParameterPlanner import Plan, solve
from ..privacy.PrivacyAccountant import (
    ClientDataProfile,
    PrivacyLedger,
    PrivacySpec,
    per_round_privacy,
)
from ..utils.utils import random_stream, worker_count, write_csv
from ..wire.WireFrame import code_width, decode_frame, encode_frame, header_size_bits, write_trace
from .Datasets import Dataset
from .Objectives import Objective

_LOGGER = logging.getLogger(__name__)

_WEIGHT_TOLERANCE = 1e-9


@dataclass
class ModelState:
    theta: np.ndarray
    round_index: int = 0

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(self.theta)):
            raise InvalidInputException("Model parameters have non-finite coordinates")


@dataclass
class ClientConfig:
    """
    One client of the simulation.

    plan is filled by solve_plan(); levels=(s, m) bypasses the planner, which
    is how unquantized or noise-free baselines are run.
    """

    client_id: int
    partition: Dataset
    weight: float
    batch_size: int
    bit_budget: int
    privacy: PrivacySpec
    privacy_dimension: Optional[float] = None
    plan: Optional[Plan] = None
    levels: Optional[Tuple[int, int]] = None

    def profile(self, dimension: int) -> ClientDataProfile:
        return ClientDataProfile(
            dataset_size=self.partition.size,
            batch_size=self.batch_size,
            privacy_dimension=self.privacy_dimension or dimension,
        )

    def solve_plan(self, dimension: int) -> Plan:
        self.plan = solve(self.profile(dimension), self.privacy, self.bit_budget)
        return self.plan

    def quantization_levels(self) -> Tuple[int, int]:
        if self.levels is not None:
            return int(self.levels[0]), int(self.levels[1])
        if self.plan is None:
            raise InvalidConfigException(f"Client {self.client_id} has no (s, m) plan")
        if not self.plan.feasible:
            raise InvalidConfigException(
                f"Client {self.client_id} plan is infeasible: {self.plan.diagnosis}"
            )
        return self.plan.s, self.plan.m

    def codec_config(self, clip_bound: float) -> BqConfig:
        s, m = self.quantization_levels()
        return BqConfig(clip_bound=clip_bound, quant_level=s, noise_trials=m)


@dataclass
class TrainingConfig:
    learning_rate: float
    rounds: int
    clip_bound: float
    master_seed: int
    probe_interval: int = DEFAULT_PROBE_INTERVAL
    initial_point: Optional[np.ndarray] = None
    # theta_0 ~ N(0, initial_scale^2 I) when no initial_point is given
    initial_scale: float = 0.0
    trace_dir: Optional[str] = None

    def __post_init__(self):
        if not self.learning_rate >= 0 or not math.isfinite(self.learning_rate):
            raise InvalidConfigException(
                f"learning_rate must be >= 0, got {self.learning_rate}"
            )
        if int(self.rounds) != self.rounds or self.rounds < 1:
            raise InvalidConfigException(f"rounds must be a positive integer, got {self.rounds}")
        if not self.clip_bound > 0 or not math.isfinite(self.clip_bound):
            raise InvalidConfigException(f"clip_bound must be positive, got {self.clip_bound}")
        if self.probe_interval < 1:
            raise InvalidConfigException(
                f"probe_interval must be >= 1, got {self.probe_interval}"
            )


@dataclass
class MetricsRow:
    """
    Measurements of round t (1-based) taken at theta_{t-1}, the point the
    round's gradients are computed at.
    """

    round_index: int
    train_loss: float
    grad_norm_sq: Optional[float]
    cumulative_bits: int
    eps_total: Optional[float]
    delta_total: Optional[float]
    agg_second_moment: Optional[float]
    accuracy: Optional[float] = None

    def to_csv_row(self) -> list:
        return [
            self.round_index,
            self.train_loss,
            self.grad_norm_sq,
            self.cumulative_bits,
            self.eps_total,
            self.delta_total,
            self.agg_second_moment,
            self.accuracy,
        ]


@dataclass
class LocalUpdate:
    message: QuantizedMessage
    clipped_gradient: np.ndarray
    batch: np.ndarray
    # mean ||grad l||_1 / C over the batch
    empirical_privacy_dimension: float = field(default=0.0)


def write_metrics_csv(path: str, rows: Sequence[MetricsRow]) -> None:
    write_csv(path, METRICS_COLUMNS, [row.to_csv_row() for row in rows])


def check_clients(clients: Sequence[ClientConfig]) -> None:
    if not clients:
        raise InvalidConfigException("At least one client is required")

    ids = [client.client_id for client in clients]
    if len(set(ids)) != len(ids):
        raise InvalidConfigException(f"Client ids must be unique, got {ids}")

    for client in clients:
        if not 0 < client.weight <= 1:
            raise InvalidConfigException(
                f"Client {client.client_id} weight must lie in (0, 1], got {client.weight}"
            )
        if client.batch_size > client.partition.size:
            raise InvalidConfigException(
                f"Client {client.client_id} batch size {client.batch_size} exceeds its "
                f"{client.partition.size} samples"
            )

    total = sum(client.weight for client in clients)
    if abs(total - 1.0) > _WEIGHT_TOLERANCE:
        raise InvalidConfigException(f"Client weights must sum to 1, got {total}")


def sample_batch(client: ClientConfig, master_seed: int, round_index: int) -> np.ndarray:
    """L distinct partition indices, drawn afresh every round."""
    if client.batch_size < 1 or client.batch_size > client.partition.size:
        raise InvalidConfigException(
            f"Client {client.client_id} batch size {client.batch_size} does not fit its "
            f"{client.partition.size} samples"
        )

    rng = random_stream(master_seed, client.client_id, round_index, STREAM_BATCH)
    return np.sort(rng.choice(client.partition.size, size=client.batch_size, replace=False))


def _local_update(
    client: ClientConfig,
    theta: np.ndarray,
    objective: Objective,
    clip_bound: float,
    master_seed: int,
    round_index: int,
) -> LocalUpdate:
    config = client.codec_config(clip_bound)
    batch = sample_batch(client, master_seed, round_index)
    data = client.partition.subset(batch)

    per_sample = objective.per_sample_gradients(theta, data.features, data.labels)
    clipped = clip_batch_average(per_sample, clip_bound)

    signs, levels = uniform_quantize(
        clipped,
        config,
        random_stream(master_seed, client.client_id, round_index, STREAM_QUANTIZE),
    )
    message = add_binomial_noise(
        signed_levels(signs, levels),
        config,
        random_stream(master_seed, client.client_id, round_index, STREAM_NOISE),
    )

    return LocalUpdate(
        message=message,
        clipped_gradient=clipped,
        batch=batch,
        empirical_privacy_dimension=float(
            np.mean(np.sum(np.abs(per_sample), axis=1)) / clip_bound
        ),
    )


def local_step(
    client: ClientConfig,
    theta: np.ndarray,
    objective: Objective,
    clip_bound: float,
    master_seed: int,
    round_index: int,
) -> QuantizedMessage:
    """Sample a batch, clip, quantize and add binomial noise: the client's round message."""
    return _local_update(
        client, theta, objective, clip_bound, master_seed, round_index
    ).message


def aggregate(
    messages: Mapping[int, QuantizedMessage], weights: Mapping[int, float]
) -> np.ndarray:
    """sum_i p_i decode(msg_i), summed in ascending client id order."""
    missing = sorted(set(weights) - set(messages))
    if missing:
        raise IncompleteRoundException(f"No message from clients {missing}")
    unknown = sorted(set(messages) - set(weights))
    if unknown:
        raise InvalidInputException(f"Messages from unknown clients {unknown}")

    dimensions = {message.dimension for message in messages.values()}
    if len(dimensions) != 1:
        raise InvalidInputException(f"Client messages differ in dimension: {sorted(dimensions)}")

    total = np.zeros(dimensions.pop())
    for client_id in sorted(weights):
        total += weights[client_id] * decode(messages[client_id])
    return total


def aggregated_second_moment_bound(
    clients: Sequence[ClientConfig],
    gradient_variance: float,
    dimension: int,
    clip_bound: float,
) -> float:
    """N sum_i p_i^2 (sigma^2 / L_i + d C^2 V_i), the excess second moment of the aggregate."""
    count = len(clients)
    sampling = sum(c.weight**2 * gradient_variance / c.batch_size for c in clients)
    quantization = sum(
        c.weight**2 * noise_variance(c.codec_config(clip_bound)) for c in clients
    )
    return count * sampling + count * dimension * clip_bound**2 * quantization


def convergence_bound(
    initial_loss: float,
    optimal_loss: float,
    learning_rate: float,
    rounds: int,
    second_moment_bound: float,
) -> float:
    """Right-hand side bounding (1/T) sum_t E||grad F(theta_t)||^2 for eta <= 1/nu."""
    if learning_rate <= 0:
        raise InvalidInputException("The convergence bound needs a positive learning rate")
    return 2.0 * (initial_loss - optimal_loss) / (rounds * learning_rate) + second_moment_bound


def clipping_bias(
    objective: Objective, theta: np.ndarray, dataset: Dataset, clip_bound: float
) -> float:
    """||E[clipped batch gradient] - grad F|| over one partition."""
    per_sample = objective.per_sample_gradients(theta, dataset.features, dataset.labels)
    expected = clip_batch_average(per_sample, clip_bound)
    return float(np.linalg.norm(expected - np.mean(per_sample, axis=0)))


class Trainer:
    """
    Synchronous BQ-SGD: every round each client sends one frame, the server
    decodes, aggregates and steps theta. Client work may run on a thread pool;
    everything the server does happens on the calling thread in client id order.
    """

    def __init__(
        self,
        config: TrainingConfig,
        clients: Sequence[ClientConfig],
        objective: Objective,
    ):
        check_clients(clients)

        self.__config = config
        self.__clients = sorted(clients, key=lambda c: c.client_id)
        self.__objective = objective
        self.__weights = {c.client_id: c.weight for c in self.__clients}

        self.__codec_configs = {
            c.client_id: c.codec_config(config.clip_bound) for c in self.__clients
        }
        self.__loggers = {
            c.client_id: logging.getLogger(__name__ + "." + str(c.client_id))
            for c in self.__clients
        }

        dimension = objective.dimension
        for client in self.__clients:
            if client.partition.features.shape[1] != dimension:
                raise InvalidConfigException(
                    f"Client {client.client_id} features do not match the objective"
                )

        self.__bits_per_round = sum(
            dimension * code_width(cfg.alphabet_size) for cfg in self.__codec_configs.values()
        )

        self.__ledgers: Dict[int, PrivacyLedger] = {}
        self.__round_epsilon: Dict[int, float] = {}
        for client in self.__clients:
            cfg = self.__codec_configs[client.client_id]
            if cfg.noise_trials == 0:
                self.__loggers[client.client_id].warning(
                    "m = 0: client runs without a privacy guarantee, no ledger kept"
                )
                continue
            self.__round_epsilon[client.client_id] = per_round_privacy(
                cfg, client.profile(dimension), client.privacy.delta_target
            )
            self.__ledgers[client.client_id] = PrivacyLedger(
                client.client_id, client.privacy.delta_target
            )

        smoothness = objective.smoothness
        if smoothness and config.learning_rate > 1.0 / smoothness:
            _LOGGER.warning(
                f"Learning rate {config.learning_rate} exceeds 1/nu = {1.0 / smoothness:.6g}; "
                "the convergence bound does not apply"
            )

        _LOGGER.info(
            f"Each frame carries a {header_size_bits()} bit header on top of "
            f"{self.__bits_per_round // len(self.__clients)} payload bits per client on average"
        )

        self.__state = ModelState(self.__initial_point(dimension), 0)
        self.__rows: List[MetricsRow] = []
        self.__frames: Dict[int, List[bytes]] = {c.client_id: [] for c in self.__clients}

    def __initial_point(self, dimension: int) -> np.ndarray:
        config = self.__config
        if config.initial_point is not None:
            theta = np.asarray(config.initial_point, dtype=np.float64).reshape(-1)
            if theta.shape[0] != dimension:
                raise InvalidConfigException(
                    f"Initial point has {theta.shape[0]} coordinates, model has {dimension}"
                )
            return theta.copy()

        rng = random_stream(config.master_seed, 0, 0, STREAM_INIT)
        return config.initial_scale * rng.standard_normal(dimension)

    @property
    def state(self) -> ModelState:
        return self.__state

    @property
    def rows(self) -> List[MetricsRow]:
        return list(self.__rows)

    @property
    def ledgers(self) -> Dict[int, PrivacyLedger]:
        return dict(self.__ledgers)

    @property
    def bits_per_round(self) -> int:
        return self.__bits_per_round

    @property
    def total_bits(self) -> int:
        return self.__bits_per_round * self.__state.round_index

    def loss(self, theta: np.ndarray) -> float:
        """F = sum_i p_i F_i."""
        return float(
            sum(
                c.weight * self.__objective.loss(theta, c.partition.features, c.partition.labels)
                for c in self.__clients
            )
        )

    def full_gradient(self, theta: np.ndarray) -> np.ndarray:
        return np.sum(
            [
                c.weight
                * self.__objective.gradient(theta, c.partition.features, c.partition.labels)
                for c in self.__clients
            ],
            axis=0,
        )

    def accuracy(self, theta: np.ndarray) -> Optional[float]:
        scores = [
            self.__objective.accuracy(theta, c.partition.features, c.partition.labels)
            for c in self.__clients
        ]
        if any(score is None for score in scores):
            return None
        return float(sum(c.weight * score for c, score in zip(self.__clients, scores)))

    def optimal_loss(self) -> Optional[float]:
        optimum = self.__objective.optimum(
            [c.partition.features for c in self.__clients],
            [c.weight for c in self.__clients],
        )
        return None if optimum is None else self.loss(optimum)

    def __privacy_snapshot(self) -> Tuple[Optional[float], Optional[float]]:
        if len(self.__ledgers) != len(self.__clients):
            return None, None

        totals = [ledger.totals() for ledger in self.__ledgers.values()]
        return (
            max(t.epsilon_simplified for t in totals),
            max(t.delta_simplified for t in totals),
        )

    def __run_clients(self, theta: np.ndarray, round_index: int) -> Dict[int, LocalUpdate]:
        config = self.__config

        def work(client: ClientConfig) -> LocalUpdate:
            return _local_update(
                client,
                theta,
                self.__objective,
                config.clip_bound,
                config.master_seed,
                round_index,
            )

        workers = min(worker_count(), len(self.__clients))
        if workers <= 1:
            updates = [work(client) for client in self.__clients]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                updates = list(pool.map(work, self.__clients))

        return {c.client_id: u for c, u in zip(self.__clients, updates)}

    def __is_probe_round(self, round_index: int) -> bool:
        if self.__objective.has_exact_gradient:
            return True
        return (
            (round_index - 1) % self.__config.probe_interval == 0
            or round_index == self.__config.rounds
        )

    def __log_probes(self, theta: np.ndarray, updates: Dict[int, LocalUpdate]) -> None:
        for client in self.__clients:
            logger = self.__loggers[client.client_id]
            logger.info(
                f"Empirical d_P = {updates[client.client_id].empirical_privacy_dimension:.4g}, "
                f"clipping bias = "
                f"{clipping_bias(self.__objective, theta, client.partition, self.__config.clip_bound):.4g}"
            )

    def step(self, initial_loss: float) -> MetricsRow:
        """One round: clients encode frames, the server decodes, aggregates and updates."""
        config = self.__config
        theta = self.__state.theta
        round_index = self.__state.round_index + 1

        train_loss = self.loss(theta)
        if not math.isfinite(train_loss) or (
            initial_loss > 0 and train_loss > DIVERGENCE_FACTOR * initial_loss
        ):
            _LOGGER.error(
                f"Training diverged at round {round_index}: loss {train_loss} vs initial "
                f"{initial_loss}"
            )
            raise DivergenceException(
                f"Training diverged at round {round_index}: loss {train_loss}",
                rows=self.rows,
            )

        updates = self.__run_clients(theta, round_index)

        messages = {}
        for client_id, update in updates.items():
            frame = encode_frame(update.message, round_index, client_id)
            if config.trace_dir is not None:
                self.__frames[client_id].append(frame)
            messages[client_id] = decode_frame(frame)

        aggregated = aggregate(messages, self.__weights)

        for client_id, ledger in self.__ledgers.items():
            ledger.record_round(
                round_index,
                self.__round_epsilon[client_id],
                ledger.delta_prime,
            )

        grad_norm_sq = second_moment = accuracy = None
        if self.__is_probe_round(round_index):
            full = self.full_gradient(theta)
            grad_norm_sq = float(full @ full)
            second_moment = float(np.sum((aggregated - full) ** 2))
            accuracy = self.accuracy(theta)
            if _LOGGER.isEnabledFor(logging.INFO):
                self.__log_probes(theta, updates)

        eps_total, delta_total = self.__privacy_snapshot()
        row = MetricsRow(
            round_index=round_index,
            train_loss=train_loss,
            grad_norm_sq=grad_norm_sq,
            cumulative_bits=round_index * self.__bits_per_round,
            eps_total=eps_total,
            delta_total=delta_total,
            agg_second_moment=second_moment,
            accuracy=accuracy,
        )
        self.__rows.append(row)

        updated = theta - config.learning_rate * aggregated
        if not np.all(np.isfinite(updated)):
            raise DivergenceException(
                f"Model parameters became non-finite at round {round_index}", rows=self.rows
            )
        self.__state = ModelState(updated, round_index)
        return row

    def run(self) -> List[MetricsRow]:
        initial_loss = self.loss(self.__state.theta)
        _LOGGER.info(
            f"Training {len(self.__clients)} clients for {self.__config.rounds} rounds, "
            f"F(theta_0) = {initial_loss:.6g}"
        )

        try:
            while self.__state.round_index < self.__config.rounds:
                self.step(initial_loss)

            final_loss = self.final_loss()
            if not math.isfinite(final_loss):
                raise DivergenceException(
                    f"Training diverged after round {self.__config.rounds}",
                    rows=self.rows,
                )
        finally:
            self.write_traces()

        return self.rows

    def final_loss(self) -> float:
        return self.loss(self.__state.theta)

    def final_accuracy(self) -> Optional[float]:
        return self.accuracy(self.__state.theta)

    def write_traces(self) -> None:
        trace_dir = self.__config.trace_dir
        if trace_dir is None:
            return

        os.makedirs(trace_dir, exist_ok=True)
        for client_id, frames in self.__frames.items():
            path = os.path.join(trace_dir, f"client_{client_id}.bqt")
            written = write_trace(path, frames)
            _LOGGER.debug(f"Wrote {written} bytes of frames to {path}")

    def write_metrics(self, path: str) -> None:
        write_metrics_csv(path, self.__rows)

    def write_ledgers(self, directory: str) -> List[str]:
        paths = []
        for client_id, ledger in sorted(self.__ledgers.items()):
            path = os.path.join(directory, f"ledger_client_{client_id}.csv")
            ledger.write_csv(path)
            paths.append(path)
        return paths


def train(
    config: TrainingConfig, clients: Sequence[ClientConfig], objective: Objective
) -> List[MetricsRow]:
    return Trainer(config, clients, objective).run()
