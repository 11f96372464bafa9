import logging
import os
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from ..codec.BQCodec import BqConfig, noise_pdf, sample_noise
from ..const import (
    DATASET_SOURCES,
    GRID_COLUMNS,
    IDX_TRAIN_IMAGES,
    IDX_TRAIN_LABELS,
    NOISE_COLUMNS,
    NOISE_SAMPLE_CHUNK,
    OBJECTIVE_IDX,
    PLAN_COLUMNS,
    PRIVACY_COLUMNS,
    STREAM_NOISE,
)
from ..exceptions import (
    DivergenceException,
    InfeasiblePlanException,
    InvalidConfigException,
)
from ..model.ExperimentConfig import ExperimentConfig
from ..planner.ParameterPlanner import Plan, solve
from ..privacy.PrivacyAccountant import (
    ClientDataProfile,
    PrivacySpec,
    compose,
    per_round_privacy,
    per_round_privacy_gaussian,
)
from ..sim.Datasets import (
    Dataset,
    fetch_idx_dataset,
    generate_synthetic,
    load_idx_dataset,
    partition_data,
    two_class_subset,
)
from ..sim.Objectives import LogisticObjective, Objective
from ..sim.Trainer import ClientConfig, MetricsRow, Trainer, TrainingConfig, write_metrics_csv
from ..utils.utils import random_stream, write_csv

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class NoiseReport:
    config: BqConfig
    centers: np.ndarray
    pdf: np.ndarray
    empirical: np.ndarray
    stderr: np.ndarray
    samples: int
    variance: float
    sample_variance: float

    @property
    def deviation(self) -> np.ndarray:
        return np.abs(self.empirical - self.pdf)

    @property
    def max_deviation(self) -> float:
        return float(np.max(self.deviation))

    @property
    def max_deviation_ratio(self) -> float:
        """Largest per-bin deviation in Monte Carlo standard errors."""
        ratio = np.divide(
            self.deviation,
            self.stderr,
            out=np.zeros_like(self.deviation),
            where=self.stderr > 0,
        )
        return float(np.max(ratio))

    def to_csv_rows(self) -> List[list]:
        return [
            [float(r), float(p), float(e), float(dev), float(se)]
            for r, p, e, dev, se in zip(
                self.centers, self.pdf, self.empirical, self.deviation, self.stderr
            )
        ]


@dataclass(frozen=True)
class PrivacyReportRow:
    client_id: int
    s: int
    m: int
    rounds: int
    epsilon_exact: float
    epsilon_gaussian: float
    epsilon_total_exact: float
    delta_total_exact: float
    epsilon_total_simplified: float
    delta_total_simplified: float
    # guarantee for the target: sqrt(2T ln(1/delta)) * eps_target
    epsilon_total_target: float

    def to_csv_row(self) -> list:
        return [
            self.client_id,
            self.s,
            self.m,
            self.rounds,
            self.epsilon_exact,
            self.epsilon_gaussian,
            self.epsilon_total_exact,
            self.delta_total_exact,
            self.epsilon_total_simplified,
            self.delta_total_simplified,
            self.epsilon_total_target,
        ]


@dataclass(frozen=True)
class GridRow:
    bit_budget: int
    epsilon: float
    s: int
    m: int
    variance: Optional[float]
    seeds: int
    mean_final_loss: float
    mean_accuracy: Optional[float]

    def to_csv_row(self) -> list:
        return [
            self.bit_budget,
            self.epsilon,
            self.s,
            self.m,
            self.variance,
            self.seeds,
            self.mean_final_loss,
            self.mean_accuracy,
        ]


@dataclass
class TrainingResult:
    rows: List[MetricsRow]
    final_loss: float
    final_accuracy: Optional[float]
    total_bits: int
    epsilon_total: Optional[float]
    delta_total: Optional[float]
    metrics_path: Optional[str] = None


def plan_csv_row(client_id: int, plan: Plan) -> list:
    return [
        client_id,
        plan.s,
        plan.m,
        plan.bit_budget,
        plan.bits_per_coord,
        plan.achieved_epsilon,
        plan.achieved_variance,
        plan.feasible,
    ]


class ExperimentAPI:
    """Builds the task, clients and plans of one ExperimentConfig and runs its reports."""

    def __init__(self, config: ExperimentConfig):
        self.__config = config
        self.__task: Optional[Tuple[Objective, Dataset]] = None

    @property
    def config(self) -> ExperimentConfig:
        return self.__config

    def load_task(self) -> Tuple[Objective, Dataset]:
        if self.__task is not None:
            return self.__task

        spec = self.__config.objective
        if spec.kind == OBJECTIVE_IDX:
            images, labels = spec.images, spec.labels
            if spec.source is not None:
                images, labels = fetch_idx_dataset(
                    DATASET_SOURCES[spec.source],
                    [IDX_TRAIN_IMAGES, IDX_TRAIN_LABELS],
                    spec.data_dir,
                )
            dataset = two_class_subset(
                load_idx_dataset(images, labels), spec.classes[0], spec.classes[1]
            )
            objective = LogisticObjective.for_features(dataset.features)
        else:
            objective, dataset, _ = generate_synthetic(
                spec.kind,
                spec.dimension,
                spec.samples,
                spec.seed,
                spread=spec.spread,
                margin=spec.margin,
            )

        self.__task = (objective, dataset)
        return self.__task

    def __dimension_and_sizes(self) -> Tuple[int, List[int]]:
        spec = self.__config.objective
        if spec.kind != OBJECTIVE_IDX:
            return spec.dimension, self.__config.partition_sizes(spec.samples)

        objective, dataset = self.load_task()
        return objective.dimension, self.__config.partition_sizes(dataset.size)

    def plan(self) -> List[Plan]:
        """One plan per client; needs no data for synthetic objectives."""
        dimension, sizes = self.__dimension_and_sizes()

        plans = []
        for client, size in zip(self.__config.clients, sizes):
            profile = ClientDataProfile(
                dataset_size=size,
                batch_size=client.batch_size,
                privacy_dimension=client.privacy_dimension or dimension,
            )
            plans.append(
                solve(profile, PrivacySpec(client.epsilon, client.delta), client.bit_budget)
            )
        return plans

    def write_plan(self, plans: List[Plan], path: str) -> None:
        write_csv(path, PLAN_COLUMNS, [plan_csv_row(i, plan) for i, plan in enumerate(plans)])

    def build_clients(self) -> Tuple[Objective, List[ClientConfig]]:
        objective, dataset = self.load_task()
        config = self.__config
        partitions = partition_data(dataset, len(config.clients), config.objective.seed)

        clients = []
        for i, (spec, partition, weight) in enumerate(
            zip(config.clients, partitions, config.weights)
        ):
            client = ClientConfig(
                client_id=i,
                partition=partition,
                weight=weight,
                batch_size=spec.batch_size,
                bit_budget=spec.bit_budget,
                privacy=PrivacySpec(spec.epsilon, spec.delta),
                privacy_dimension=spec.privacy_dimension,
                levels=spec.levels,
            )
            if client.levels is None:
                plan = client.solve_plan(objective.dimension)
                if not plan.feasible:
                    raise InfeasiblePlanException(
                        f"Client {i} has no feasible (s, m): {plan.diagnosis}"
                    )
            clients.append(client)

        return objective, clients

    def training_config(self, trace_dir: Optional[str] = None) -> TrainingConfig:
        spec = self.__config.training
        return TrainingConfig(
            learning_rate=spec.learning_rate,
            rounds=spec.rounds,
            clip_bound=spec.clip_bound,
            master_seed=spec.master_seed,
            probe_interval=spec.probe_interval,
            initial_scale=spec.initial_scale,
            trace_dir=trace_dir,
        )

    def train(self, out_dir: Optional[str] = None) -> TrainingResult:
        """Run BQ-SGD; with out_dir, write metrics.csv and one ledger CSV per client."""
        objective, clients = self.build_clients()
        trace_dir = None
        if out_dir is not None and self.__config.training.trace:
            trace_dir = os.path.join(out_dir, "traces")

        trainer = Trainer(self.training_config(trace_dir), clients, objective)
        metrics_path = None if out_dir is None else os.path.join(out_dir, "metrics.csv")

        try:
            rows = trainer.run()
        except DivergenceException as e:
            if metrics_path is not None:
                write_metrics_csv(metrics_path, e.rows)
                _LOGGER.error(f"Partial metrics ({len(e.rows)} rounds) kept in {metrics_path}")
            raise

        if out_dir is not None:
            trainer.write_metrics(metrics_path)
            trainer.write_ledgers(out_dir)

        last = rows[-1]
        return TrainingResult(
            rows=rows,
            final_loss=trainer.final_loss(),
            final_accuracy=trainer.final_accuracy(),
            total_bits=trainer.total_bits,
            epsilon_total=last.eps_total,
            delta_total=last.delta_total,
            metrics_path=metrics_path,
        )

    def noise_report(self, seed: Optional[int] = None) -> NoiseReport:
        """Closed-form noise density against a Monte Carlo histogram of decode(encode(g)) - g."""
        spec = self.__config.noise
        config = BqConfig(
            clip_bound=spec.clip_bound,
            quant_level=spec.quant_level,
            noise_trials=spec.noise_trials,
            noise_prob=spec.noise_prob,
        )
        stats = noise_pdf(config)
        low, high = stats.support
        edges = np.linspace(low, high, spec.bins + 1)
        widths = np.diff(edges)

        master_seed = self.__config.training.master_seed if seed is None else seed
        rng = random_stream(master_seed, 0, 0, STREAM_NOISE)

        counts = np.zeros(spec.bins, dtype=np.int64)
        total = total_sq = 0.0
        remaining = spec.samples
        while remaining > 0:
            chunk = min(remaining, NOISE_SAMPLE_CHUNK)
            draws = np.clip(sample_noise(config, chunk, rng), low, high)
            counts += np.histogram(draws, bins=edges)[0]
            total += float(np.sum(draws))
            total_sq += float(np.sum(draws**2))
            remaining -= chunk

        n = spec.samples
        probabilities = stats.bin_probabilities(edges)
        mean = total / n
        report = NoiseReport(
            config=config,
            centers=(edges[:-1] + edges[1:]) / 2.0,
            pdf=probabilities / widths,
            empirical=counts / (n * widths),
            stderr=np.sqrt(probabilities * (1.0 - probabilities) / n) / widths,
            samples=n,
            variance=stats.variance_per_coord,
            sample_variance=total_sq / n - mean**2,
        )
        _LOGGER.info(
            f"Noise report s={config.quant_level} m={config.noise_trials}: max deviation "
            f"{report.max_deviation:.4g} ({report.max_deviation_ratio:.2f} standard errors)"
        )
        return report

    def write_noise_report(self, report: NoiseReport, path: str) -> None:
        write_csv(path, NOISE_COLUMNS, report.to_csv_rows())

    def privacy_report(self, rounds: Optional[int] = None) -> List[PrivacyReportRow]:
        """Per-round epsilon (exact and Gaussian forms) and T-round totals per client."""
        rounds = rounds or self.__config.training.rounds
        dimension, sizes = self.__dimension_and_sizes()

        rows = []
        for i, (client, size, plan) in enumerate(
            zip(self.__config.clients, sizes, self.plan())
        ):
            if client.levels is not None:
                s, m = client.levels
            elif not plan.feasible:
                raise InfeasiblePlanException(
                    f"Client {i} has no feasible (s, m): {plan.diagnosis}"
                )
            else:
                s, m = plan.s, plan.m

            profile = ClientDataProfile(
                dataset_size=size,
                batch_size=client.batch_size,
                privacy_dimension=client.privacy_dimension or dimension,
            )
            codec = BqConfig(clip_bound=1.0, quant_level=s, noise_trials=m)
            epsilon = per_round_privacy(codec, profile, client.delta)
            totals = compose((epsilon, client.delta), rounds)

            rows.append(
                PrivacyReportRow(
                    client_id=i,
                    s=s,
                    m=m,
                    rounds=rounds,
                    epsilon_exact=epsilon,
                    epsilon_gaussian=per_round_privacy_gaussian(codec, profile, client.delta),
                    epsilon_total_exact=totals.epsilon_exact,
                    delta_total_exact=totals.delta_exact,
                    epsilon_total_simplified=totals.epsilon_simplified,
                    delta_total_simplified=totals.delta_simplified,
                    epsilon_total_target=compose(
                        (client.epsilon, client.delta), rounds
                    ).epsilon_simplified,
                )
            )
        return rows

    def write_privacy_report(self, rows: List[PrivacyReportRow], path: str) -> None:
        write_csv(path, PRIVACY_COLUMNS, [row.to_csv_row() for row in rows])

    def grid(self) -> List[GridRow]:
        """Seed-averaged final loss and accuracy over every (bit budget, epsilon) pair of the grid section."""
        grid = self.__config.grid
        if grid is None:
            raise InvalidConfigException("Missing required field config.grid")

        base_seed = self.__config.training.master_seed
        rows = []
        for bit_budget in grid.bit_budgets:
            for epsilon in grid.epsilons:
                swept = self.__config.with_budgets(bit_budget, epsilon)
                plan = ExperimentAPI(swept).plan()[0]

                losses, accuracies = [], []
                for offset in range(grid.seeds):
                    api = ExperimentAPI(swept.with_seed(base_seed + offset))
                    result = api.train()
                    losses.append(result.final_loss)
                    accuracies.append(result.final_accuracy)

                _LOGGER.info(
                    f"Grid b={bit_budget} eps={epsilon}: mean final loss "
                    f"{float(np.mean(losses)):.6g} over {grid.seeds} seeds"
                )
                rows.append(
                    GridRow(
                        bit_budget=bit_budget,
                        epsilon=epsilon,
                        s=plan.s,
                        m=plan.m,
                        variance=plan.achieved_variance,
                        seeds=grid.seeds,
                        mean_final_loss=float(np.mean(losses)),
                        mean_accuracy=None
                        if any(a is None for a in accuracies)
                        else float(np.mean(accuracies)),
                    )
                )
        return rows

    def write_grid(self, rows: List[GridRow], path: str) -> None:
        write_csv(path, GRID_COLUMNS, [row.to_csv_row() for row in rows])
