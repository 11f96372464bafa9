from typing import List, Optional, Union

from BinomialQuantizedSGD.api.ExperimentAPI import (
    ExperimentAPI,
    GridRow,
    NoiseReport,
    PrivacyReportRow,
    TrainingResult,
)
from BinomialQuantizedSGD.model.ExperimentConfig import ExperimentConfig
from BinomialQuantizedSGD.planner.ParameterPlanner import Plan


class BQSGD:
    def __init__(
        self,
        config: Union[ExperimentConfig, dict, str],
        seed: Optional[int] = None,
    ):
        """
        Entry point for planning, training and reporting on one experiment

        Args:
            config: ExperimentConfig, a config dict, or the path of a JSON config file
            seed: Overrides the master seed and the data seed of the config (optional)

        Examples:
            # From a JSON file
            bq = BQSGD("experiment.json")

            # Same experiment under another seed
            bq = BQSGD("experiment.json", seed=7)
        """
        if isinstance(config, str):
            config = ExperimentConfig.load(config)
        elif isinstance(config, dict):
            config = ExperimentConfig.from_dict(config)

        if seed is not None:
            config = config.with_seed(seed)

        self.config = config
        self.api_interface = ExperimentAPI(config)

    def plan(self) -> List[Plan]:
        """
        Solve (s, m) for every client

        Returns:
            One Plan per client, in config order
        """
        return self.api_interface.plan()

    def all_feasible(self, plans: Optional[List[Plan]] = None) -> bool:
        plans = plans if plans is not None else self.plan()
        return all(plan.feasible for plan in plans)

    def train(self, out_dir: Optional[str] = None) -> TrainingResult:
        """
        Run BQ-SGD for the configured number of rounds

        Args:
            out_dir: Directory for metrics.csv and per-client ledgers (optional)

        Returns:
            TrainingResult with the per-round metrics and final totals
        """
        return self.api_interface.train(out_dir)

    def noise_report(self) -> NoiseReport:
        return self.api_interface.noise_report()

    def privacy_report(self, rounds: Optional[int] = None) -> List[PrivacyReportRow]:
        """
        Per-round and composed privacy of every client

        Args:
            rounds: Number of rounds T to compose over (defaults to training.rounds)
        """
        return self.api_interface.privacy_report(rounds)

    def grid(self) -> List[GridRow]:
        return self.api_interface.grid()

    def __str__(self) -> str:
        return (
            f"BQSGD({self.config.objective.kind}, {len(self.config.clients)} client(s), "
            f"T={self.config.training.rounds})"
        )
