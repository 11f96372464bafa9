import argparse
import logging
import os
import sys
from typing import List, Optional

from BinomialQuantizedSGD import BQSGD
from BinomialQuantizedSGD.const import (
    EXIT_CONFIG_ERROR,
    EXIT_DIVERGED,
    EXIT_INFEASIBLE,
    EXIT_OK,
)
from BinomialQuantizedSGD.exceptions import (
    CorruptMessageException,
    DivergenceException,
    IncompleteRoundException,
    InfeasiblePlanException,
    InvalidConfigException,
    InvalidInputException,
    NetworkException,
    NoPrivacyGuaranteeException,
    UnsupportedFormatException,
)

_LOGGER = logging.getLogger(__name__)

_EPILOG = (
    "Composition uses natural logarithms (sqrt(2T ln(1/delta)) * eps); bit counts use log2. "
    "BQ_THREADS caps the client worker pool; it changes speed, never results. "
    "Exit codes: 0 ok, 2 config error, 3 infeasible plan, 4 divergence."
)

_HANDLED = (
    CorruptMessageException,
    DivergenceException,
    IncompleteRoundException,
    InfeasiblePlanException,
    InvalidConfigException,
    InvalidInputException,
    NetworkException,
    NoPrivacyGuaranteeException,
    UnsupportedFormatException,
)


def _format(value, digits: int = 6) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.{digits}g}"
    return str(value)


def _print_table(header: List[str], rows: List[list]) -> None:
    cells = [header] + [[_format(v) for v in row] for row in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    for row in cells:
        print("  ".join(cell.rjust(width) for cell, width in zip(row, widths)))


def _out_dir(args, bq: BQSGD) -> str:
    return args.out or bq.config.out


def cmd_plan(args, bq: BQSGD) -> int:
    plans = bq.plan()
    _print_table(
        ["client", "s", "m", "b", "bits/coord", "epsilon", "V", "feasible"],
        [
            [i, p.s, p.m, p.bit_budget, p.bits_per_coord, p.achieved_epsilon, p.achieved_variance, p.feasible]
            for i, p in enumerate(plans)
        ],
    )
    bq.api_interface.write_plan(plans, os.path.join(_out_dir(args, bq), "plan.csv"))

    infeasible = [(i, p) for i, p in enumerate(plans) if not p.feasible]
    for i, plan in infeasible:
        print(f"client {i} infeasible: {plan.diagnosis}", file=sys.stderr)
    return EXIT_INFEASIBLE if infeasible else EXIT_OK


def cmd_train(args, bq: BQSGD) -> int:
    out_dir = _out_dir(args, bq)

    if args.grid:
        rows = bq.grid()
        _print_table(
            ["b", "epsilon", "s", "m", "V", "seeds", "final loss", "accuracy"],
            [row.to_csv_row() for row in rows],
        )
        bq.api_interface.write_grid(rows, os.path.join(out_dir, "grid.csv"))
        return EXIT_OK

    result = bq.train(out_dir)
    print(f"final loss: {_format(result.final_loss)}")
    if result.final_accuracy is not None:
        print(f"final accuracy: {_format(result.final_accuracy)}")
    print(f"total payload bits: {result.total_bits}")
    print(
        f"composed privacy: epsilon={_format(result.epsilon_total)} "
        f"delta={_format(result.delta_total)}"
    )
    print(f"metrics: {result.metrics_path}")
    return EXIT_OK


def cmd_noise_report(args, bq: BQSGD) -> int:
    report = bq.noise_report()
    bq.api_interface.write_noise_report(
        report, os.path.join(_out_dir(args, bq), "noise_report.csv")
    )

    config = report.config
    print(
        f"C={config.clip_bound} s={config.quant_level} m={config.noise_trials} "
        f"q={config.noise_prob} samples={report.samples}"
    )
    print(f"variance: closed form {_format(report.variance)}, sample {_format(report.sample_variance)}")
    print(
        f"max deviation: {_format(report.max_deviation)} "
        f"({report.max_deviation_ratio:.2f} standard errors)"
    )
    return EXIT_OK


def cmd_privacy_report(args, bq: BQSGD) -> int:
    rows = bq.privacy_report(args.rounds)
    _print_table(
        [
            "client",
            "s",
            "m",
            "T",
            "eps/round",
            "eps/round gauss",
            "eps_T exact",
            "delta_T exact",
            "eps_T",
            "delta_T",
            "eps_T target",
        ],
        [row.to_csv_row() for row in rows],
    )
    bq.api_interface.write_privacy_report(
        rows, os.path.join(_out_dir(args, bq), "privacy_report.csv")
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="Experiment JSON config")
    common.add_argument("--out", default=None, help="Output directory (overrides config.out)")
    common.add_argument("--seed", type=int, default=None, help="Override the master seed")
    common.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging verbosity",
    )

    parser = argparse.ArgumentParser(
        prog="bq-sgd",
        description="Binomial-mechanism quantized SGD: planner, simulator and privacy accountant",
        epilog=_EPILOG,
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    plan = subparsers.add_parser("plan", parents=[common], help="Solve (s, m) per client")
    plan.set_defaults(handler=cmd_plan)

    train = subparsers.add_parser("train", parents=[common], help="Run BQ-SGD")
    train.add_argument(
        "--grid",
        action="store_true",
        help="Sweep the config's (bit budget, epsilon) grid and write grid.csv",
    )
    train.set_defaults(handler=cmd_train)

    noise = subparsers.add_parser(
        "noise-report", parents=[common], help="Noise density vs Monte Carlo histogram"
    )
    noise.set_defaults(handler=cmd_noise_report)

    privacy = subparsers.add_parser(
        "privacy-report", parents=[common], help="Per-round and composed privacy"
    )
    privacy.add_argument("--rounds", type=int, default=None, help="Rounds T to compose over")
    privacy.set_defaults(handler=cmd_privacy_report)

    return parser


def _exit_code(error: Exception) -> int:
    status = getattr(error, "status", None)
    if status in (EXIT_CONFIG_ERROR, EXIT_INFEASIBLE, EXIT_DIVERGED):
        return status
    return EXIT_CONFIG_ERROR


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        bq = BQSGD(args.config, seed=args.seed)
        return args.handler(args, bq)
    except _HANDLED as e:
        print(f"error: {e}", file=sys.stderr)
        return _exit_code(e)


if __name__ == "__main__":
    sys.exit(main())
