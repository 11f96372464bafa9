import os

import pytest

from .. import BQSGD
from ..exceptions import DivergenceException, NoPrivacyGuaranteeException
from ..model import ObjectiveSpec
from ..utils.utils import read_csv
from .setup import config_path


def test_facade_accepts_path_dict_and_seed():
    bq = BQSGD(config_path("small_train.json"), seed=4)

    assert bq.config.training.master_seed == 4
    assert str(bq) == "BQSGD(quadratic, 2 client(s), T=20)"

    same = BQSGD(
        {
            "objective": {"kind": "quadratic", "d": 10, "n": 400, "seed": 4},
            "clients": [{"batch_size": 20, "bit_budget": 8, "epsilon": 32.0, "delta": 1e-4}],
            "training": {"learning_rate": 0.2, "rounds": 20, "clip_bound": 1.0, "master_seed": 4},
        }
    )
    assert same.config.objective == ObjectiveSpec(
        kind="quadratic", dimension=10, samples=400, seed=4
    )


def test_train_without_output_directory():
    bq = BQSGD(config_path("small_train.json"))
    result = bq.train()

    assert len(result.rows) == 20
    assert result.metrics_path is None
    assert result.total_bits == 3200
    assert result.epsilon_total == result.rows[-1].eps_total
    assert result.final_loss < result.rows[0].train_loss
    assert bq.all_feasible()


def test_divergence_keeps_partial_metrics(tmp_path):
    bq = BQSGD(config_path("divergence.json"))

    with pytest.raises(DivergenceException) as error:
        bq.train(str(tmp_path))

    rows = read_csv(os.path.join(tmp_path, "metrics.csv"))
    assert len(rows) == len(error.value.rows)
    assert rows[0]["eps_total"] == ""


def test_noise_report_matches_closed_form():
    report = BQSGD(config_path("noise.json")).noise_report()

    # C = 1, s = 2, m = 10: (m/4 + 1/6) / 4
    assert report.variance == pytest.approx((2.5 + 1 / 6) / 4)
    assert report.sample_variance == pytest.approx(report.variance, rel=0.02)
    assert report.max_deviation_ratio < 5.0
    assert report.pdf.sum() * (report.centers[1] - report.centers[0]) == pytest.approx(1.0)


def test_privacy_report_needs_noise():
    with pytest.raises(NoPrivacyGuaranteeException):
        BQSGD(config_path("divergence.json")).privacy_report()


def test_privacy_report_defaults_to_training_rounds():
    rows = BQSGD(config_path("fashion_profile.json")).privacy_report()

    assert [row.rounds for row in rows] == [1000] * 4
    assert (rows[0].s, rows[0].m) == (13, 997)
    assert rows[0].epsilon_exact == pytest.approx(112.043858, rel=1e-6)
    assert rows[0].epsilon_gaussian == pytest.approx(112.425405, rel=1e-6)


LOGISTIC_GRID = {
    "objective": {"kind": "logistic", "d": 5, "n": 400, "seed": 3, "margin": 0.5},
    "clients": [
        {"batch_size": 20, "bit_budget": 8, "epsilon": 32.0, "delta": 1e-4, "privacy_dimension": 1},
        {"batch_size": 20, "bit_budget": 8, "epsilon": 32.0, "delta": 1e-4, "privacy_dimension": 1},
    ],
    "training": {"learning_rate": 0.5, "rounds": 20, "clip_bound": 1.0, "master_seed": 3},
    "grid": {"bit_budgets": [8], "epsilons": [32.0], "seeds": 1},
}


def test_grid_scores_the_final_model():
    result = BQSGD(LOGISTIC_GRID).train()
    rows = BQSGD(LOGISTIC_GRID).grid()

    assert len(rows) == 1
    assert result.final_accuracy is not None
    assert 0.0 <= result.final_accuracy <= 1.0
    assert rows[0].mean_accuracy == result.final_accuracy
    assert rows[0].mean_final_loss == result.final_loss


def test_quadratic_runs_have_no_accuracy():
    assert BQSGD(config_path("small_train.json")).train().final_accuracy is None
