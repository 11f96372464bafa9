import logging

from BinomialQuantizedSGD import BQSGD
from BinomialQuantizedSGD.exceptions import DivergenceException, InfeasiblePlanException

logging.basicConfig(level=logging.INFO)

# Four clients share a synthetic quadratic task; every client plans its own (s, m)
CONFIG = {
    "objective": {"kind": "quadratic", "d": 20, "n": 4000, "seed": 0, "spread": 0.5},
    "clients": [
        {"batch_size": 32, "bit_budget": 8, "epsilon": 8.0, "delta": 1e-4, "privacy_dimension": 1}
        for _ in range(4)
    ],
    "training": {
        "learning_rate": 0.2,
        "rounds": 200,
        "clip_bound": 1.0,
        "master_seed": 0,
        "probe_interval": 20,
    },
    "noise": {"s": 2, "m": 10, "samples": 200000, "bins": 20},
    "out": "out",
}

bq = BQSGD(CONFIG)

print(bq)
print()

print("Plans:")
plans = bq.plan()
for client_id, plan in enumerate(plans):
    print(
        f"  client {client_id}: s={plan.s} m={plan.m} "
        f"bits/coord={plan.bits_per_coord} epsilon/round={plan.achieved_epsilon} "
        f"V={plan.achieved_variance}"
    )

if not bq.all_feasible(plans):
    print("At least one client has no feasible plan")
    exit(1)

print()
print("Privacy over 200 rounds:")
for row in bq.privacy_report():
    print(
        f"  client {row.client_id}: epsilon/round={row.epsilon_exact:.4f} "
        f"(Gaussian form {row.epsilon_gaussian:.4f}), "
        f"total={row.epsilon_total_simplified:.2f} at delta={row.delta_total_simplified:.2e}"
    )

print()
print("Noise density vs Monte Carlo:")
report = bq.noise_report()
print(f"  variance: closed form {report.variance:.6f}, sample {report.sample_variance:.6f}")
print(f"  max deviation: {report.max_deviation_ratio:.2f} standard errors")

print()
try:
    result = bq.train(CONFIG["out"])
except (DivergenceException, InfeasiblePlanException) as e:
    print(f"Training failed: {e}")
    exit(1)

print(f"Initial loss: {result.rows[0].train_loss}")
print(f"Final loss: {result.final_loss}")
print(f"Payload bits sent: {result.total_bits}")
print(f"Composed privacy: epsilon={result.epsilon_total} delta={result.delta_total}")
print(f"Metrics written to {result.metrics_path}")
