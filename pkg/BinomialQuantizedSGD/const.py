###############################################################################
# Codec defaults
###############################################################################

DEFAULT_NOISE_PROB = 0.5
BERNOULLI_SUM_MAX_TRIALS = 64  # above this, binomial draws use CDF inversion

###############################################################################
# Random stream purposes
###############################################################################

STREAM_BATCH = 0
STREAM_QUANTIZE = 1
STREAM_NOISE = 2
STREAM_PARTITION = 3
STREAM_INIT = 4

###############################################################################
# Privacy accounting
###############################################################################

GAUSSIAN_PMAX_MIN_TRIALS = 10  # Gaussian P_max form is only quoted for m > 10
GAUSSIAN_FORM_CONSTANT = 6.4
PLAN_EPSILON_TOLERANCE = 0.1

###############################################################################
# Wire format
###############################################################################

WIRE_MAGIC = b"BQG1"
WIRE_VERSION = 1
# magic, version, d, s, m, q numerator, q denominator, C, round, client id
WIRE_HEADER_FORMAT = "<4sBIIIIIdQI"
WIRE_MAX_Q_DENOMINATOR = 2**32 - 1

###############################################################################
# Simulation
###############################################################################

DIVERGENCE_FACTOR = 1e6
DEFAULT_PROBE_INTERVAL = 10
OBJECTIVE_QUADRATIC = "quadratic"
OBJECTIVE_LOGISTIC = "logistic"
OBJECTIVE_IDX = "idx"

IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049

MNIST_BASE_URL = "https://storage.googleapis.com/cvdf-datasets/mnist/"
FASHION_MNIST_BASE_URL = (
    "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/"
)
IDX_TRAIN_IMAGES = "train-images-idx3-ubyte.gz"
IDX_TRAIN_LABELS = "train-labels-idx1-ubyte.gz"

###############################################################################
# CSV outputs
###############################################################################

CSV_SCHEMA_VERSION = "bq-csv-v1"

METRICS_COLUMNS = [
    "round",
    "train_loss",
    "grad_norm_sq",
    "cumulative_bits",
    "eps_total",
    "delta_total",
    "agg_second_moment",
    "accuracy",
]

LEDGER_COLUMNS = [
    "round",
    "eps_round",
    "delta_round",
    "eps_total_exact",
    "eps_total_simplified",
    "delta_total",
]

PLAN_COLUMNS = [
    "client",
    "s",
    "m",
    "bit_budget",
    "bits_per_coord",
    "achieved_epsilon",
    "variance",
    "feasible",
]

NOISE_COLUMNS = ["r", "pdf", "empirical", "deviation", "stderr"]

PRIVACY_COLUMNS = [
    "client",
    "s",
    "m",
    "rounds",
    "eps_round_exact",
    "eps_round_gaussian",
    "eps_total_exact",
    "delta_total_exact",
    "eps_total_simplified",
    "delta_total_simplified",
    "eps_total_target",
]

GRID_COLUMNS = [
    "bit_budget",
    "epsilon",
    "s",
    "m",
    "variance",
    "seeds",
    "mean_final_loss",
    "mean_accuracy",
]

###############################################################################
# CLI
###############################################################################

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_INFEASIBLE = 3
EXIT_DIVERGED = 4

ENV_THREADS = "BQ_THREADS"

DEFAULT_NOISE_SAMPLES = 1_000_000
DEFAULT_NOISE_BINS = 50
NOISE_SAMPLE_CHUNK = 1_000_000
DEFAULT_GRID_SEEDS = 5
DATASET_SOURCES = {"mnist": MNIST_BASE_URL, "fashion-mnist": FASHION_MNIST_BASE_URL}
