"""Constants and defaults for nioperator."""

from __future__ import annotations


# Fixed-point solver defaults
DEFAULT_MAX_ITERS = 8
DEFAULT_DAMPING = 1.0
DEFAULT_TOL = 1e-6
DEFAULT_DIVERGENCE_FACTOR = 1e3

# Integral operator defaults
DEFAULT_D_MODEL = 16
DEFAULT_POS_DIM = 8
DEFAULT_D_FF = 32
DEFAULT_INIT_GAMMA = 0.5
INIT_STD_BASE = 0.02

# Stimulus geometry: 10 x 10 black and white images
STIMULUS_SIDE = 10
STIMULUS_PIXELS = STIMULUS_SIDE * STIMULUS_SIDE

# Synthetic BOLD generation
DEFAULT_TR_SECONDS = 2.0
HRF_DURATION_SECONDS = 30.0
DEFAULT_N_VOXELS = 256
DEFAULT_SPATIAL_DIMS = 3

# Optimizer defaults
DEFAULT_LEARNING_RATE = 1e-3
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8
DEFAULT_EPOCHS = 50
DEFAULT_BATCH_SIZE = 8

# Latent analysis defaults
DEFAULT_KNN_NEIGHBORS = 5
DEFAULT_KNN_SPLITS = 10
DEFAULT_KNN_TEST_FRACTION = 0.3
PCA_INTERMEDIATE_DIMS = 100

# Tensor container format
TENSOR_FILE_MAGIC = b"NIOT"
TENSOR_FILE_VERSION = 1

# Dataset container reserved entry names
DATASET_SIGNAL = "signal"
DATASET_COORDS = "coords"
DATASET_LABELS = "labels"
DATASET_STIMULI = "stimuli"

# CLI exit codes
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

# Environment variable capping parallel sweep cells
THREADS_ENV_VAR = "NIO_THREADS"
