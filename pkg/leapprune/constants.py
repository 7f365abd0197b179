from .types import GranularityProfile

__all__ = (
    "granularity_profiles",
    "methods",
    "tasks",
    "sweep_axes",
    "SIGMA_INIT_MULTIPLIER",
    "SCORE_INIT_HIGH",
    "DEFAULT_LOG_EVERY",
    "DEFAULT_ALPHA",
    "CHECKPOINT_MAGIC",
    "CHECKPOINT_VERSION"
)

# (MHA block, FC block); H32 is the hybrid setting
granularity_profiles: dict[str, GranularityProfile] = {
    "h32": GranularityProfile("h32", 32, 1),
    "s32": GranularityProfile("s32", 32, 32),
    "s16": GranularityProfile("s16", 16, 16),
    "s8":  GranularityProfile("s8",  8,  8),
    "s1":  GranularityProfile("s1",  1,  1)
}

methods: tuple[str, ...] = (
    "leap",
    "leap-constant-lambda",
    "hard-cubic",
    "soft-constant"
)

tasks: tuple[str, ...] = (
    "pattern-parity",
    "majority-token"
)

sweep_axes: tuple[str, ...] = (
    "temperature",
    "lambda_max",
    "method",
    "target_density",
    "profile",
    "seed"
)

# sigma_i starts at 5T, i.e. k(sigma_i) = sigmoid(5)
SIGMA_INIT_MULTIPLIER = 5.0
# importance scores start uniform in [0, SCORE_INIT_HIGH]
SCORE_INIT_HIGH = 1e-2
DEFAULT_LOG_EVERY = 20
DEFAULT_ALPHA = 0.9

CHECKPOINT_MAGIC = b"LEAPCKPT"
CHECKPOINT_VERSION = 1
