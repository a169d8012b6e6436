import os
from dotenv import load_dotenv

load_dotenv()

# Spline basis
BASIS_SIZE = int(os.getenv("SSR_BASIS_SIZE", 24))
KERNEL_NU = float(os.getenv("SSR_KERNEL_NU", 10.0))
AGE_MIN = float(os.getenv("SSR_AGE_MIN", 0.0))
AGE_MAX = float(os.getenv("SSR_AGE_MAX", 120.0))

# Gibbs sampler
N_ITER = int(os.getenv("SSR_N_ITER", 10000))
BURN_IN = int(os.getenv("SSR_BURN_IN", 5000))
THIN = int(os.getenv("SSR_THIN", 1))
DEFAULT_SEED = int(os.getenv("SSR_SEED", 20240101))
LOG_EVERY = int(os.getenv("SSR_LOG_EVERY", 500))

# Monte Carlo sizes for region probabilities and exact HMC
GENZ_N_MC = int(os.getenv("SSR_GENZ_N_MC", 4096))
HMC_WARMUP_ON_SWITCH = int(os.getenv("SSR_HMC_WARMUP_ON_SWITCH", 10))
HMC_MAX_BOUNCES = int(os.getenv("SSR_HMC_MAX_BOUNCES", 100000))

# Metropolis step for (sigma_s^2, sigma_v^2) and the logistic comparator
HYPER_STEP = float(os.getenv("SSR_HYPER_STEP", 0.5))
TARGET_ACCEPT = float(os.getenv("SSR_TARGET_ACCEPT", 0.35))

# Posterior summaries
GRID_STEP = float(os.getenv("SSR_GRID_STEP", 0.2))

# Logging
LOG_LEVEL = os.getenv("SSR_LOG_LEVEL", "INFO")
LOG_FILE_NAME = os.getenv("SSR_LOG_FILE", "run.log")

# Slow test opt-in
RUN_SLOW_TESTS = os.getenv("SSR_RUN_SLOW", "0") == "1"

SOFTWARE_VERSION = "0.4.0"
