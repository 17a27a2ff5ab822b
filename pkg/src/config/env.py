from dotenv import dotenv_values

# Load environment variables from .env file
env = dotenv_values(".env")

# Basis enumeration limits
BASIS_SIZE_LIMIT = int(env.get("BASIS_SIZE_LIMIT", str(2**27)))

# Dense diagonalization settings
DENSE_DIAGONALIZATION_CAP = int(env.get("DENSE_DIAGONALIZATION_CAP", "40000"))
ZERO_ENERGY_RTOL = float(env.get("ZERO_ENERGY_RTOL", "1e-10"))
DEGENERACY_TOL = float(env.get("DEGENERACY_TOL", "1e-10"))
UNFOLD_DEGREE = int(env.get("UNFOLD_DEGREE", "7"))
MIN_LEVELS = int(env.get("MIN_LEVELS", "50"))

# Entanglement settings
ZERO_ENTROPY_TOL = float(env.get("ZERO_ENTROPY_TOL", "1e-10"))

# Time evolution settings
DEFAULT_DT = float(env.get("DEFAULT_DT", "1e-3"))
NORM_TOL = float(env.get("NORM_TOL", "1e-9"))
NORM_ABORT_TOL = float(env.get("NORM_ABORT_TOL", "1e-6"))
POINTS_PER_DECADE = int(env.get("POINTS_PER_DECADE", "32"))
SMOOTHING_WINDOW = int(env.get("SMOOTHING_WINDOW", "9"))

# Runtime settings
DEFAULT_THREADS = int(env.get("DEFAULT_THREADS", "1"))
OUTPUT_DIR = env.get("OUTPUT_DIR", "results")
LOG_LEVEL = env.get("LOG_LEVEL", "INFO")
SHOW_PROGRESS = env.get("SHOW_PROGRESS", "True").lower() == "true"
