import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables
load_dotenv()


class Settings:
    # Application
    APP_NAME = os.getenv("D2D_APP_NAME", "D2D Trajectory Planner")
    APP_VERSION = "0.1.0"
    LOG_LEVEL = os.getenv("D2D_LOG_LEVEL", "INFO").upper()

    # Offline solver
    SOLVER_TOLERANCE = float(os.getenv("D2D_SOLVER_TOLERANCE", "1e-6"))
    SOLVER_MAX_ITER = int(os.getenv("D2D_SOLVER_MAX_ITER", "100000"))
    PROJECTION_TOLERANCE = float(os.getenv("D2D_PROJECTION_TOLERANCE", "1e-9"))
    PROJECTION_MAX_SWEEPS = int(os.getenv("D2D_PROJECTION_MAX_SWEEPS", "5000"))

    # Relative tolerance (times v) for velocity checks
    FEASIBILITY_TOL = float(os.getenv("D2D_FEASIBILITY_TOL", "1e-6"))

    # Rate model
    DEFAULT_BANDWIDTH_HZ = 10e6
    DEFAULT_PATH_LOSS_EXPONENT = 2.5
    DEFAULT_NOISE_POWER = 0.2
    # ~3.1 Mbps at a 170 m separation; presets recalibrate exactly
    DEFAULT_DISTANCE_SCALE = float(os.getenv("D2D_DEFAULT_DISTANCE_SCALE", "56.0"))
    MIN_DISTANCE = float(os.getenv("D2D_MIN_DISTANCE", "1e-3"))  # harness only

    # Online learner defaults
    DEFAULT_HUBER_MU = 1e-3

    # Reports
    FLOAT_DIGITS = int(os.getenv("D2D_FLOAT_DIGITS", "17"))
    OUTPUT_DIR = Path(os.getenv("D2D_OUTPUT_DIR", "output"))
    PRESET_DIR = Path(os.getenv("D2D_PRESET_DIR", str(Path(__file__).parent / "presets")))

    # Sweeps and Monte Carlo suites
    MAX_WORKERS = int(os.getenv("D2D_MAX_WORKERS", "1"))
    DEFAULT_BOUND_TRIALS = int(os.getenv("D2D_BOUND_TRIALS", "100"))

    @property
    def float_format(self) -> str:
        return f"%.{self.FLOAT_DIGITS}g"


# Global settings instance
settings = Settings()
