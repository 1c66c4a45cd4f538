"""
Settings - Environment-backed defaults for every tunable
Values come from the process environment (optionally a .env file)
"""

import os
from dotenv import load_dotenv

load_dotenv()


class Settings:
    """
    Runtime defaults read from the environment.

    Each attribute mirrors one CSPI_* variable; a fresh instance re-reads the
    environment so tests can override values with monkeypatch.setenv.
    """

    def __init__(self):
        """Load all settings from environment variables."""
        # Print-error geometry
        self.blot_axis_min = int(os.getenv("CSPI_BLOT_AXIS_MIN", "4"))
        self.blot_axis_max = int(os.getenv("CSPI_BLOT_AXIS_MAX", "10"))
        self.drag_thickness_min = int(os.getenv("CSPI_DRAG_THICKNESS_MIN", "1"))
        self.drag_thickness_max = int(os.getenv("CSPI_DRAG_THICKNESS_MAX", "3"))
        self.drag_min_length = int(os.getenv("CSPI_DRAG_MIN_LENGTH", "40"))
        self.slip_band_min = int(os.getenv("CSPI_SLIP_BAND_MIN", "5"))
        self.slip_band_max = int(os.getenv("CSPI_SLIP_BAND_MAX", "12"))
        self.slip_offset_min = int(os.getenv("CSPI_SLIP_OFFSET_MIN", "3"))
        self.slip_offset_max = int(os.getenv("CSPI_SLIP_OFFSET_MAX", "8"))

        # Sparsifying transform
        self.wavelet_levels = int(os.getenv("CSPI_WAVELET_LEVELS", "6"))

        # Basis Pursuit solver
        self.bp_tol_abs = float(os.getenv("CSPI_BP_TOL_ABS", "1e-6"))
        self.bp_tol_rel = float(os.getenv("CSPI_BP_TOL_REL", "1e-6"))
        self.bp_max_iterations = int(os.getenv("CSPI_BP_MAX_ITER", "5000"))

        # Orchestration
        self.workers = int(os.getenv("CSPI_WORKERS", "1"))
        self.unreadable_psnr = float(os.getenv("CSPI_UNREADABLE_PSNR", "7.0"))
        self.svm_cache_rows = int(os.getenv("CSPI_SVM_CACHE_ROWS", "2048"))
        self.svm_eps = float(os.getenv("CSPI_SVM_EPS", "1e-3"))

    def to_dict(self) -> dict:
        """Snapshot of all settings for run records."""
        return dict(sorted(vars(self).items()))


def get_settings() -> Settings:
    """Return settings freshly read from the environment."""
    return Settings()
