"""cascadekit: two-model cascade deferral with bi-directional confidence.

Core pieces: sample records and folds (`records`), backward confidence from
internal layers (`confidence`), random forests (`forest`), entropy binning
and calibration metrics (`calibration`), the forward proxy (`proxy`), the
deferral model and cascade executor (`deferral`), deferral curves and the
cost/bootstrap harness (`evaluation`), synthetic worlds (`synth`), and the
report builder (`reports`). The FastAPI service in `service` wraps the
pipeline; the CLI in `cli` is a thin client for it.
"""

__version__ = "0.1.0"

from .errors import CascadeError, DataError, UsageError

__all__ = ["CascadeError", "DataError", "UsageError", "__version__"]
