"""Urban heat-stress engine: UTCI mapping, greening scenarios and a learned surrogate."""
import os

# Prefer OpenMP workers; the TBB layer is only tried last.
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")

__version__ = "0.1.0"
