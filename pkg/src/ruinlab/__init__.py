"""Ruin probabilities for an annuity insurer holding its reserve in a risky asset."""

import os

# Prefer OpenMP: the bundled TBB is often too old and numba warns on every run.
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")
