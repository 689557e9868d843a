"""Shared test configuration.

BLAS pools are pinned to one thread: the solvers issue thousands of
small factorizations and multi-threaded fork/join overhead dominates on
small machines (orders of magnitude, not percent).
"""

import os

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

from mixadc.harness import limit_blas_threads  # noqa: E402

limit_blas_threads()
