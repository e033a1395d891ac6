"""Gaussian-process system identification with stochastic-LTI (dynamic) and
static kernels, exact and deep variational inference, plus an experiment CLI.

The workload is dominated by many small dense factorizations and solves;
competing BLAS thread pools (numpy's and scipy's) slow those by an order of
magnitude on small machines, so BLAS parallelism is capped at one thread on
import. Set DYNGP_ALLOW_BLAS_THREADS=1 to opt out.
"""

import os

__version__ = "0.1.0"

if not os.environ.get("DYNGP_ALLOW_BLAS_THREADS"):
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=1, user_api="blas")
    except Exception:  # pragma: no cover - best effort only
        pass
