"""
Sensing data protocol: synthetic CSI, canonical data blocks, CP-ALS
descriptors, multi-task heads and a seeded benchmark harness.

Thread caps must be in place before numpy loads its BLAS backend, so they
are applied here: ``SDP_DETERMINISTIC=1`` forces one thread and
``SDP_THREADS=n`` caps the pool at ``n``. Existing explicit settings of the
backend variables are left alone unless determinism is requested.
"""

import os as _os

_BLAS_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
              "BLIS_NUM_THREADS", "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS")


def _apply_thread_env():
    if _os.environ.get("SDP_DETERMINISTIC", "") == "1":
        for var in _BLAS_VARS:
            _os.environ[var] = "1"
        return
    cap = _os.environ.get("SDP_THREADS", "").strip()
    if cap.isdigit() and int(cap) > 0:
        for var in _BLAS_VARS:
            _os.environ.setdefault(var, cap)


_apply_thread_env()

__version__ = "0.1.0"
