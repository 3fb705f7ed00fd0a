"""Hessian discretisations of distributed control problems for the biharmonic equation."""
import os

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def configure_threads():
    """Cap BLAS/OpenMP worker threads at ``HESSDISC_THREADS`` if set.

    Only effective before numpy loads its BLAS, which is why it also runs on
    package import.
    """
    n = os.environ.get("HESSDISC_THREADS")
    if n and n.isdigit() and int(n) > 0:
        for var in _THREAD_VARS:
            os.environ[var] = n


configure_threads()

__version__ = "0.1.0"
