"""cfcondense: condense paired multi-modal embedding datasets by matching
empirical characteristic functions, with linear-probe and retrieval
evaluation.

Submodules are imported explicitly (``from cfcondense import cf_engine``)
so the command-line entry point can cap BLAS threads before numpy loads.
"""

__version__ = "0.1.0"

from . import errors  # noqa: F401
