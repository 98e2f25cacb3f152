"""Extremum-seeking tracking of a time-varying reference on a CSTR model.

Subpackages are imported explicitly (``from estrack import plant``) to keep
startup light; the integration module pulls in numba, which is slow to
import and only needed for actual simulation work.
"""

__version__ = "0.1.0"

__all__ = [
    "plant",
    "reference",
    "controller",
    "integrate",
    "analysis",
    "config",
    "cli",
    "acceptance",
    "experiments",
]
