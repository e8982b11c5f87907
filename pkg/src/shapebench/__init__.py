"""Shape reconstruction benchmarking: geometry kernels, recognition baselines,
metric suite (IoU / Chamfer / F-score), and statistical comparison tools."""

__version__ = "0.1.0"

VXBG_FORMAT_VERSION = 1
MODEL_CONTAINER_VERSION = 1

from .errors import DataError, InvariantError, ShapeBenchError, UsageError

__all__ = [
    "DataError",
    "InvariantError",
    "ShapeBenchError",
    "UsageError",
    "VXBG_FORMAT_VERSION",
    "MODEL_CONTAINER_VERSION",
    "__version__",
]
