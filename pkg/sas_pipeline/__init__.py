"""
SAS pipeline package – node classification by training a feature-only MLP
and then propagating its predictions over the graph.
"""

from . import dataset
from . import errors
from . import graph
from . import io_utils
from . import log_utils
from . import metrics
from . import mlp
from . import models
from . import pipeline
from . import propagation
from . import settings
from . import synthgen

__all__ = [
    "dataset",
    "errors",
    "graph",
    "io_utils",
    "log_utils",
    "metrics",
    "mlp",
    "models",
    "pipeline",
    "propagation",
    "settings",
    "synthgen",
]
