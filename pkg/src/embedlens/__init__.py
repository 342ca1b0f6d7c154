"""embedlens: diagnostics for labeled embedding sets in a joint
text/image space.

Quantifies dataset diversity and concept (centroid) shift, runs centroid-
and k-NN-based classification experiments, probes cross-modality linear
separability, generates augmented prompt sets, and simulates synthetic
embedding clusters as a verification oracle.
"""

__version__ = "0.1.0"

from . import classify, dataset, geometry, metrics, promptgen, separability, simulator
from .errors import EmbedLensError

__all__ = [
    "__version__",
    "EmbedLensError",
    "classify",
    "dataset",
    "geometry",
    "metrics",
    "promptgen",
    "separability",
    "simulator",
]
