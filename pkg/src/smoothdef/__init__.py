"""Test-time smoothing defenses against white-box adversarial attacks.

Subpackages: image core, smoothing filters (compiled or numpy backend),
a small differentiable classifier, PGD / salt-and-pepper attacks, and the
evaluation harness with its CLI.
"""

__version__ = "0.1.0"

from .image import BoundaryPolicy, Image, clamp01, gradient, laplacian, linf_distance
from .filters import SmootherMethod, SmootherSpec, apply_smoother, strength_ladder
from .kernels import BACKEND as kernel_backend

__all__ = [
    "BoundaryPolicy",
    "Image",
    "SmootherMethod",
    "SmootherSpec",
    "apply_smoother",
    "clamp01",
    "gradient",
    "kernel_backend",
    "laplacian",
    "linf_distance",
    "strength_ladder",
]
