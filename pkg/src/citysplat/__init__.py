"""citysplat: block partitioning, level-of-detail generation and CPU splatting
for large 3D Gaussian scenes.

Heavyweight submodules (render, service) are imported lazily by the code that
needs them; importing the package itself stays cheap.
"""

from .core import CameraView, Gaussian, GaussianCloud, Image
from .errors import ConfigError, DataError, PlySchemaError, UnsupportedCameraModel

__version__ = "0.1.0"

__all__ = [
    "CameraView",
    "Gaussian",
    "GaussianCloud",
    "Image",
    "ConfigError",
    "DataError",
    "PlySchemaError",
    "UnsupportedCameraModel",
    "__version__",
]
