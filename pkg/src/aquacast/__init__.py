"""Surface-water change forecasting: targets from multi-temporal rasters, a
climate-gated UNet with three task heads, baselines, metrics, and
explainability tooling, plus the ``aqua`` experiment CLI."""

__version__ = "0.1.0"

from .baselines import Task

__all__ = ["Task", "__version__"]
