"""3D-aware portrait synthesis with detachable, scribble-drawn accessories."""

__version__ = "0.1.0"

from .config import PipelineConfig, desk_preset, paper_preset, preset

__all__ = ["PipelineConfig", "desk_preset", "paper_preset", "preset", "__version__"]
