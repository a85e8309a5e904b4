"""Gossip aggregation under churn: Push-Sum-Revert averaging, Flajolet-Martin
counting with Count-Sketch-Reset, and a round-based simulator to run them."""
from .averaging import Mass, RevertParams
from .counting import CutoffFn
from .fm_sketch import SketchParams, estimate_count

__version__ = "0.1.0"

__all__ = ["Mass", "RevertParams", "CutoffFn", "SketchParams", "estimate_count", "__version__"]
