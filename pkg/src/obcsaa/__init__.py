"""Federated learning with 1-bit compressive sensing and over-the-air aggregation."""
from . import bounds, channel, cs_codec, learner, scheduler
from ._kernels import backend
from .errors import OBCSAAError

__version__ = "0.1.0"

__all__ = ["OBCSAAError", "backend", "bounds", "channel", "cs_codec", "learner", "scheduler"]
