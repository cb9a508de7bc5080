"""Emotion-controllable co-speech gesture generation at desk scale."""
from .errors import EmoGestureError
from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["EmoGestureError", "KERNEL_BACKEND", "__version__"]
