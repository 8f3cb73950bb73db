"""Plane-sweep multi-view stereo depth inference with a small numpy autodiff engine."""

__version__ = "0.1.0"
