"""Shape-guided transformer network for instance segmentation, in numpy."""

__version__ = "0.1.0"
