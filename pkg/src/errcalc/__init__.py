"""Error-propagation calculus on error structures."""

__version__ = "0.1.0"
