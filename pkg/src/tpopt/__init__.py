"""Template optimization (TpopT) and matched-filtering toolkit."""

__version__ = "0.1.0"
