"""Bridge server package for delta-audit: scikit-learn estimators behind
the line-delimited JSON scoring protocol."""

__version__ = "0.1.0"
