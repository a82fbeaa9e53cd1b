"""Desk-scale unsupervised domain expansion: source-only, domain-adapted and
distilled classifiers on synthetic 2-D data."""

__version__ = "0.1.0"
