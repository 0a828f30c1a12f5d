"""Strengthened fault tolerance for chained BFT: DiemBFT and Streamlet engines with a simulator."""

__version__ = "0.1.0"
