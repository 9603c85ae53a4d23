"""Spin-center linewidth optimization for p-n-n+ diodes."""
__version__ = "0.1.0"
