"""Compiling CSPs over finite constraint languages into decision diagrams and DNNF."""
__version__ = "0.1.0"
