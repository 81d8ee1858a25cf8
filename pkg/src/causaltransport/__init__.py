"""Causal transportability for image classification: exact discrete checks and a numpy training stack."""

__version__ = "0.1.0"
