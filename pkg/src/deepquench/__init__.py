"""Optimal control of a phase-field system with thermal memory and its
deep-quench limit to the double obstacle potential."""

__version__ = "0.1.0"
