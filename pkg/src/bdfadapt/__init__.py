"""Adaptive mini-element solver for Brinkman-Darcy-Forchheimer flow in
variable-porosity media."""

__version__ = "0.1.0"
