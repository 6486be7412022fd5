"""Finite-element projection scheme for penalized Ericksen-Leslie nematic flow."""
__version__ = "0.1.0"
