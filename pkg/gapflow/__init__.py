"""Finite-size laboratory for gapped ground state phases of quantum spin systems."""

__version__ = '0.3.0'
