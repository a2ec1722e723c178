"""Qubit topologically coupled to two quantum rotors: exact evolution, adiabatic cat splitting and semiclassics."""

__version__ = "0.1.0"
