"""Coordinated initial access simulator for clustered mm-wave small cells."""

__version__ = "0.1.0"
