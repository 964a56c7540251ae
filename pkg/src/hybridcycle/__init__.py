"""Hybrid turbofan modeling: reference cycle, component nets, physics losses."""

__version__ = "0.1.0"
