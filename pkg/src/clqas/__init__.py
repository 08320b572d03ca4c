"""Continual quantum architecture search benchmark package."""

__version__ = "0.1.0"
