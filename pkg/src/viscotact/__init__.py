"""Desk-scale viscoelastic contact simulation, compliance control, and
action-chunking policy runtime."""

__version__ = "0.1.0"
