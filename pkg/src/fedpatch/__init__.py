"""fedpatch: desk-scale federated averaging simulator for patch classification."""

__version__ = "0.1.0"
