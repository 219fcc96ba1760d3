"""Optic-disc detection and tri-branch classification of papilledema in
fundus images, with a synthetic data generator for end-to-end testing."""

__version__ = "0.1.0"
