"""
SPICER - reconstrução de MRI paralela auto-supervisionada com estimação conjunta de sensibilidades
"""

__version__ = "1.0.0"
