"""AOM bi-frequency interferometer simulator"""

__version__ = '1.0.0'
