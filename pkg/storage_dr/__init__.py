"""Top-level package for storage-dr."""

__author__ = """storage-dr"""
__email__ = 'lukas.franken@ed.ac.uk'
__version__ = '0.1.0'
