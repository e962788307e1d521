"""Unit test package for storage_dr."""
