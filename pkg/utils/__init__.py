"""Shared helpers: errors, seeds, JSON/CSV result files."""
