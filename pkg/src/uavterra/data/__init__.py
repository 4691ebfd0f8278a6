"""Bundled data files (coefficient presets)."""
