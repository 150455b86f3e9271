"""Command-line interface for privquery."""
