"""Command-line interface and verification suite."""
