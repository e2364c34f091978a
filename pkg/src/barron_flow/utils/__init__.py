"""File formats, report export and translation helpers."""
