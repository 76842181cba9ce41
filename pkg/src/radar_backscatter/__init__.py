"""Semi-blind multi-tag ambient backscatter decoding over radar clutter."""

__version__ = "0.1.0"
