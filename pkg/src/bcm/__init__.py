"""Brand-celebrity matching: summarize descriptive documents, score entity pairs."""

__version__ = "0.1.0"
