"""Feature extraction and baseline-anonymizer harness for anoneval."""

__version__ = "0.1.0"
