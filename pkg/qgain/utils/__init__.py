"""Utility functions for qgain runs."""

from .error_analyzer import ErrorAnalyzer
from .result_formatter import ResultFormatter

__all__ = ["ErrorAnalyzer", "ResultFormatter"]
