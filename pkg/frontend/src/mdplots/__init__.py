"""Figure generation for mdlab experiment output."""

from .figures import KINDS, extract_series, render
from .io import SchemaError

__version__ = "0.1.0"
