"""Figure generation for the mindex simulation CLI's output files."""

from .io import SchemaError, read_csv, read_jsonl, read_theory_csv
from .render import KINDS, FigureSpec, render, save

__version__ = "0.1.0"

__all__ = [
    "FigureSpec",
    "KINDS",
    "SchemaError",
    "read_csv",
    "read_jsonl",
    "read_theory_csv",
    "render",
    "save",
    "__version__",
]
