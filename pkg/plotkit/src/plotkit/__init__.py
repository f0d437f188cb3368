"""plotkit: batch figure generation from predmob harness CSVs."""

from .render import ROLE_COLORS, render
from .spec import FigureSpec, SpecError
from .tables import SchemaError, Table, load_table

__all__ = [
    "FigureSpec",
    "ROLE_COLORS",
    "SchemaError",
    "SpecError",
    "Table",
    "load_table",
    "render",
]
