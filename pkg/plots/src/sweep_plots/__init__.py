"""Plotting frontend for mlsvgd sweep CSVs."""

from .render import CSV_HEADER, SchemaError, parse_sweep_csv, render

__all__ = ["CSV_HEADER", "SchemaError", "parse_sweep_csv", "render"]
