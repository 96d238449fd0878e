"""Transit policy optimization testbed: day simulator, KPIs, scoring, search."""

__version__ = "0.1.0"
