"""Dynamic home-care nurse scheduling with approximate linear programming."""

__version__ = "0.1.0"
