"""Knowledge-grounded dialogue response engine."""

__version__ = "1.0.0"
