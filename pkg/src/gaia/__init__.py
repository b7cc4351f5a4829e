"""Building-energy telemetry, rule-based recommendations, and engagement scoring."""

__version__ = "0.1.0"
