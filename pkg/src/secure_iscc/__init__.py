"""Energy-minimizing planner for secure UAV-aided sensing, communication and computing."""

__version__ = "0.1.0"
