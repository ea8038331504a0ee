"""Command-line pipeline: ingest, influence, simulate, sweep, calibrate, measure, sensitivity"""

__version__ = "0.1.0"
