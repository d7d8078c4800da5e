"""otdr-guard - Detect, diagnose and localize fiber faults in OTDR traces."""

__version__ = "0.1.0"
