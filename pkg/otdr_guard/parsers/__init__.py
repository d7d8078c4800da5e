"""File formats: datasets, model files and reports."""
