"""Run configuration, pipeline stages and reports."""
