"""Experiment runner: configs, sweeps, CSV/manifest output and the CLI."""
