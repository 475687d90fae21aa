"""Solvers, storage and scenario pipelines."""
