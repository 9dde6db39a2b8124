"""Integration tests for optomech pipelines."""
