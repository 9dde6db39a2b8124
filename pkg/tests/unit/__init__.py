"""Unit tests for optomech components."""
