"""
Optomech Test Suite

Unit and integration tests for the optomechanical estimation toolkit.
"""
