"""Integration tests for event_dynamics."""
