"""Unit tests for event_dynamics."""
