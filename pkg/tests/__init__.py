"""Tests for event_dynamics."""
