"""Command-line interface for event_dynamics."""
