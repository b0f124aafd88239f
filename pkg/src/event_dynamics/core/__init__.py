"""Core domain services for event_dynamics."""
