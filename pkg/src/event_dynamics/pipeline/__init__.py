"""Toy-experiment pipeline: model, objective, training and evaluation."""
