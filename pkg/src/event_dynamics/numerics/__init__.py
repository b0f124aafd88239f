"""Numeric building blocks: RNG, quadrature, ODE stepping, autodiff and Adam."""
