"""Numerical core: Gaussian models, fields, weights, quadrature, divergence, surfaces and traces."""
