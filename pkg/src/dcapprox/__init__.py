"""Polynomial approximation in L2(mu) under moment and tail assumptions:
orthogonal projection with Fourier-side certificates, degree planners,
Hermite and Jackson constructions, and polynomial-regression learners."""

__version__ = "0.1.0"
