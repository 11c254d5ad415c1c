"""homoglab: a numerical laboratory for periodic homogenization.

Builds cell correctors, homogenized tensors, flux correctors, boundary
correctors, Green/Neumann/Poisson kernels, the oscillating boundary weight
and the Dirichlet-to-Neumann map for second-order elliptic operators with
rapidly oscillating periodic coefficients on the unit square, and measures
their convergence rates over epsilon sweeps.
"""

__version__ = "0.1.0"
