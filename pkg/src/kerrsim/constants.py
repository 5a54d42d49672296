"""Exact SI / CODATA constants used throughout kerrsim."""

import math

h = 6.62607015e-34  # Planck constant, J s (exact)
e = 1.602176634e-19  # elementary charge, C (exact)
k_B = 1.380649e-23  # Boltzmann constant, J/K (exact)

PHI0 = h / (2 * e)  # flux quantum, Wb
R_K = h / e**2  # von Klitzing / resistance quantum, ohm

# z(0.9) - z(0.1) for the standard normal: converts a Gaussian RMS to a 10-90 width.
GAUSS_10_90 = 2.5631031310892007

TWO_PI = 2 * math.pi
