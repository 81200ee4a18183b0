"""Numerical laboratory for small Laplacian eigenvalues of degenerating curves.

Model fibers are flat square tori joined by plumbing necks carrying the
induced metric of ``{xy = s}``; the package builds, assembles and solves
them, and checks the associated rate, potential-theory and local-chart
estimates.
"""

__version__ = "0.1.0"
