"""Spectra of zonal kernels on spheres and of empirical Gram matrices."""

from .bessel import bessel_j, gauss_legendre
from .laplace import (
    laplace_fourier_transform,
    laplace_sphere_eig,
    watson_integral,
    watson_integral_numeric,
)
from .sphere import (
    Spectrum,
    decay_slope,
    fourier_coefficients_s1,
    gegenbauer_table,
    harmonic_coefficients,
    local_slope,
    multiplicity,
)
