"""Spectral analysis of ReLU neural tangent kernels and exponential kernels."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    DegenerateInputError,
    DivergenceError,
    DomainError,
    EmptyDataError,
    FitError,
    InsufficientDataError,
    NtkLapError,
    NumericalError,
    ParseError,
    SingularSystemError,
)
from .kernels import AmbientKernelSpec, GramMatrix, ZonalKernelSpec, gram, kernel_from_json  # noqa: E402
from .ntk import NtkConfig, bias_kernel, ntk_eval, ntk_normalized, ntk_two_layer_closed_form, ntk_zonal  # noqa: E402
