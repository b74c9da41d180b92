"""Kernel density estimation for smooth radial kernels via discrepancy-based coresets."""

from .core import BuildParams, ShellGeometry, approx_meb, aspect_ratio_bound, estimate_aspect_ratio
from .kernels import Cauchy, ExpMixture, RadialKernel, RationalQuadratic, kernel_eval, parse_kernel, psi
from .tree import Forest, QueryResult, build_forest, preprocess, query, query_forest

__version__ = "0.1.0"

__all__ = [
    "BuildParams",
    "ShellGeometry",
    "approx_meb",
    "aspect_ratio_bound",
    "estimate_aspect_ratio",
    "Cauchy",
    "ExpMixture",
    "RadialKernel",
    "RationalQuadratic",
    "kernel_eval",
    "parse_kernel",
    "psi",
    "Forest",
    "QueryResult",
    "build_forest",
    "preprocess",
    "query",
    "query_forest",
]
