"""Two-level overlapping Schwarz preconditioners with algebraic spectral
coarse spaces for heterogeneous diffusion, plus a benchmark CLI."""

from . import bench, coarse_spaces, decomposition, fe_harness, schwarz, sparse_core

__all__ = [
    "sparse_core",
    "fe_harness",
    "decomposition",
    "coarse_spaces",
    "schwarz",
    "bench",
]

__version__ = "0.1.0"
