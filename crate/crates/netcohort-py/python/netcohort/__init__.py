"""Spectral tests for shared membership profiles of network node cohorts.

The heavy lifting lives in the compiled extension; this package re-exports
its surface. Node indices are 0-based here (the command-line tool is
1-based).
"""

from ._netcohort import (
    Adjacency,
    Model,
    __version__,
    correlation_network,
    estimate_k0,
    gumbel_centering,
    random_coupling,
    simulate,
    spectrum,
    test_group,
    test_pair,
)

__all__ = [
    "Adjacency",
    "Model",
    "__version__",
    "correlation_network",
    "estimate_k0",
    "gumbel_centering",
    "random_coupling",
    "simulate",
    "spectrum",
    "test_group",
    "test_pair",
]
