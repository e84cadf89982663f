"""Bayesian group factor analysis.

Group-wise sparse factor models for collections of co-occurring data
views, with variational inference, rotation-based identifiability
optimization, factor-activity extraction, synthetic benchmarks and
matching-based structure evaluation.

The package intentionally avoids importing numpy at package-import time
so the CLI can cap BLAS threads first; import the submodules directly
(gfa.inference, gfa.rotation, ...) or rely on the lazy re-exports below.
"""

__version__ = "0.1.0"

_SUBMODULES = (
    "data",
    "inference",
    "rotation",
    "activity",
    "synthetic",
    "evaluation",
    "serialize",
    "cli",
)


def __getattr__(name):
    if name in _SUBMODULES:
        import importlib

        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module 'gfa' has no attribute {name!r}")
