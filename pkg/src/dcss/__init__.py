"""Two-phase deep clustering with pairwise self-supervision.

Submodules are imported lazily so the CLI can pin BLAS thread counts via
the DCSS_THREADS environment variable before numpy is first loaded.
"""

__version__ = "0.1.0"

_SUBMODULES = (
    "nn",
    "membership",
    "phase1",
    "phase2",
    "theory",
    "metrics",
    "data_io",
    "config",
    "experiment",
    "errors",
)


def __getattr__(name):
    if name in _SUBMODULES:
        import importlib

        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
