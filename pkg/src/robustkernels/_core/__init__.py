"""Backend selection: compiled extension if available, NumPy fallback otherwise.

Set ``ROBUSTKERNELS_BACKEND=python`` to force the fallback, or
``ROBUSTKERNELS_BACKEND=native`` to require the extension (ImportError if it
was not built).  The active choice is exposed as ``BACKEND``.
"""

import os

from . import codes  # noqa: F401  (re-exported)

_requested = os.environ.get("ROBUSTKERNELS_BACKEND", "").strip().lower()

if _requested in ("python", "purepy", "numpy"):
    from . import _purepy as _impl

    BACKEND = "python"
elif _requested in ("", "native", "compiled"):
    try:
        from . import _native as _impl

        BACKEND = "native"
    except ImportError:
        if _requested:
            raise
        from . import _purepy as _impl

        BACKEND = "python"
else:
    raise ValueError(
        f"ROBUSTKERNELS_BACKEND={_requested!r}: expected 'native' or 'python'"
    )

sigma = _impl.sigma
sigma_prime = _impl.sigma_prime
mean_weight = _impl.mean_weight
solve_scale = _impl.solve_scale


def get_backend(name):
    """Return a specific backend module by name ('native' or 'python')."""
    if name == "python":
        from . import _purepy

        return _purepy
    if name == "native":
        from . import _native

        return _native
    raise ValueError(f"unknown backend {name!r}")
