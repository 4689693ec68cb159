"""Build script: compiles the hot-loop kernel core when Cython is available.

The package works without the extension (a NumPy fallback is selected at
import time), so failure to *import* Cython degrades to a pure-Python build.
A failing C compile is deliberately not swallowed.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "robustkernels._core._native",
                ["src/robustkernels/_core/_native.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
