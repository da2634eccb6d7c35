"""Build script for the optional compiled kernels.

The package works without them: ``drdfkit.kernels`` falls back to numpy
implementations when the extension is missing.
"""
import os

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("DRDFKIT_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "drdfkit._kernels",
                ["src/drdfkit/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                # bitwise agreement with the numpy path needs IEEE ops in order
                extra_compile_args=["-O3", "-ffp-contract=off", "-fno-fast-math"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
