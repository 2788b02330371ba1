"""Build script for the optional compiled convolution kernels.

The package is fully functional without the extension (a numpy fallback is
selected at import time), so any build failure here is non-fatal: install
with TUBESEG_SKIP_EXT=1 to skip compilation entirely.
"""

import os

from setuptools import Extension, setup

extensions = []
if not os.environ.get("TUBESEG_SKIP_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize

        extensions = cythonize(
            [
                Extension(
                    "tubeseg.autodiff._convext",
                    ["src/tubeseg/autodiff/_convext.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        extensions = []

setup(ext_modules=extensions)
