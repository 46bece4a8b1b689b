"""Build script: compiles the optional speedup extension when a toolchain exists.

The package is fully functional without the extension; `specforge._kernels`
falls back to the pure-Python implementations at import time.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("SPECFORGE_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "specforge._kernels._speedups",
                    ["src/specforge/_kernels/_speedups.pyx"],
                    extra_compile_args=["-O3"],
                    optional=True,
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
