"""Build script for the optional compiled step-loop kernel.

The package is fully functional without the extension (a pure-Python twin
is selected at import time); set SMDLAB_SKIP_EXT=1 to force a pure build.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("SMDLAB_SKIP_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            ["src/smdlab/_kernels/_fastloop.pyx"],
            compiler_directives={"language_level": "3"},
        )
        for ext in ext_modules:
            ext.include_dirs.append(numpy.get_include())
            ext.extra_compile_args = ["-O3"]
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
