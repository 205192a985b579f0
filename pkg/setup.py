"""Build script for the compiled matcore kernels.

The extension is optional: if it fails to compile, the package installs
without it and ``dsrc.matcore`` falls back to the pure-Python kernels.
"""
import os
import sys

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# -ffp-contract=off keeps multiply and add separately rounded; the kernels'
# bit-exactness against the naive product depends on it.
compile_args = ["-O3", "-ffp-contract=off"]
if not os.environ.get("DSRC_PORTABLE"):
    compile_args.append("-march=native")
link_args = []
if sys.platform != "win32" and not os.environ.get("DSRC_NO_OPENMP"):
    compile_args.append("-fopenmp")
    link_args.append("-fopenmp")

extensions = [
    Extension(
        "dsrc.matcore._kernels",
        ["src/dsrc/matcore/_kernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=compile_args,
        extra_link_args=link_args,
        optional=True,
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": 3}),
)
