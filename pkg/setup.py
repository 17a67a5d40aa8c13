import os

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install, kernels fall back at import
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("RLENSEMBLE_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "rlensemble._kernels",
                ["src/rlensemble/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
