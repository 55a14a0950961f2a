"""Build the optional compiled kernels.

The package works without them; ``confdeficit._kernels`` falls back to numpy
implementations when the extension is missing.
"""
import numpy as np
from Cython.Build import cythonize
from setuptools import setup
from setuptools.extension import Extension

extensions = [
    Extension(
        "confdeficit._ckernels",
        ["src/confdeficit/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
    )
]

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}))
