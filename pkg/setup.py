"""Builds the optional Cython convolution kernels.

The package works without the extension (a numpy fallback is selected at
import time), so a failed build is not fatal for `pip install`.
"""
import numpy as np
from setuptools import Extension, setup
from Cython.Build import cythonize

extensions = [
    Extension(
        "hypercut.diffcore._convkernels",
        ["src/hypercut/diffcore/_convkernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
