import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# `python setup.py build_ext --inplace` rebuilds the kernels in place
ext_modules = [
    Extension(
        "qamine._kernels",
        sources=["src/qamine/_kernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
    )
]

setup(ext_modules=cythonize(ext_modules, language_level=3))
