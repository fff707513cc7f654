import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

ext = Extension(
    "texcamo._kernels",
    ["src/texcamo/_kernels.pyx"],
    include_dirs=[np.get_include()],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    # keep float results identical to the pure-Python fallback
    extra_compile_args=["-O2", "-ffp-contract=off"],
)

setup(ext_modules=cythonize([ext], language_level=3))
