import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # build without the compiled kernel
    cythonize = None

ext_modules = []
if cythonize is not None and os.environ.get("RISKBOUNDS_NO_EXT", "") in ("", "0"):
    ext_modules = cythonize(
        [Extension("riskbounds._ckernels", ["src/riskbounds/_ckernels.pyx"],
                   include_dirs=[np.get_include()],
                   extra_compile_args=["-O3"])],
        language_level=3,
    )

setup(ext_modules=ext_modules)
