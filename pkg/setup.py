import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("HV3D_NO_EXT", "") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:  # the numpy fallback is used at runtime
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "hv3d._kernels",
                    ["src/hv3d/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3", "-march=native", "-ffast-math"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
