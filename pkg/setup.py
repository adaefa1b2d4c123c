"""Build script for the optional compiled kernel core.

The package works without the extension (numpy fallback); set
SHEARBC_NO_EXT=1 to skip the build explicitly.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("SHEARBC_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "shearbc.kernels._ck",
                    ["src/shearbc/kernels/_ck.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level="3",
        )
    except Exception as exc:  # pragma: no cover - build-env dependent
        print(f"shearbc: compiled kernels skipped ({exc}); using numpy fallback")
        ext_modules = []

setup(ext_modules=ext_modules)
