"""Build script for the optional compiled kernels.

The package works without the extension (a NumPy fallback is selected at
import time), so the build is marked optional: a missing compiler degrades
to the pure-Python path instead of failing the install.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "kblab._kernels",
                ["src/kblab/_kernels.pyx"],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
