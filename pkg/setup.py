"""Build script for the optional compiled kernel extension.

The package works without the extension (a numpy fallback is selected at
import time); set UNIRQR_SKIP_EXTENSION=1 to skip compilation entirely.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the extension if possible, otherwise continue without it."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover - toolchain-dependent
            print(f"warning: compiled kernels unavailable ({exc}); "
                  "using pure-python fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover - toolchain-dependent
            print(f"warning: could not build {ext.name} ({exc}); "
                  "using pure-python fallback")


def extensions():
    if os.environ.get("UNIRQR_SKIP_EXTENSION") == "1":
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:  # pragma: no cover - build-requires usually present
        return []
    ext = Extension(
        "unirqr._kernels",
        ["src/unirqr/_kernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
