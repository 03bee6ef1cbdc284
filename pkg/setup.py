"""Build script: compiles the optional speedup extension when Cython and a
C compiler are present.  The package works without it (pure-Python fallback
selected at import time), so any build failure here downgrades to a warning
instead of failing the install.  Set BIOANN_NO_EXT=1 to skip the extension."""

import os
import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, broken toolchain, ...
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(
            f"warning: building bioann._speedups failed ({exc}); "
            "falling back to the pure-Python kernels",
            file=sys.stderr,
        )


ext_modules = []
if os.environ.get("BIOANN_NO_EXT", "") not in ("1", "true", "yes"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "bioann._speedups",
                    ["src/bioann/_speedups.pyx"],
                    include_dirs=[numpy.get_include()],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )
    except ImportError as exc:
        print(f"warning: Cython/numpy unavailable ({exc}); skipping extension", file=sys.stderr)

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
