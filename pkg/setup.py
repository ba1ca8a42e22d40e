"""Build script: compiles the optional Cython kernel core.

The package is fully functional without the extension (a NumPy fallback is
selected at import time), so a failed compile downgrades to a warning
instead of aborting the install.
"""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the extension if possible, otherwise install pure-Python."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            sys.stderr.write(
                "warning: compiled kernels unavailable (%s); "
                "falling back to the NumPy backend\n" % exc
            )

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            sys.stderr.write(
                "warning: building %s failed (%s); "
                "falling back to the NumPy backend\n" % (ext.name, exc)
            )


def extensions():
    from Cython.Build import cythonize

    ext = Extension(
        "mfgtorus._kernels._compiled",
        ["src/mfgtorus/_kernels/_compiled.pyx"],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    return cythonize([ext], language_level=3)


setup(
    ext_modules=extensions(),
    cmdclass={"build_ext": OptionalBuildExt},
)
