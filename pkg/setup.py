"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (numpy fallback is selected at
import time), so a missing or broken toolchain only costs speed.
"""

import numpy
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # toolchain missing
            print(f"warning: skipping native kernels ({exc}); numpy fallback will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: skipping {ext.name} ({exc}); numpy fallback will be used")


def extensions():
    from Cython.Build import cythonize

    ext = Extension(
        "vbforce.kernels._native",
        ["src/vbforce/kernels/_native.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
